# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
import json

import numpy as np
import pytest

from blockffnpy.common import ConfigError, ContractViolation, DraftPolicy
from blockffnpy.decoding import (
    DraftBatch,
    NgramDrafter,
    RandomDrafter,
    build_drafter,
    decode_loop,
    dense_bytes_per_token,
    greedy_decode,
    propose_drafts,
    verify_chunk,
)
from blockffnpy.training import encode, train

from conftest import CORPUS_TEXT, tiny_train_config


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    """The tiny model after a short run on the repetitive corpus."""
    root = tmp_path_factory.mktemp("trained")
    corpus = root / "corpus.txt"
    corpus.write_text(CORPUS_TEXT, encoding="utf-8")
    return train(tiny_train_config(corpus, root / "run", steps=200)).model.astype(np.float64)


def _random_prompts(count=20, seed=0):
    rng = np.random.default_rng(seed)
    corpus = encode(CORPUS_TEXT)
    for _ in range(count):
        length = int(rng.integers(1, 5))
        start = int(rng.integers(0, corpus.size - length))
        yield [int(token) for token in corpus[start:start + length]]


def _drafter(policy, model):
    return build_drafter(policy, model=model, corpus=encode(CORPUS_TEXT), order=3, seed=11)


def test_drafter_construction_errors(tiny_model):
    with pytest.raises(ConfigError):
        build_drafter("beam", model=tiny_model)
    with pytest.raises(ConfigError):
        build_drafter("ngram")
    with pytest.raises(ConfigError):
        build_drafter("self_greedy")
    with pytest.raises(ConfigError):
        NgramDrafter([], order=3)
    with pytest.raises(ConfigError):
        propose_drafts([1, 2], "ngram", 3)


def test_propose_drafts_contract(tiny_model):
    drafter = RandomDrafter(tiny_model.vocab_size, seed=0)
    with pytest.raises(ContractViolation):
        propose_drafts([], drafter, 2)
    with pytest.raises(ContractViolation):
        propose_drafts([5], drafter, 0)
    batch = propose_drafts([5, 6], drafter, 32)
    assert batch.n == 32
    assert batch.context == (5, 6)
    assert all(0 <= token < tiny_model.vocab_size for token in batch.drafts)


def test_random_drafter_is_seeded():
    first = RandomDrafter(257, seed=4).propose([1], 8)
    assert first == RandomDrafter(257, seed=4).propose([1], 8)


def test_ngram_drafter_backs_off():
    drafter = NgramDrafter([1, 2, 3, 1, 2, 4, 1, 2, 3], order=3)
    assert drafter.predict([1, 2]) == 3
    assert drafter.predict([9, 2]) == 3
    assert drafter.predict([9, 9]) == 1
    assert drafter.propose([3, 1], 3) == [2, 3, 1]


def test_ngram_ties_go_to_the_lower_token():
    drafter = NgramDrafter([5, 7, 5, 6], order=2)
    assert drafter.predict([5]) == 6
    assert drafter.unigram == 5


def test_verify_accepts_the_greedy_continuation(tiny_model):
    context = list(encode("the"))
    greedy = greedy_decode(tiny_model, context, 5)
    result = verify_chunk(tiny_model, DraftBatch(tuple(context), tuple(greedy[:4])))
    assert result.accepted == 4
    assert result.bonus_token == greedy[4]
    assert result.emitted == greedy
    assert len(result.plans) == tiny_model.n_layers
    assert all(plan.n_tokens == 5 for plan in result.plans)


def test_verify_stops_at_the_first_wrong_draft(tiny_model):
    context = list(encode("fox"))
    greedy = greedy_decode(tiny_model, context, 3)
    wrong = (greedy[0] + 1) % tiny_model.vocab_size
    result = verify_chunk(tiny_model, DraftBatch(tuple(context), (wrong, greedy[1], greedy[2])))
    assert result.accepted == 0
    assert result.emitted == [greedy[0]]


@pytest.mark.parametrize("policy", [policy.name.lower() for policy in DraftPolicy])
def test_speculative_decoding_is_lossless(tiny_model, policy):
    drafter = _drafter(policy, tiny_model)
    for tokens in _random_prompts():
        stats = decode_loop(tiny_model, drafter, tokens, max_tokens=12, n=3)
        assert stats.tokens == greedy_decode(tiny_model, tokens, 12)
        assert all(0 <= accepted <= 3 for accepted in stats.accepted_lengths)


def test_self_greedy_accepts_every_draft(tiny_model):
    stats = decode_loop(tiny_model, _drafter("self_greedy", tiny_model), list(encode("the")),
                        max_tokens=12, n=3)
    assert stats.mean_accepted_length == 3.0
    assert stats.median_accepted_length == 3.0
    assert stats.steps == 3
    assert stats.mean_tokens_per_step == 4.0
    assert stats.counted_ffn_bytes <= stats.counted_ffn_bytes_dense_equivalent
    per_token = stats.counted_ffn_bytes / stats.tokens_generated
    assert per_token < dense_bytes_per_token(tiny_model)


def test_ngram_acceptance_lies_between_the_extremes(trained_model):
    drafter = _drafter("ngram", trained_model)
    accepted = []
    for tokens in _random_prompts(count=20, seed=5):
        stats = decode_loop(trained_model, drafter, tokens, max_tokens=12, n=3)
        assert stats.tokens == greedy_decode(trained_model, tokens, 12)
        accepted.extend(stats.accepted_lengths)
    assert 0.0 < float(np.mean(accepted)) < 3.0


def test_random_drafts_cost_more_steps(tiny_model):
    prompt = list(encode("lazy"))
    greedy = decode_loop(tiny_model, _drafter("self_greedy", tiny_model), prompt, 12, 3)
    random = decode_loop(tiny_model, _drafter("random", tiny_model), prompt, 12, 3)
    assert random.steps > greedy.steps
    assert random.tokens == greedy.tokens


def test_decode_loop_edge_cases(tiny_model):
    drafter = _drafter("ngram", tiny_model)
    stats = decode_loop(tiny_model, drafter, [1, 2], max_tokens=0, n=3)
    assert stats.steps == 0
    assert stats.tokens == []
    assert stats.mean_accepted_length is None
    with pytest.raises(ContractViolation, match="exceeds context length"):
        decode_loop(tiny_model, drafter, [1, 2, 3], max_tokens=14, n=3)
    with pytest.raises(ConfigError):
        decode_loop(tiny_model, drafter, [], max_tokens=2, n=3)
    with pytest.raises(ContractViolation, match="exceeds context length"):
        greedy_decode(tiny_model, [1] * 10, 7)


def test_final_step_is_truncated(tiny_model):
    stats = decode_loop(tiny_model, _drafter("self_greedy", tiny_model), [7], max_tokens=6, n=4)
    assert stats.tokens_generated == 6
    assert stats.accepted_lengths == [4, 1]


def test_decode_stats_json(tiny_model):
    stats = decode_loop(tiny_model, _drafter("ngram", tiny_model), list(encode("dog")), 8, 4)
    data = json.loads(stats.to_json())
    assert data["tokens_generated"] == 8
    assert set(data) == {
        "steps", "tokens_generated", "mean_accepted_length", "median_accepted_length",
        "mean_tokens_per_step", "counted_ffn_bytes", "counted_ffn_bytes_dense_equivalent",
        "tokens_per_counted_gigabyte",
    }
    assert data["tokens_per_counted_gigabyte"] == pytest.approx(
        8 * 1e9 / stats.counted_ffn_bytes)


def test_dense_bytes_per_token(tiny_model):
    assert dense_bytes_per_token(tiny_model) == 2 * 8 * 2 * 16 * 4 * 4
    assert dense_bytes_per_token(tiny_model, bytes_per_param=2) == 2 * 8 * 2 * 16 * 4 * 2


def test_verify_rows_match_dense_forward(tiny_model):
    tokens = list(encode("the quick"))
    dense = tiny_model.forward(tokens).logits
    sparse = tiny_model.forward(tokens, sparse_from=5).logits
    np.testing.assert_allclose(sparse, dense, rtol=1e-10, atol=1e-12)
