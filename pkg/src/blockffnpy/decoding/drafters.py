# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Draft proposers for speculative decoding."""
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from blockffnpy.common import ConfigError, ContractViolation, DraftPolicy, parse_kind
from blockffnpy.decoding.greedy import greedy_decode
from blockffnpy.decoding.target import TargetModel


@dataclass(frozen=True)
class DraftBatch:
    """The current context and n proposed continuation tokens."""
    context: Tuple[int, ...]
    drafts: Tuple[int, ...]

    @property
    def n(self) -> int:
        """Number of drafts."""
        return len(self.drafts)


class Drafter:
    """Base class of all draft proposers."""
    policy: DraftPolicy

    def propose(self, context: Sequence[int], n: int) -> List[int]:
        """Return n draft tokens continuing ``context``."""
        raise NotImplementedError


class SelfGreedyDrafter(Drafter):
    """The target model itself, decoded greedily: every draft is accepted."""
    policy = DraftPolicy.SELF_GREEDY

    def __init__(self, model: TargetModel):
        self.model = model

    def propose(self, context: Sequence[int], n: int) -> List[int]:
        return greedy_decode(self.model, context, n)


def _most_common(counter: Counter) -> int:
    # highest count, then lowest token id
    return min(counter.items(), key=lambda item: (-item[1], item[0]))[0]


class NgramDrafter(Drafter):
    """
    Most frequent continuation of the longest matching suffix (up to
    ``order - 1`` tokens) seen in a corpus, backing off to shorter suffixes
    and finally to the most frequent token.
    """
    policy = DraftPolicy.NGRAM

    def __init__(self, corpus: Sequence[int], order: int = 3):
        if order < 1:
            raise ConfigError("n-gram order must be at least 1")
        corpus = [int(token) for token in corpus]
        if not corpus:
            raise ConfigError("n-gram drafter needs a non-empty corpus")
        self.order = order
        self.unigram = _most_common(Counter(corpus))
        self._tables: Dict[int, Dict[tuple, int]] = {}
        for length in range(1, order):
            counts = defaultdict(Counter)
            for end in range(length, len(corpus)):
                counts[tuple(corpus[end - length:end])][corpus[end]] += 1
            self._tables[length] = {key: _most_common(counter) for key, counter in counts.items()}

    def predict(self, context: Sequence[int]) -> int:
        """The next token after ``context``."""
        for length in range(min(self.order - 1, len(context)), 0, -1):
            token = self._tables[length].get(tuple(context[-length:]))
            if token is not None:
                return token
        return self.unigram

    def propose(self, context: Sequence[int], n: int) -> List[int]:
        sequence = list(context)
        for _ in range(n):
            sequence.append(self.predict(sequence))
        return sequence[len(context):]


class RandomDrafter(Drafter):
    """Uniform random tokens from the vocabulary."""
    policy = DraftPolicy.RANDOM

    def __init__(self, vocab_size: int, seed: int = 0):
        if vocab_size < 1:
            raise ConfigError("vocab_size must be positive")
        self.vocab_size = vocab_size
        self.rng = np.random.default_rng(seed)

    def propose(self, context: Sequence[int], n: int) -> List[int]:
        return [int(token) for token in self.rng.integers(0, self.vocab_size, size=n)]


def build_drafter(policy, model: Optional[TargetModel] = None,
                  corpus: Optional[Sequence[int]] = None, order: int = 3,
                  seed: int = 0) -> Drafter:
    """Construct the drafter for a policy name or member."""
    policy = parse_kind(DraftPolicy, policy)
    if policy is DraftPolicy.SELF_GREEDY:
        if model is None:
            raise ConfigError("self_greedy drafting needs the target model")
        return SelfGreedyDrafter(model)
    if policy is DraftPolicy.NGRAM:
        if corpus is None:
            raise ConfigError("ngram drafting needs a corpus")
        return NgramDrafter(corpus, order)
    if model is None:
        raise ConfigError("random drafting needs the target model for its vocabulary")
    return RandomDrafter(model.vocab_size, seed)


def propose_drafts(context: Sequence[int], drafter: Drafter, n: int) -> DraftBatch:
    """Ask ``drafter`` for n tokens continuing ``context``."""
    if not isinstance(drafter, Drafter):
        raise ConfigError(f"Unknown draft policy {drafter!r}")
    if not context:
        raise ContractViolation("drafting needs a non-empty context")
    if n < 1:
        raise ContractViolation("n must be at least 1")
    drafts = drafter.propose(context, n)
    if len(drafts) != n:
        raise ContractViolation(f"{drafter.policy.name.lower()} proposed {len(drafts)} of {n} drafts")
    return DraftBatch(tuple(int(t) for t in context), tuple(int(t) for t in drafts))
