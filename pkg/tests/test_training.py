# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from blockffnpy.cli import main
from blockffnpy.common import ConfigError, ContractViolation, RouterKind, SparsifierKind
from blockffnpy.numerics import GradTape, Variable
from blockffnpy.training import (
    METRICS_HEADER,
    AblationArm,
    AblationRow,
    AdamW,
    CheckpointError,
    EmptyHeldoutError,
    IngestError,
    OptimConfig,
    ToyLM,
    TrainConfig,
    Trainer,
    TrainingDiverged,
    calibrate_arm,
    clip_grad_norm,
    config_from_dict,
    config_to_json,
    decode,
    decode_checkpoint,
    encode,
    encode_checkpoint,
    ingest,
    learning_rate,
    load_config,
    load_model,
    model_perplexity,
    model_shapes,
    parse_matrix,
    run_ablation,
    save_checkpoint,
    train,
    write_report,
)

from conftest import CORPUS_TEXT, tiny_model_config, tiny_train_config

TOY_TOML = """
seed = 3

[model]
n_layers = 1
context_length = 16
n_heads = 2

[model.ffn]
d_h = 16
d_e = 4
n_experts = 8
router_kind = "topk_softmax"
k = 2

[objective]
sparsifier = "l1"
lambda_cs0 = 0.01

[data]
steps = 5
"""


def _read_metrics(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _saved_model(tmp_path, dtype=np.float32, **overrides):
    config = TrainConfig(model=tiny_model_config(**overrides))
    model = ToyLM.init(config.model, np.random.default_rng(5), dtype=dtype)
    return model, save_checkpoint(tmp_path / "model.ckpt", config, model.tensors, 0)


# Configuration

def test_load_config(tmp_path):
    path = tmp_path / "toy.toml"
    path.write_text(TOY_TOML, encoding="utf-8")
    config = load_config(path)
    assert config.seed == 3
    assert config.model.n_layers == 1
    assert config.model.ffn.router_kind is RouterKind.TOPK_SOFTMAX
    assert config.objective.sparsifier is SparsifierKind.L1
    assert config.objective.lambda_al == 2e-3
    assert config.data.steps == 5


@pytest.mark.parametrize("text, message", [
    ("[model]\nwidth = 3\n", "Unknown keys in \\[model\\]"),
    ("colour = 1\n", "Unknown keys in \\[top level\\]"),
    ("[data]\nsteps = \"ten\"\n", "data.steps must be an integer"),
    ("[data]\nsteps = true\n", "data.steps must be an integer"),
    ("[optim]\nlr = \"fast\"\n", "optim.lr must be a number"),
    ("[model.ffn]\nrouter_kind = \"moe\"\n", "Unknown RouterKind"),
    ("[model]\nffn = 3\n", "must be a table"),
    ("[data\n", "Invalid TOML"),
])
def test_load_config_errors(tmp_path, text, message):
    path = tmp_path / "bad.toml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError, match=message):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_config_json_round_trip(train_config):
    text = config_to_json(train_config)
    assert config_from_dict(json.loads(text)) == train_config
    assert json.loads(text)["model"]["ffn"]["router_kind"] == "relu_rmsnorm"


def test_context_must_hold_a_chunk():
    with pytest.raises(ConfigError):
        TrainConfig(model=tiny_model_config(context_length=4))


# Tokenizer

def test_tokenizer_examples(tmp_path):
    assert encode("ab").tolist() == [97, 98]
    assert decode([104, 105, 256]) == "hi"
    empty = tmp_path / "empty.txt"
    empty.write_bytes(b"")
    assert ingest(empty).size == 0
    text = tmp_path / "text.txt"
    text.write_text("été", encoding="utf-8")
    assert decode(ingest(text)) == "été"
    assert ingest(text).size == 5
    with pytest.raises(IngestError):
        ingest(tmp_path / "absent.txt")


# Model

def test_model_shapes_and_validation(tiny_model):
    shapes = model_shapes(tiny_model.config)
    names = list(shapes)
    assert names[0] == "tok_emb" and names[-1] == "w_out"
    assert shapes["layer1.ffn.w_up"] == (16, 32)
    assert shapes["layer0.ffn.router_gain"] == (1, 8)
    tensors = dict(tiny_model.tensors)
    del tensors["final_norm"]
    with pytest.raises(ContractViolation):
        ToyLM(tiny_model.config, tensors)
    with pytest.raises(ContractViolation):
        tiny_model.forward(list(range(17)))


def test_taped_forward_matches_inference_forward(tiny_model):
    tokens = encode("the lazy dog")
    tape = GradTape()
    variables = {name: Variable(value) for name, value in tiny_model.tensors.items()}
    logits, activations = tiny_model.forward_taped(tape, variables, tokens[None, :])
    result = tiny_model.forward(tokens)
    np.testing.assert_allclose(logits.value, result.logits, rtol=1e-9, atol=1e-12)
    for taped, plain in zip(activations, result.activations):
        np.testing.assert_allclose(taped.a.value, plain.a, rtol=1e-9, atol=1e-12)


def test_sparse_chunk_forward_returns_plans(tiny_model):
    tokens = encode("jumps over")
    result = tiny_model.forward(tokens, sparse_from=6)
    assert len(result.plans) == tiny_model.n_layers
    assert all(plan.n_tokens == 4 for plan in result.plans)
    np.testing.assert_allclose(result.logits, tiny_model.forward(tokens).logits,
                               rtol=1e-10, atol=1e-12)
    with pytest.raises(ContractViolation):
        tiny_model.forward(tokens, sparse_from=10)


# Optimisation

def test_learning_rate_schedule():
    config = OptimConfig(lr=1.0, warmup_steps=10, stable_steps=20, decay_steps=10)
    assert learning_rate(5, config) == 0.5
    assert learning_rate(10, config) == 1.0
    assert learning_rate(30, config) == 1.0
    assert learning_rate(35, config) == 0.5
    assert learning_rate(40, config) == 0.0
    assert learning_rate(41, config) == 0.0


def test_clip_grad_norm():
    grads = {"a": np.array([[3.0, 4.0]])}
    assert clip_grad_norm(grads, 1.0) == 5.0
    np.testing.assert_allclose(grads["a"], [[0.6, 0.8]])
    small = {"a": np.array([[0.3, 0.4]])}
    assert clip_grad_norm(small, 1.0) == pytest.approx(0.5)
    np.testing.assert_array_equal(small["a"], [[0.3, 0.4]])


def test_adamw_first_step_moves_by_lr():
    optimizer = AdamW(OptimConfig(weight_decay=0.5))
    params = {"w": np.ones((2, 2)), "gain": np.ones((1, 2))}
    grads = {"w": np.array([[2.0, -3.0], [0.5, -0.5]]), "gain": np.array([[1.0, -1.0]])}
    optimizer.step(params, grads, lr=0.1)
    np.testing.assert_allclose(params["w"], 0.95 - 0.1 * np.sign(grads["w"]), rtol=1e-6)
    np.testing.assert_allclose(params["gain"], [[0.9, 1.1]], rtol=1e-6)


# Checkpoints

def test_checkpoint_round_trip(train_config, tiny_model):
    data = encode_checkpoint(train_config, tiny_model.tensors, 42)
    checkpoint = decode_checkpoint(data)
    assert checkpoint.step == 42
    assert checkpoint.config == train_config
    assert list(checkpoint.tensors) == list(tiny_model.tensors)
    for name, value in tiny_model.tensors.items():
        np.testing.assert_array_equal(checkpoint.tensors[name], value.astype(np.float32))
    assert encode_checkpoint(checkpoint.config, checkpoint.tensors, checkpoint.step) == data


def test_checkpoint_corruption_is_detected(train_config, tiny_model):
    data = bytearray(encode_checkpoint(train_config, tiny_model.tensors, 1))
    with pytest.raises(CheckpointError, match="Bad magic"):
        decode_checkpoint(b"NOTACKPT" + bytes(data[8:]))
    payload = bytearray(data)
    payload[-10] ^= 0x01
    with pytest.raises(CheckpointError, match="Payload CRC"):
        decode_checkpoint(bytes(payload))
    header = bytearray(data)
    header[20] ^= 0x01
    with pytest.raises(CheckpointError, match="Header CRC"):
        decode_checkpoint(bytes(header))
    with pytest.raises(CheckpointError):
        decode_checkpoint(bytes(data[:12]))


# Training

def test_training_is_reproducible(train_config):
    out_dir = train_config.data.out_dir
    first = train(train_config)
    metrics = first.metrics_path.read_bytes()
    checkpoint = first.final_checkpoint.read_bytes()
    second = train(train_config)
    assert second.metrics_path.read_bytes() == metrics
    assert second.final_checkpoint.read_bytes() == checkpoint
    assert str(second.final_checkpoint).startswith(out_dir)


def test_training_writes_metrics_and_checkpoints(train_config, tmp_path):
    result = train(train_config)
    rows = _read_metrics(result.metrics_path)
    assert tuple(rows[0]) == METRICS_HEADER
    assert [int(row["step"]) for row in rows] == list(range(5, 61, 5))
    assert float(rows[0]["lambda_cs"]) == 0.05
    assert all(0.0 <= float(row["L_cs"]) <= 1.0 for row in rows)
    assert all(float(row["cls8"]) <= float(row["tls"]) for row in rows)
    assert (tmp_path / "run" / "step000030.ckpt").exists()
    assert not (tmp_path / "run" / "step000060.ckpt").exists()
    assert load_model(result.final_checkpoint).n_layers == 2


def test_null_objective_logs_zero_factor(corpus_file, tmp_path):
    config = tiny_train_config(corpus_file, tmp_path / "null", steps=20, al_enabled=False,
                               sparsifier="none")
    rows = _read_metrics(train(config).metrics_path)
    assert {row["lambda_cs"] for row in rows} == {"0"}
    assert all(float(row["L_al"]) >= 0.0 for row in rows)


def test_zero_factors_match_disabled_terms(corpus_file, tmp_path):
    disabled = tiny_train_config(corpus_file, tmp_path / "off", steps=25, al_enabled=False,
                                 sparsifier="none")
    zeroed = tiny_train_config(corpus_file, tmp_path / "zero", steps=25, lambda_al=0.0,
                               lambda_cs0=0.0)
    first, second = train(disabled).model, train(zeroed).model
    for name, value in first.tensors.items():
        np.testing.assert_array_equal(second.tensors[name], value)


def test_divergence_saves_diagnostic_checkpoint(train_config, tmp_path):
    trainer = Trainer(train_config)
    trainer.model.tensors["w_out"][0, 0] = np.nan
    with pytest.raises(TrainingDiverged):
        trainer.step()
    assert (tmp_path / "run" / "diverged.ckpt").exists()


def test_short_corpus_is_rejected(train_config):
    with pytest.raises(ConfigError):
        Trainer(train_config, corpus=encode("too short"))


def test_training_reduces_perplexity(train_config):
    config = replace(train_config, data=replace(train_config.data, steps=100))
    config = replace(config, optim=replace(config.optim, stable_steps=80))
    model = train(config).model
    assert model_perplexity(model, encode(CORPUS_TEXT[:400])) < 64.0


# Evaluation and reports

def test_uniform_model_has_vocabulary_perplexity(tmp_path):
    model, _ = _saved_model(tmp_path, dtype=np.float64, vocab_size=256)
    model.tensors["w_out"][:] = 0.0
    tokens = encode(CORPUS_TEXT[:100])
    assert model_perplexity(model, tokens) == pytest.approx(256.0, rel=1e-9)
    assert model_perplexity(model, tokens) == model_perplexity(model, tokens)
    with pytest.raises(EmptyHeldoutError):
        model_perplexity(model, encode("a"))


def test_report_files(tmp_path):
    _, checkpoint = _saved_model(tmp_path)
    data = tmp_path / "data.txt"
    data.write_text(CORPUS_TEXT[:1024], encoding="utf-8")
    artifacts = write_report(checkpoint, data, tmp_path / "report")

    sparsity = json.loads(artifacts.sparsity_json.read_text(encoding="utf-8"))
    assert len(sparsity["layers"]) == 2
    assert sparsity["mean"]["token_count"] == 1024
    assert sparsity["mean"]["cls"]["1"] == pytest.approx(sparsity["mean"]["tls"])

    with open(artifacts.cls_curve_csv, newline="", encoding="utf-8") as handle:
        curve = list(csv.DictReader(handle))
    assert [int(row["L"]) for row in curve] == [1, 2, 4, 8, 16, 32]
    for column in ("layer0", "layer1", "mean"):
        values = [float(row[column]) for row in curve]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))

    with open(artifacts.allocation_csv, newline="", encoding="utf-8") as handle:
        allocation = list(csv.DictReader(handle))
    assert sum(int(row["frequency"]) for row in allocation) == 1024
    assert all(0.0 <= float(row["mean_ratio"]) <= 1.0 for row in allocation)
    assert artifacts.magnitude_csv.read_text(encoding="utf-8").startswith("layer,magnitude")


# Command line

def test_cli_eval_and_errors(tmp_path, capsys):
    _, checkpoint = _saved_model(tmp_path)
    data = tmp_path / "heldout.txt"
    data.write_text(CORPUS_TEXT[:200], encoding="utf-8")
    assert main(["eval", "--ckpt", str(checkpoint), "--data", str(data)]) == 0
    assert float(capsys.readouterr().out.strip()) > 1.0
    assert main(["eval", "--ckpt", str(tmp_path / "absent.ckpt"), "--data", str(data)]) == 1
    empty = tmp_path / "empty.txt"
    empty.write_bytes(b"")
    assert main(["eval", "--ckpt", str(checkpoint), "--data", str(empty)]) == 1


def test_cli_report_on_empty_data(tmp_path):
    _, checkpoint = _saved_model(tmp_path)
    empty = tmp_path / "empty.txt"
    empty.write_bytes(b"")
    with pytest.raises(EmptyHeldoutError):
        write_report(checkpoint, empty, tmp_path / "direct")
    assert main(["report", "--ckpt", str(checkpoint), "--data", str(empty),
                 "--out", str(tmp_path / "report")]) == 1
    assert not (tmp_path / "report" / "sparsity.json").exists()


def test_cli_spec_decode(tmp_path, capsys):
    _, checkpoint = _saved_model(tmp_path)
    assert main(["spec-decode", "--ckpt", str(checkpoint), "--prompt", "the",
                 "--n", "3", "--max-tokens", "8"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["tokens_generated"] == 8
    assert stats["mean_accepted_length"] == 3.0
    assert main(["spec-decode", "--ckpt", str(checkpoint), "--prompt", "the",
                 "--policy", "ngram"]) == 1


def test_cli_bench_kernel(tmp_path):
    config = tmp_path / "toy.toml"
    config.write_text(TOY_TOML.replace('router_kind = "topk_softmax"', ""), encoding="utf-8")
    out = tmp_path / "bench" / "bench.csv"
    assert main(["bench-kernel", "--config", str(config), "--densities", "0,1", "--n", "8",
                 "--repeats", "1", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "density,n,d_h,d_e,N_e,sparse_ns,dense_ns,bytes_ratio"
    assert len(lines) == 3


def test_cli_train(corpus_file, tmp_path):
    config = tmp_path / "toy.toml"
    config.write_text(TOY_TOML + f'corpus = "{corpus_file.as_posix()}"\n'
                      f'out_dir = "{(tmp_path / "cli").as_posix()}"\n', encoding="utf-8")
    assert main(["train", "--config", str(config)]) == 0
    assert (tmp_path / "cli" / "final.ckpt").exists()
    assert main(["train", "--config", str(tmp_path / "absent.toml")]) == 1


# Ablations

def test_parse_matrix():
    assert parse_matrix("null, AL+CS,l1:0.005") == [
        AblationArm("null"), AblationArm("al+cs"), AblationArm("l1", 0.005)]
    assert parse_matrix("l1:0.005")[0].dirname == "l1_0.005"
    assert AblationArm("al+cs").dirname == "al_cs"
    assert AblationArm("cs").sparsified and not AblationArm("al").sparsified
    for bad in ("null,moe", " , ", "l1:abc", "cs:-1"):
        with pytest.raises(ConfigError):
            parse_matrix(bad)


def test_small_ablation(corpus_file, tmp_path):
    config = tiny_train_config(corpus_file, tmp_path / "unused", steps=20)
    rows = run_ablation(config, parse_matrix("null,al+cs,l1:0.005"), tmp_path / "ablation")
    assert [row.kind for row in rows] == ["null", "al+cs", "l1"]
    assert [row.lambda_cs0 for row in rows] == [None, 0.05, 0.005]
    assert all(row.ppl > 1.0 for row in rows)
    assert (tmp_path / "ablation" / "al_cs" / "final.ckpt").exists()
    assert (tmp_path / "ablation" / "l1_0.005" / "final.ckpt").exists()
    lines = (tmp_path / "ablation" / "ablation.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "kind,lambda_cs0,tls,cls8,reuse,ppl"
    assert lines[1].startswith("null,,")
    assert len(lines) == 4


def _factor_driven_measure(config, arm, corpus, heldout):
    factor = config.objective.lambda_cs0
    tls = factor / (factor + 0.01) if arm.sparsified else 0.5
    return AblationRow(arm.kind, factor if arm.sparsified else None, tls, tls / 2, None, 2.0)


def test_calibration_matches_a_common_tls(corpus_file, tmp_path, monkeypatch):
    monkeypatch.setattr("blockffnpy.training.ablation.measure_arm", _factor_driven_measure)
    config = tiny_train_config(corpus_file, tmp_path / "unused")
    rows = run_ablation(config, parse_matrix("null,cs,l1:0.005,al+cs"), tmp_path / "abl",
                        match_tls=0.3, rounds=8)
    by_kind = {row.kind: row for row in rows}
    assert by_kind["null"].tls == 0.5
    assert by_kind["l1"].lambda_cs0 == 0.005
    for kind in ("cs", "al+cs"):
        assert by_kind[kind].tls == pytest.approx(0.8, abs=0.025)
        assert by_kind[kind].lambda_cs0 == pytest.approx(0.04, rel=0.2)

    row = calibrate_arm(config, AblationArm("l1"), 0.2, None, None, tmp_path / "cal",
                        tolerance=0.01, rounds=12)
    assert row.tls == pytest.approx(0.2, abs=0.01)
    with pytest.raises(ConfigError):
        calibrate_arm(config, AblationArm("null"), 0.5, None, None, tmp_path / "cal")
    with pytest.raises(ConfigError):
        calibrate_arm(config, AblationArm("cs"), 1.5, None, None, tmp_path / "cal")


def test_cli_ablate(corpus_file, tmp_path, capsys, monkeypatch):
    monkeypatch.setattr("blockffnpy.training.ablation.measure_arm", _factor_driven_measure)
    config = tmp_path / "toy.toml"
    config.write_text(TOY_TOML + f'corpus = "{corpus_file.as_posix()}"\n'
                      f'out_dir = "{(tmp_path / "run").as_posix()}"\n', encoding="utf-8")
    assert main(["ablate", "--config", str(config), "--matrix", "null,cs",
                 "--match-tls", "0.2", "--out", str(tmp_path / "abl")]) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert printed[0].startswith("null,,0.500000")
    assert float(printed[1].split(",")[2]) == pytest.approx(0.7, abs=0.025)
    assert main(["ablate", "--config", str(config), "--matrix", "null,moe"]) == 1


@pytest.mark.slow
def test_ablation_orderings(corpus_file, tmp_path):
    base = load_config(Path(__file__).resolve().parents[1] / "configs" / "toy.toml")
    config = replace(
        base,
        optim=replace(base.optim, stable_steps=1000),
        data=replace(base.data, corpus=str(corpus_file), heldout="", steps=1200,
                     checkpoint_interval=1200, out_dir=str(tmp_path / "unused")),
    )
    assert (config.model.n_layers, config.model.ffn.d_h, config.model.ffn.n_experts) == (2, 64, 16)
    rows = {row.kind: row for row in run_ablation(config, parse_matrix("null,cs,l1,al+cs"),
                                                  tmp_path / "abl", match_tls=0.15)}
    null, cs, l1, al_cs = rows["null"], rows["cs"], rows["l1"], rows["al+cs"]
    assert null.tls + 0.10 <= min(cs.tls, l1.tls, al_cs.tls)
    assert abs(al_cs.tls - l1.tls) <= 0.05
    assert al_cs.cls8 >= l1.cls8 + 0.05
    assert al_cs.cls8 > cs.cls8
    assert al_cs.reuse > null.reuse
