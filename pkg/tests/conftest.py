# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Shared fixtures: a repetitive toy corpus and a tiny training configuration."""
from pathlib import Path

import numpy as np
import pytest

from blockffnpy.ffn import FfnConfig
from blockffnpy.objectives import ObjectiveConfig
from blockffnpy.training import DataConfig, ModelConfig, OptimConfig, ToyLM, TrainConfig

CORPUS_TEXT = "the quick brown fox jumps over the lazy dog. " * 24


def tiny_model_config(**overrides) -> ModelConfig:
    """Two small layers over bytes."""
    ffn = overrides.pop("ffn", FfnConfig(d_h=16, d_e=4, n_experts=8))
    values = dict(ffn=ffn, n_layers=2, vocab_size=257, context_length=16, n_heads=2)
    values.update(overrides)
    return ModelConfig(**values)


def tiny_train_config(corpus: Path, out_dir: Path, steps: int = 60, **objective) -> TrainConfig:
    """A run that finishes in a few seconds."""
    return TrainConfig(
        model=tiny_model_config(),
        objective=ObjectiveConfig(n_st=20, n_adj=10, **objective),
        optim=OptimConfig(lr=1e-2, warmup_steps=5, stable_steps=max(steps - 20, 0), decay_steps=15),
        data=DataConfig(corpus=str(corpus), batch_size=4, steps=steps, log_interval=5,
                        checkpoint_interval=30, out_dir=str(out_dir)),
        seed=7,
    )


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    """The toy corpus on disk."""
    path = tmp_path / "corpus.txt"
    path.write_text(CORPUS_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def train_config(corpus_file: Path, tmp_path: Path) -> TrainConfig:
    """Tiny configuration writing into the test's temporary directory."""
    return tiny_train_config(corpus_file, tmp_path / "run")


@pytest.fixture
def tiny_model() -> ToyLM:
    """Randomly initialised float64 model for inference tests."""
    return ToyLM.init(tiny_model_config(), np.random.default_rng(3), dtype=np.float64)
