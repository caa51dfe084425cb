# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Held-out perplexity."""
import logging
import math
from pathlib import Path
from typing import Iterator, Tuple

import numpy as np

from blockffnpy.training.checkpoint import load_checkpoint
from blockffnpy.training.model import ToyLM
from blockffnpy.training.tokenizer import ingest

_log = logging.getLogger(__name__)


class EmptyHeldoutError(ValueError):
    """The held-out data has no next-token pair to score."""


def prediction_windows(tokens: np.ndarray, context_length: int) -> Iterator[Tuple[np.ndarray,
                                                                                 np.ndarray]]:
    """
    Consecutive (inputs, targets) windows; every token after the first is
    predicted exactly once.
    """
    start = 0
    while start < tokens.size - 1:
        window = tokens[start:start + context_length + 1]
        yield window[:-1], window[1:]
        start += context_length


def model_perplexity(model: ToyLM, tokens: np.ndarray) -> float:
    """exp of the mean next-token negative log likelihood."""
    tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if tokens.size < 2:
        raise EmptyHeldoutError("held-out data needs at least two tokens")
    nll, count = 0.0, 0
    for inputs, targets in prediction_windows(tokens, model.context_length):
        logits = model.forward(inputs).logits.astype(np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        nll -= float(log_probs[np.arange(targets.size), targets].sum())
        count += targets.size
    return math.exp(nll / count)


def load_model(path: Path) -> ToyLM:
    """The model stored in a checkpoint."""
    checkpoint = load_checkpoint(path)
    return ToyLM(checkpoint.config.model, checkpoint.tensors)


def evaluate_ppl(checkpoint_path: Path, heldout_path: Path) -> float:
    """Perplexity of a checkpoint on a held-out corpus file."""
    ppl = model_perplexity(load_model(checkpoint_path), ingest(heldout_path))
    _log.info("Perplexity of %s on %s: %.4f", checkpoint_path, heldout_path, ppl)
    return ppl
