# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
# pylint: disable=R0913
"""
Router regularisers with hand-derived gradients.

Each loss is written once as ``_<name>(...) -> (value, backward)``, where
``backward`` maps the upstream scalar gradient to the gradient of the
input. The plain functions return the value; the ``*_taped`` functions
record the same closure on a GradTape as a fused primitive.

Packed inputs hold consecutive sequences of ``seq_len`` rows; locality
pairs and chunks never cross a sequence boundary.
"""
from typing import Callable, Optional, Tuple

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.numerics import GradTape, Variable, normalize_rows, sigmoid

BCE_CLAMP = 1e-7
ACT_PROB_CLAMP = 1e-6
DEFAULT_ALPHA = 10.0
DEFAULT_CHUNK_LEN = 8

LossParts = Tuple[float, Callable[[float], np.ndarray]]


def _seq_len(rows: int, seq_len: Optional[int]) -> int:
    seq_len = rows if seq_len is None else seq_len
    if seq_len < 1 or rows % seq_len:
        raise ContractViolation(f"{rows} rows cannot be split into sequences of {seq_len}")
    return seq_len


def _check_pattern(a1: np.ndarray) -> None:
    if a1.ndim != 2 or a1.shape[0] < 1:
        raise ContractViolation("activation pattern must be a non-empty 2-D tensor")
    if np.any(a1 < 0):
        raise ContractViolation("activation pattern has negative entries")


def _normalize_backward(a1: np.ndarray, probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    sums = a1.sum(axis=-1, keepdims=True)
    centred = d_probs - (d_probs * probs).sum(axis=-1, keepdims=True)
    return np.where(sums > 0, centred / np.where(sums > 0, sums, 1.0), 0.0)


def _activation_locality(a0: np.ndarray, alpha: float, seq_len: Optional[int],
                         detach_target: bool, tape: Optional[GradTape]) -> LossParts:
    if alpha <= 0:
        raise ContractViolation("alpha must be positive")
    rows = a0.shape[0]
    seq_len = _seq_len(rows, seq_len)
    probs = sigmoid(alpha * a0)
    current = np.array([k for k in range(rows - 1) if k % seq_len != seq_len - 1], dtype=np.int64)
    if current.size == 0:
        return 0.0, lambda g: np.zeros_like(a0)

    pred = probs[current]
    target = probs[current + 1]
    clipped = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    log_p, log_q = np.log(clipped), np.log1p(-clipped)
    terms = -(target * log_p + (1.0 - target) * log_q)
    count = terms.size
    if tape is not None:
        tape.note_kink(np.minimum(np.abs(pred - BCE_CLAMP), np.abs(pred - 1.0 + BCE_CLAMP)))

    def backward(g: float) -> np.ndarray:
        inside = (pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP)
        d_probs = np.zeros_like(probs)
        d_probs[current] += inside * (-(target / clipped) + (1.0 - target) / (1.0 - clipped))
        if not detach_target:
            d_probs[current + 1] += -(log_p - log_q)
        d_probs *= g / count
        return d_probs * alpha * probs * (1.0 - probs)

    return float(terms.mean()), backward


def _chunk_sparsification(a1: np.ndarray, chunk_len: Optional[int], seq_len: Optional[int],
                          tape: Optional[GradTape]) -> LossParts:
    _check_pattern(a1)
    rows, width = a1.shape
    seq_len = _seq_len(rows, seq_len)
    chunk_len = seq_len if chunk_len is None else chunk_len
    if chunk_len < 1 or chunk_len > seq_len:
        raise ContractViolation(f"chunk length {chunk_len} does not fit sequences of {seq_len}")
    per_seq = seq_len // chunk_len
    starts = np.array([s * seq_len + c * chunk_len
                       for s in range(rows // seq_len) for c in range(per_seq)], dtype=np.int64)
    chunk_rows = starts[:, None] + np.arange(chunk_len)[None, :]

    probs = normalize_rows(a1)
    clipped = np.minimum(probs, 1.0 - ACT_PROB_CLAMP)
    log_miss = np.log1p(-clipped)
    log_none = log_miss[chunk_rows].sum(axis=1)
    p_act = 1.0 - np.exp(log_none)
    if tape is not None:
        tape.note_kink(np.abs(probs - 1.0 + ACT_PROB_CLAMP))

    def backward(g: float) -> np.ndarray:
        d_log_none = -np.exp(log_none) * (g / p_act.size)
        d_log_miss = np.zeros_like(probs)
        d_log_miss[chunk_rows] = d_log_none[:, None, :]
        inside = probs < 1.0 - ACT_PROB_CLAMP
        d_probs = np.where(inside, -d_log_miss / (1.0 - clipped), 0.0)
        return _normalize_backward(a1, probs, d_probs)

    return float(p_act.mean()), backward


def _l1(a: np.ndarray) -> LossParts:
    rows = a.shape[0]
    return float(np.abs(a).sum() / rows), lambda g: np.sign(a) * (g / rows)


def _router_entropy(a1: np.ndarray) -> LossParts:
    _check_pattern(a1)
    rows = a1.shape[0]
    probs = normalize_rows(a1)
    live = probs > 0
    logs = np.log(np.where(live, probs, 1.0))
    value = float(-(probs * logs).sum() / rows)

    def backward(g: float) -> np.ndarray:
        d_probs = np.where(live, -(logs + 1.0), 0.0) * (g / rows)
        return _normalize_backward(a1, probs, d_probs)

    return value, backward


def _load_balance(a1: np.ndarray, threshold: float) -> LossParts:
    _check_pattern(a1)
    rows, width = a1.shape
    active = a1 > threshold
    total = active.sum()
    if total == 0:
        return 0.0, lambda g: np.zeros_like(a1)
    share = active.sum(axis=0) / total
    probs = normalize_rows(a1)
    value = float(width * np.sum(share * probs.mean(axis=0)))

    def backward(g: float) -> np.ndarray:
        d_probs = np.broadcast_to(width * share / rows * g, probs.shape)
        return _normalize_backward(a1, probs, d_probs)

    return value, backward


def _taped(tape: GradTape, name: str, var: Variable, parts: LossParts) -> Variable:
    value, backward = parts
    out = np.full((1, 1), value, dtype=var.value.dtype)
    return tape.record(name, (var,), out, lambda g: (backward(float(g[0, 0])).astype(g.dtype),))


def activation_locality_loss(a0: np.ndarray, alpha: float = DEFAULT_ALPHA,
                             seq_len: Optional[int] = None,
                             detach_target: bool = False) -> float:
    """
    Mean BCE between the sharpened activation pattern sigma(alpha * A0) of
    each token (prediction, clamped to [1e-7, 1 - 1e-7]) and that of the
    next token (target). A single token has no pairs and scores 0.
    """
    return _activation_locality(a0, alpha, seq_len, detach_target, None)[0]


def activation_locality_loss_taped(tape: GradTape, a0: Variable, alpha: float = DEFAULT_ALPHA,
                                   seq_len: Optional[int] = None,
                                   detach_target: bool = False) -> Variable:
    """Taped activation locality loss."""
    return _taped(tape, "activation_locality", a0,
                  _activation_locality(a0.value, alpha, seq_len, detach_target, tape))


def chunk_sparsification_loss(a1: np.ndarray, chunk_len: Optional[int] = None,
                              seq_len: Optional[int] = None) -> float:
    """
    Mean probability that an expert is activated by at least one token of
    a chunk: with p_k = A1_k / sum(A1_k) (the zero vector for an inactive
    token), P_i = 1 - exp(sum_k ln(1 - p_ik)).

    Without ``chunk_len`` the whole input is one chunk; otherwise the
    result is averaged over aligned chunks, trailing partial chunks dropped.
    """
    return float(_chunk_sparsification(a1, chunk_len, seq_len, None)[0])


def chunk_sparsification_loss_taped(tape: GradTape, a1: Variable,
                                    chunk_len: Optional[int] = None,
                                    seq_len: Optional[int] = None) -> Variable:
    """Taped chunk sparsification loss."""
    return _taped(tape, "chunk_sparsification", a1,
                  _chunk_sparsification(a1.value, chunk_len, seq_len, tape))


def l1_loss(a: np.ndarray) -> float:
    """Mean over tokens of sum_i |A_i|."""
    return _l1(a)[0]


def l1_loss_taped(tape: GradTape, a: Variable) -> Variable:
    """Taped L1 loss."""
    return _taped(tape, "l1", a, _l1(a.value))


def router_entropy_loss(a1: np.ndarray) -> float:
    """Mean over tokens of -sum_i p_i ln p_i, p normalised from A1, 0 ln 0 = 0."""
    return _router_entropy(a1)[0]


def router_entropy_loss_taped(tape: GradTape, a1: Variable) -> Variable:
    """Taped router entropy loss."""
    return _taped(tape, "router_entropy", a1, _router_entropy(a1.value))


def load_balance_loss(a1: np.ndarray, threshold: float = 0.0) -> float:
    """
    N_e * sum_i f_i P_i, where f_i is the share of all (token, expert)
    activations that land on expert i and P_i the mean normalised router
    probability of expert i. Balanced routing scores 1, a single expert N_e.
    """
    return _load_balance(a1, threshold)[0]


def load_balance_loss_taped(tape: GradTape, a1: Variable, threshold: float = 0.0) -> Variable:
    """Taped load balancing loss; gradients flow through P only."""
    return _taped(tape, "load_balance", a1, _load_balance(a1.value, threshold))
