# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Dense 2-D primitives over numpy arrays.

A Tensor2D is a C-contiguous 2-D ``numpy.ndarray``; float64 is used for
verification and float32 for training and the kernels. Every primitive
rejects non-finite results.
"""
import numpy as np

from blockffnpy.common import ContractViolation, NonFiniteError

RMSNORM_EPS = 1e-6
LOG_CLAMP_FLOOR = 1e-7


def check_finite(tensor: np.ndarray, where: str) -> np.ndarray:
    """Raise when a tensor holds NaN or Inf."""
    if not np.all(np.isfinite(tensor)):
        raise NonFiniteError(f"Non-finite value produced by {where}")
    return tensor


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Standard matrix product.

    Identical shapes and dtypes always take the same BLAS path, so the
    result is bit-reproducible between runs.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |z|."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def swish(z: np.ndarray) -> np.ndarray:
    """z * sigmoid(z)."""
    return z * sigmoid(z)


def elementwise(op: str, tensor: np.ndarray, low: float | None = None,
                high: float | None = None) -> np.ndarray:
    """
    Apply one of relu, swish, sigmoid, log, exp or clamp.

    ``log`` clamps its input to ``low`` (default 1e-7) first; ``clamp``
    keeps values within [low, high], unbounded where a side is None.
    """
    if op == "relu":
        out = np.maximum(tensor, 0.0)
    elif op == "swish":
        out = swish(tensor)
    elif op == "sigmoid":
        out = sigmoid(tensor)
    elif op == "log":
        out = np.log(np.maximum(tensor, LOG_CLAMP_FLOOR if low is None else low))
    elif op == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(tensor)
    elif op == "clamp":
        out = np.clip(tensor, -np.inf if low is None else low, np.inf if high is None else high)
    else:
        raise ContractViolation(f"Unknown elementwise op {op!r}")
    return check_finite(out.astype(tensor.dtype, copy=False), op)


def rmsnorm(v: np.ndarray, gain: np.ndarray, eps: float = RMSNORM_EPS) -> np.ndarray:
    """
    Row-wise RMSNorm: gain_i * v_i / sqrt(mean_j v_j^2 + eps).

    Zero entries stay exactly zero, so the support of every row is kept.
    """
    if eps <= 0:
        raise ContractViolation("rmsnorm eps must be positive")
    gain = np.asarray(gain, dtype=v.dtype).reshape(-1)
    if gain.shape[0] != v.shape[-1]:
        raise ContractViolation(f"rmsnorm gain length {gain.shape[0]} != {v.shape[-1]}")
    scale = 1.0 / np.sqrt(np.mean(v * v, axis=-1, keepdims=True) + eps)
    return check_finite(v * scale * gain, "rmsnorm")


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over each row."""
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def normalize_rows(a: np.ndarray) -> np.ndarray:
    """Scale each row to sum 1; rows summing to zero map to zero rows."""
    sums = a.sum(axis=-1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, a / safe, 0.0).astype(a.dtype, copy=False)


def causal_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, n_heads: int,
                     seq_len: int) -> tuple:
    """
    Causal multi-head attention over rows packed as consecutive sequences
    of ``seq_len`` tokens. Returns the output rows and the attention
    weights, shaped (batch, heads, query, key).
    """
    rows, width = q.shape
    if rows % seq_len or width % n_heads:
        raise ContractViolation(
            f"attention: {rows} rows / seq_len {seq_len}, width {width} / {n_heads} heads")
    head_dim = width // n_heads
    shape = (rows // seq_len, seq_len, n_heads, head_dim)
    future = np.triu(np.ones((seq_len, seq_len), dtype=bool), k=1)
    scores = np.einsum("bihd,bjhd->bhij", q.reshape(shape), k.reshape(shape))
    scores = np.where(future, -np.inf, scores / np.sqrt(head_dim))
    weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
    weights = weights / weights.sum(axis=-1, keepdims=True)
    out = np.einsum("bhij,bjhd->bihd", weights, v.reshape(shape)).reshape(rows, width)
    return check_finite(out.astype(q.dtype, copy=False), "causal_attention"), weights
