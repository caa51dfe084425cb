# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
# pylint: disable=R0904
"""
Reverse-mode gradient tape with hand-derived backward rules.

Every primitive evaluates its forward with the functions in
``blockffnpy.numerics.tensor`` and records a closure over the values its
backward needs. ``GradTape.backward`` replays those closures in exact
reverse order of recording.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.numerics import tensor as T

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Variable:
    """A tensor taking part in a taped computation."""
    value: np.ndarray
    name: str = ""
    requires_grad: bool = True
    grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        """Shape of the held tensor."""
        return self.value.shape

    def item(self) -> float:
        """The value of a 1x1 variable as a Python float."""
        return float(self.value.reshape(-1)[0])


def constant(value: np.ndarray, name: str = "") -> Variable:
    """Wrap a tensor that never receives a gradient."""
    return Variable(np.asarray(value), name=name, requires_grad=False)


@dataclass
class TapeRecord:
    """One primitive application."""
    name: str
    inputs: tuple
    output: Variable
    backward: BackwardFn


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


def _check_broadcast(a: Variable, b: Variable, op: str) -> None:
    for dim_a, dim_b in zip(a.shape, b.shape):
        if dim_a != dim_b and 1 not in (dim_a, dim_b):
            raise ContractViolation(f"{op} shape mismatch: {a.shape} vs {b.shape}")


class GradTape():
    """
    Ordered record of primitive applications.

    A tape is single-owner: build it, run one forward through its
    primitives, call ``backward`` once and read gradients off the leaves.
    """

    def __init__(self) -> None:
        self._records: list = []
        self.kink_margin = math.inf

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple:
        """The recorded primitives in forward order."""
        return tuple(self._records)

    def note_kink(self, distance) -> None:
        """Track the smallest distance of any input to a non-differentiable point."""
        distance = np.asarray(distance)
        if distance.size:
            self.kink_margin = min(self.kink_margin, float(np.min(distance)))

    def record(self, name: str, inputs: Sequence[Variable], value: np.ndarray,
               backward: BackwardFn) -> Variable:
        """
        Record a primitive given its forward value and backward closure.

        The closure maps the upstream gradient of the output to one gradient
        (or None) per input, in input order.
        """
        T.check_finite(value, name)
        output = Variable(value, name=name,
                          requires_grad=any(inp.requires_grad for inp in inputs))
        self._records.append(TapeRecord(name, tuple(inputs), output, backward))
        return output

    # Primitives

    def matmul(self, a: Variable, b: Variable) -> Variable:
        """a @ b."""
        av, bv = a.value, b.value
        return self.record("matmul", (a, b), T.matmul(av, bv),
                           lambda g: (g @ bv.T, av.T @ g))

    def add(self, a: Variable, b: Variable) -> Variable:
        """a + b with row or column broadcasting."""
        _check_broadcast(a, b, "add")
        sa, sb = a.shape, b.shape
        return self.record("add", (a, b), a.value + b.value,
                           lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def mul(self, a: Variable, b: Variable) -> Variable:
        """Elementwise a * b with row or column broadcasting."""
        _check_broadcast(a, b, "mul")
        av, bv = a.value, b.value
        return self.record("mul", (a, b), av * bv,
                           lambda g: (_unbroadcast(g * bv, av.shape),
                                      _unbroadcast(g * av, bv.shape)))

    def scale(self, a: Variable, factor: float) -> Variable:
        """factor * a."""
        return self.record("scale", (a,), a.value * factor, lambda g: (g * factor,))

    def elementwise(self, op: str, a: Variable, low: Optional[float] = None,
                    high: Optional[float] = None) -> Variable:
        """Differentiable relu, swish, sigmoid, log, exp or clamp."""
        av = a.value
        out = T.elementwise(op, av, low=low, high=high)
        if op == "relu":
            self.note_kink(np.abs(av))
            mask = av > 0
            backward = lambda g: (g * mask,)  # noqa: E731
        elif op == "swish":
            s = T.sigmoid(av)
            slope = s + av * s * (1.0 - s)
            backward = lambda g: (g * slope,)  # noqa: E731
        elif op == "sigmoid":
            slope = out * (1.0 - out)
            backward = lambda g: (g * slope,)  # noqa: E731
        elif op == "log":
            floor = T.LOG_CLAMP_FLOOR if low is None else low
            self.note_kink(np.abs(av - floor))
            slope = np.where(av > floor, 1.0 / np.maximum(av, floor), 0.0)
            backward = lambda g: (g * slope,)  # noqa: E731
        elif op == "exp":
            backward = lambda g: (g * out,)  # noqa: E731
        else:
            inside = np.ones_like(av, dtype=bool)
            if low is not None:
                self.note_kink(np.abs(av - low))
                inside &= av > low
            if high is not None:
                self.note_kink(np.abs(av - high))
                inside &= av < high
            backward = lambda g: (g * inside,)  # noqa: E731
        return self.record(op, (a,), out, backward)

    def rmsnorm(self, v: Variable, gain: Variable, eps: float = T.RMSNORM_EPS) -> Variable:
        """Row-wise RMSNorm with a learnable gain row."""
        vv, gv = v.value, gain.value
        out = T.rmsnorm(vv, gv, eps)
        inv_rms = 1.0 / np.sqrt(np.mean(vv * vv, axis=-1, keepdims=True) + eps)
        normed = vv * inv_rms

        def backward(g):
            d_normed = g * gv.reshape(1, -1)
            d_v = inv_rms * (d_normed - normed * np.mean(d_normed * normed, axis=-1, keepdims=True))
            d_gain = (g * normed).sum(axis=0).reshape(gv.shape)
            return d_v, d_gain

        return self.record("rmsnorm", (v, gain), out, backward)

    def softmax(self, a: Variable) -> Variable:
        """Row softmax."""
        out = T.softmax_rows(a.value)
        return self.record(
            "softmax", (a,), out,
            lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),))

    def normalize_rows(self, a: Variable) -> Variable:
        """Scale non-negative rows to sum 1; all-zero rows stay zero."""
        sums = a.value.sum(axis=-1, keepdims=True)
        out = T.normalize_rows(a.value)
        live = sums > 0
        safe = np.where(live, sums, 1.0)

        def backward(g):
            centred = g - (g * out).sum(axis=-1, keepdims=True)
            return (np.where(live, centred / safe, 0.0),)

        return self.record("normalize_rows", (a,), out, backward)

    def concat_cols(self, parts: Sequence[Variable]) -> Variable:
        """Concatenate along columns."""
        widths = [p.shape[1] for p in parts]
        bounds = np.cumsum([0] + widths)

        def backward(g):
            return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

        return self.record("concat_cols", tuple(parts),
                           np.concatenate([p.value for p in parts], axis=1), backward)

    def repeat_cols(self, a: Variable, times: int) -> Variable:
        """Repeat every column ``times`` times in place ([a0 a0 a1 a1 ...])."""
        rows, cols = a.shape
        return self.record(
            "repeat_cols", (a,), np.repeat(a.value, times, axis=1),
            lambda g: (g.reshape(rows, cols, times).sum(axis=2),))

    def embedding(self, table: Variable, ids: np.ndarray) -> Variable:
        """Gather rows of ``table``."""
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)

        def backward(g):
            d_table = np.zeros_like(table.value)
            np.add.at(d_table, ids, g)
            return (d_table,)

        return self.record("embedding", (table,), table.value[ids], backward)

    def causal_attention(self, q: Variable, k: Variable, v: Variable,
                         n_heads: int, seq_len: int) -> Variable:
        """
        Causal multi-head attention over rows packed as consecutive
        sequences of ``seq_len`` tokens.
        """
        out, weights = T.causal_attention(q.value, k.value, v.value, n_heads, seq_len)
        rows, width = q.shape
        head_dim = width // n_heads
        scale = 1.0 / math.sqrt(head_dim)
        shape = (rows // seq_len, seq_len, n_heads, head_dim)
        qh, kh, vh = (t.value.reshape(shape) for t in (q, k, v))

        def backward(g):
            gh = g.reshape(shape)
            d_weights = np.einsum("bihd,bjhd->bhij", gh, vh)
            d_scores = weights * (d_weights - (weights * d_weights).sum(axis=-1, keepdims=True))
            d_q = scale * np.einsum("bhij,bjhd->bihd", d_scores, kh)
            d_k = scale * np.einsum("bhij,bihd->bjhd", d_scores, qh)
            d_v = np.einsum("bhij,bihd->bjhd", weights, gh)
            return d_q.reshape(rows, width), d_k.reshape(rows, width), d_v.reshape(rows, width)

        return self.record("causal_attention", (q, k, v), out, backward)

    def mean(self, a: Variable) -> Variable:
        """Mean of all entries as a 1x1 variable."""
        size = a.value.size
        out = np.full((1, 1), a.value.mean(), dtype=a.value.dtype)
        return self.record("mean", (a,), out,
                           lambda g: (np.full(a.shape, g[0, 0] / size, dtype=g.dtype),))

    def cross_entropy(self, logits: Variable, targets: np.ndarray) -> Variable:
        """Mean next-token negative log-likelihood."""
        targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        lv = logits.value
        rows = np.arange(lv.shape[0])
        shifted = lv - lv.max(axis=-1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out = np.full((1, 1), -log_probs[rows, targets].mean(), dtype=lv.dtype)

        def backward(g):
            d_logits = np.exp(log_probs)
            d_logits[rows, targets] -= 1.0
            return (d_logits * (g[0, 0] / lv.shape[0]),)

        return self.record("cross_entropy", (logits,), out, backward)

    # Backward

    def backward(self, output: Variable, upstream: Optional[np.ndarray] = None) -> None:
        """
        Propagate ``upstream`` (ones by default) from ``output`` back to every
        leaf, storing the result in each leaf's ``grad``.
        """
        seed = np.ones_like(output.value) if upstream is None else np.asarray(upstream)
        grads = {id(output): seed}
        holders = {id(output): output}
        for rec in reversed(self._records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            holders.pop(id(rec.output), None)
            for inp, inp_grad in zip(rec.inputs, rec.backward(g)):
                if inp_grad is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = grads[key] + inp_grad if key in grads else inp_grad
                holders[key] = inp
        for key, g in grads.items():
            holders[key].grad = g

    @staticmethod
    def gradient(var: Variable) -> np.ndarray:
        """The gradient stored on ``var``, zeros when none reached it."""
        return var.grad if var.grad is not None else np.zeros_like(var.value)
