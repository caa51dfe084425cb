# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Routers: the ReLU + RMSNorm router and the baseline router zoo.

All routers return the triple (A0, A1, A) over N_e columns. Shared experts
occupy the first ``n_shared`` columns with A0 = 0 and A1 = A = 1.
"""
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from blockffnpy.common import ContractViolation, RouterKind
from blockffnpy.ffn.config import FfnConfig
from blockffnpy.ffn.params import FfnParams
from blockffnpy.numerics import GradTape, Variable, constant


@dataclass
class RouterActivations:
    """Pre-activation A0, activation pattern A1 and activation values A."""
    a0: np.ndarray
    a1: np.ndarray
    a: np.ndarray


@dataclass
class TapedRouterActivations:
    """The same triple as tape variables."""
    a0: Variable
    a1: Variable
    a: Variable

    def values(self) -> RouterActivations:
        """Detach the triple from the tape."""
        return RouterActivations(self.a0.value, self.a1.value, self.a.value)


def top_k_mask(scores: np.ndarray, k: int, tape: GradTape = None) -> np.ndarray:
    """
    Keep the k largest entries of every row; among equal scores the lower
    expert index wins.
    """
    order = np.argsort(-scores, axis=-1, kind="stable")
    mask = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=-1)
    if tape is not None and k < scores.shape[1]:
        ranked = np.take_along_axis(scores, order, axis=-1)
        tape.note_kink(ranked[:, k - 1] - ranked[:, k])
    return mask


def top_p_mask(probs: np.ndarray, p: float, tape: GradTape = None) -> np.ndarray:
    """
    Keep the smallest prefix of the descending probabilities whose mass
    reaches p, including the entry that crosses the threshold.
    """
    width = probs.shape[1]
    order = np.argsort(-probs, axis=-1, kind="stable")
    mass = np.cumsum(np.take_along_axis(probs, order, axis=-1), axis=-1)
    keep = np.minimum((mass < p).sum(axis=-1) + 1, width)
    ranks = np.arange(width)[None, :] < keep[:, None]
    mask = np.zeros(probs.shape, dtype=bool)
    np.put_along_axis(mask, order, ranks, axis=-1)
    if tape is not None:
        rows = np.arange(probs.shape[0])
        tape.note_kink(np.abs(mass[rows, keep - 1] - p)[keep < width])
        crossed = keep > 1
        tape.note_kink(np.abs(p - mass[rows[crossed], keep[crossed] - 2]))
    return mask


def router_forward_taped(tape: GradTape, x: Variable, variables: Mapping[str, Variable],
                         config: FfnConfig) -> TapedRouterActivations:
    """Router forward on a tape; TopK/TopP selections pass gradients straight through."""
    if x.shape[1] != config.d_h:
        raise ContractViolation(f"router input width {x.shape[1]} != d_h {config.d_h}")
    kind = config.router_kind
    a0 = tape.matmul(x, variables["w_router"])
    if kind is RouterKind.RELU_RMSNORM:
        a1 = tape.elementwise("relu", a0)
        a = tape.rmsnorm(a1, variables["router_gain"], config.eps)
    elif kind is RouterKind.RELU_PLAIN:
        a1 = tape.elementwise("relu", a0)
        a = a1
    elif kind in (RouterKind.TOPK_SOFTMAX, RouterKind.SHARED_TOPK_SOFTMAX):
        a1 = tape.softmax(a0)
        a = tape.mul(a1, constant(top_k_mask(a1.value, config.k, tape).astype(a1.value.dtype)))
    elif kind is RouterKind.SIGMOID_NORM_TOPK:
        a1 = tape.elementwise("sigmoid", a0)
        picked = tape.mul(a1, constant(top_k_mask(a1.value, config.k, tape).astype(a1.value.dtype)))
        a = tape.normalize_rows(picked)
    else:
        a1 = tape.softmax(a0)
        a = tape.mul(a1, constant(top_p_mask(a1.value, config.p, tape).astype(a1.value.dtype)))

    if config.n_shared:
        rows, dtype = x.shape[0], x.value.dtype
        zeros = constant(np.zeros((rows, config.n_shared), dtype=dtype))
        ones = constant(np.ones((rows, config.n_shared), dtype=dtype))
        a0 = tape.concat_cols([zeros, a0])
        a1 = tape.concat_cols([ones, a1])
        a = tape.concat_cols([ones, a])
    return TapedRouterActivations(a0, a1, a)


def router_forward(x: np.ndarray, params: FfnParams, config: FfnConfig) -> RouterActivations:
    """Router forward without gradients."""
    return router_forward_taped(GradTape(), Variable(x, requires_grad=False),
                                params.bind(), config).values()
