# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Composition of the training objective."""
import math
from dataclasses import dataclass

from blockffnpy.common import NonFiniteError, SparsifierKind


@dataclass(frozen=True)
class LossParts:
    """
    Raw loss terms of one step. ``cs`` holds whichever sparsifier is
    enabled (chunk sparsification, L1 or router entropy); ``aux`` holds the
    load balancing term.
    """
    lm: float
    al: float = 0.0
    cs: float = 0.0
    aux: float = 0.0


@dataclass(frozen=True)
class LossBundle:
    """All terms, their factors and the composed total."""
    l_lm: float
    l_al: float
    l_cs: float
    l_aux: float
    lambda_al: float
    lambda_cs: float
    lambda_aux: float
    l_total: float
    sparsifier: SparsifierKind = SparsifierKind.CS


def total_loss(parts: LossParts, lambda_al: float, lambda_cs: float,
               lambda_aux: float = 0.0,
               sparsifier: SparsifierKind = SparsifierKind.CS) -> LossBundle:
    """
    L_total = L_lm + lambda_al * L_al + lambda_cs * L_cs + lambda_aux * L_aux.

    A disabled term is passed with a zero factor.
    """
    for name in ("lm", "al", "cs", "aux"):
        if not math.isfinite(getattr(parts, name)):
            raise NonFiniteError(f"loss term {name} is not finite")
    if sparsifier is SparsifierKind.CS and not 0.0 <= parts.cs <= 1.0:
        raise NonFiniteError(f"chunk sparsification loss {parts.cs} outside [0, 1]")
    total = parts.lm + lambda_al * parts.al + lambda_cs * parts.cs + lambda_aux * parts.aux
    return LossBundle(parts.lm, parts.al, parts.cs, parts.aux,
                      lambda_al, lambda_cs, lambda_aux, total, sparsifier)
