# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Activated-expert union of a token chunk."""
from dataclasses import dataclass

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.metrics import activated


@dataclass(frozen=True)
class ChunkUnionPlan:
    """
    ``union_indices`` is strictly increasing and holds exactly the experts
    set in some row of ``per_token_mask``.
    """
    union_indices: np.ndarray
    per_token_mask: np.ndarray
    n_tokens: int

    @property
    def n_experts(self) -> int:
        """Expert count N_e."""
        return self.per_token_mask.shape[1]

    @property
    def union_size(self) -> int:
        """|Union|."""
        return int(self.union_indices.size)

    def check_against(self, a: np.ndarray, threshold: float = 0.0) -> None:
        """Raise unless this plan was built from ``a``."""
        if a.shape != self.per_token_mask.shape or not np.array_equal(
                activated(a, threshold), self.per_token_mask):
            raise ContractViolation("union plan does not match the activations")


def build_union_plan(a: np.ndarray, threshold: float = 0.0) -> ChunkUnionPlan:
    """Union of activated experts and per-token masks for one chunk."""
    mask = activated(a, threshold)
    union = np.flatnonzero(mask.any(axis=0)).astype(np.int64)
    return ChunkUnionPlan(union, mask, mask.shape[0])
