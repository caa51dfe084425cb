# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Counted memory and multiply-add cost of one chunk."""
from dataclasses import dataclass
from fractions import Fraction

from blockffnpy.ffn import FfnConfig
from blockffnpy.kernel.union_plan import ChunkUnionPlan


@dataclass(frozen=True)
class CostReport:
    """
    Expert weight bytes touched and multiply-adds, sparse against dense.
    The sparse multiply-adds include the precomputed-then-masked entries.
    """
    expert_weight_bytes_touched: int
    dense_expert_weight_bytes: int
    flops_sparse: int
    flops_dense: int
    union_density: float

    @property
    def bytes_ratio(self) -> Fraction:
        """Exactly |Union| / N_e."""
        return Fraction(self.expert_weight_bytes_touched, self.dense_expert_weight_bytes)


def cost_accounting(plan: ChunkUnionPlan, config: FfnConfig, bytes_per_param: int = 4) -> CostReport:
    """Count the cost of running ``plan`` through the chunk kernel."""
    per_expert_params = 2 * config.d_h * config.d_e
    per_expert_macs = plan.n_tokens * per_expert_params
    union = plan.union_size
    return CostReport(
        expert_weight_bytes_touched=union * per_expert_params * bytes_per_param,
        dense_expert_weight_bytes=config.n_experts * per_expert_params * bytes_per_param,
        flops_sparse=union * per_expert_macs,
        flops_dense=config.n_experts * per_expert_macs,
        union_density=union / config.n_experts,
    )
