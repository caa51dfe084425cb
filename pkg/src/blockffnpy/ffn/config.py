# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Shape and routing configuration of one BlockFFN layer."""
from dataclasses import dataclass

from blockffnpy.common import ConfigError, ExpertKind, RouterKind, parse_kind
from blockffnpy.numerics import RMSNORM_EPS


@dataclass(frozen=True)
class FfnConfig:
    """
    d_h is the hidden width, d_e the width of every expert, n_experts the
    expert count N_e and n_shared the number of always-on shared experts
    occupying the first slots. ``k`` only matters to the TopK routers and
    ``p`` to the TopP router.
    """
    d_h: int = 64
    d_e: int = 16
    n_experts: int = 16
    n_shared: int = 0
    router_kind: RouterKind = RouterKind.RELU_RMSNORM
    expert_kind: ExpertKind = ExpertKind.NONGATED_SWISH
    k: int = 2
    p: float = 0.9
    eps: float = RMSNORM_EPS

    def __post_init__(self) -> None:
        object.__setattr__(self, "router_kind", parse_kind(RouterKind, self.router_kind))
        object.__setattr__(self, "expert_kind", parse_kind(ExpertKind, self.expert_kind))
        if min(self.d_h, self.d_e, self.n_experts) <= 0:
            raise ConfigError("d_h, d_e and n_experts must be positive")
        if not 0 <= self.n_shared < self.n_experts:
            raise ConfigError(f"n_shared must lie in [0, {self.n_experts})")
        if self.n_shared and not self.router_kind.supports_shared:
            raise ConfigError(f"{self.router_kind.name.lower()} has no shared experts")
        if self.router_kind.uses_top_k and not 1 <= self.k <= self.routed_experts:
            raise ConfigError(f"k must lie in [1, {self.routed_experts}]")
        if self.router_kind is RouterKind.TOPP_SOFTMAX and not 0.0 < self.p <= 1.0:
            raise ConfigError("p must lie in (0, 1]")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")

    @property
    def routed_experts(self) -> int:
        """Experts selected by the router (all but the shared ones)."""
        return self.n_experts - self.n_shared

    @property
    def expert_width(self) -> int:
        """Width of the stacked expert projections, N_e * d_e."""
        return self.n_experts * self.d_e
