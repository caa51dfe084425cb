# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Objective configuration and the ablation matrix."""
from dataclasses import dataclass, replace

from blockffnpy.common import ConfigError, SparsifierKind, parse_kind
from blockffnpy.objectives.losses import DEFAULT_ALPHA, DEFAULT_CHUNK_LEN


@dataclass(frozen=True)
class ObjectiveConfig:
    """
    Which regularisers join the language modelling loss, and their factors.
    The sparsifier factor starts at ``lambda_cs0`` and is then driven by the
    adaptive scheduler (n_st, n_adj, gamma_min).
    """
    al_enabled: bool = True
    lambda_al: float = 2e-3
    alpha: float = DEFAULT_ALPHA
    detach_target: bool = False
    sparsifier: SparsifierKind = SparsifierKind.CS
    lambda_cs0: float = 5e-2
    n_st: int = 1000
    n_adj: int = 100
    gamma_min: float = 1.025
    chunk_len: int = DEFAULT_CHUNK_LEN
    balance_enabled: bool = False
    lambda_balance: float = 1e-2

    def __post_init__(self) -> None:
        object.__setattr__(self, "sparsifier", parse_kind(SparsifierKind, self.sparsifier))
        if min(self.lambda_al, self.lambda_cs0, self.lambda_balance) < 0:
            raise ConfigError("loss factors must be non-negative")
        if self.alpha <= 0 or self.chunk_len < 1 or self.n_adj < 1 or self.n_st < 0:
            raise ConfigError("alpha, chunk_len and n_adj must be positive, n_st non-negative")
        if self.gamma_min < 1.0:
            raise ConfigError("gamma_min must be at least 1")

    @property
    def uses_scheduler(self) -> bool:
        """The sparsifier factor is adapted only when a sparsifier is active."""
        return self.sparsifier is not SparsifierKind.NONE and self.lambda_cs0 > 0


ABLATION_KINDS = {
    "null": (False, SparsifierKind.NONE, False),
    "al": (True, SparsifierKind.NONE, False),
    "cs": (False, SparsifierKind.CS, False),
    "al+cs": (True, SparsifierKind.CS, False),
    "al+l1": (True, SparsifierKind.L1, False),
    "al+ent": (True, SparsifierKind.ENT, False),
    "l1": (False, SparsifierKind.L1, False),
    "ent": (False, SparsifierKind.ENT, False),
    "al+cs+lb": (True, SparsifierKind.CS, True),
}


def objective_for_kind(kind: str, base: ObjectiveConfig) -> ObjectiveConfig:
    """The objective of one ablation arm, keeping the factors of ``base``."""
    try:
        al_enabled, sparsifier, balance = ABLATION_KINDS[kind.strip().lower()]
    except KeyError as error:
        raise ConfigError(
            f"Unknown ablation kind {kind!r}, expected one of: {', '.join(ABLATION_KINDS)}"
        ) from error
    return replace(base, al_enabled=al_enabled, sparsifier=sparsifier, balance_enabled=balance)
