# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Expert MLPs."""
import numpy as np

from blockffnpy.common import ContractViolation, ExpertKind
from blockffnpy.ffn.config import FfnConfig
from blockffnpy.ffn.params import FfnParams
from blockffnpy.numerics import matmul, swish


def expert_forward(x: np.ndarray, params: FfnParams, config: FfnConfig, i: int) -> np.ndarray:
    """
    E_i(x) for every row of x.

    Non-gated: Swish(x W_up) W_down. Gated: (Swish(x W_gate) * x W_up) W_down.
    """
    if not 0 <= i < config.n_experts:
        raise ContractViolation(f"expert index {i} out of range")
    hidden = matmul(x, params.up(i, config.d_e))
    if config.expert_kind is ExpertKind.GATED_SWISH:
        hidden = swish(matmul(x, params.gate(i, config.d_e))) * hidden
    else:
        hidden = swish(hidden)
    return matmul(hidden, params.down(i, config.d_e))
