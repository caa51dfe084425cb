# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the BlockFFN layer, its router zoo and expert variants."""
from .config import FfnConfig
from .params import FfnParams, expected_shapes, init_ffn_params
from .router import (
    RouterActivations,
    TapedRouterActivations,
    router_forward,
    router_forward_taped,
    top_k_mask,
    top_p_mask,
)
from .expert import expert_forward
from .layer import (
    FfnGradients,
    FfnTrace,
    ffn_backward,
    ffn_forward,
    ffn_forward_taped,
    trace_ffn_forward,
)
