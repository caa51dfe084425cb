# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Dense 2-D tensor primitives, gradient tape and gradient checking."""
from .tensor import (
    LOG_CLAMP_FLOOR,
    RMSNORM_EPS,
    causal_attention,
    check_finite,
    elementwise,
    matmul,
    normalize_rows,
    rmsnorm,
    sigmoid,
    softmax_rows,
    swish,
)
from .grad_tape import GradTape, TapeRecord, Variable, constant
from .grad_check import KinkProximityError, grad_check
