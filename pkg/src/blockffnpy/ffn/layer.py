# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""The BlockFFN layer: y = sum_i A_i(x) E_i(x)."""
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from blockffnpy.common import ContractViolation, ExpertKind
from blockffnpy.ffn.config import FfnConfig
from blockffnpy.ffn.expert import expert_forward
from blockffnpy.ffn.params import FfnParams
from blockffnpy.ffn.router import (
    RouterActivations,
    TapedRouterActivations,
    router_forward,
    router_forward_taped,
)
from blockffnpy.numerics import GradTape, Variable, check_finite


def ffn_forward(x: np.ndarray, params: FfnParams, config: FfnConfig,
                skip_inactive: bool = True) -> Tuple[np.ndarray, RouterActivations]:
    """
    Evaluate the layer expert by expert, in index order.

    With ``skip_inactive`` experts no token activates are never evaluated;
    without it every expert runs and zero weights null its output. Both
    paths add the same terms in the same order, so they agree bitwise.
    """
    if x.ndim != 2 or x.shape[1] != config.d_h:
        raise ContractViolation(f"ffn input shape {x.shape} does not match d_h {config.d_h}")
    acts = router_forward(x, params, config)
    y = np.zeros_like(x)
    for i in range(config.n_experts):
        weight = acts.a[:, i:i + 1]
        if skip_inactive and not np.any(weight):
            continue
        y += weight * expert_forward(x, params, config, i)
    return check_finite(y, "ffn_forward"), acts


def ffn_forward_taped(tape: GradTape, x: Variable, variables: Mapping[str, Variable],
                      config: FfnConfig) -> Tuple[Variable, TapedRouterActivations]:
    """
    The layer on a tape, as one expanded product over the stacked experts:
    y = (Swish(x W_up) * repeat(A, d_e)) W_down.
    """
    acts = router_forward_taped(tape, x, variables, config)
    hidden = tape.matmul(x, variables["w_up"])
    if config.expert_kind is ExpertKind.GATED_SWISH:
        gate = tape.elementwise("swish", tape.matmul(x, variables["w_gate"]))
        hidden = tape.mul(gate, hidden)
    else:
        hidden = tape.elementwise("swish", hidden)
    weighted = tape.mul(hidden, tape.repeat_cols(acts.a, config.d_e))
    return tape.matmul(weighted, variables["w_down"]), acts


@dataclass
class FfnTrace:
    """A recorded layer forward, ready for ``ffn_backward``."""
    tape: GradTape
    x: Variable
    variables: Dict[str, Variable]
    y: Variable
    activations: TapedRouterActivations


@dataclass
class FfnGradients:
    """Gradients of every layer parameter and of the input."""
    x: np.ndarray
    w_router: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray
    router_gain: Optional[np.ndarray] = None
    w_gate: Optional[np.ndarray] = None


def trace_ffn_forward(x: np.ndarray, params: FfnParams, config: FfnConfig) -> FfnTrace:
    """Record a layer forward on a fresh tape."""
    tape = GradTape()
    x_var = Variable(x, name="x")
    variables = params.bind()
    y, acts = ffn_forward_taped(tape, x_var, variables, config)
    return FfnTrace(tape, x_var, variables, y, acts)


def ffn_backward(upstream: np.ndarray, trace: FfnTrace) -> FfnGradients:
    """Back-propagate dL/dy through a recorded layer forward."""
    if upstream.shape != trace.y.shape:
        raise ContractViolation(f"upstream shape {upstream.shape} != {trace.y.shape}")
    trace.tape.backward(trace.y, upstream)
    grads = {name: trace.tape.gradient(var) for name, var in trace.variables.items()}
    return FfnGradients(x=trace.tape.gradient(trace.x), **grads)
