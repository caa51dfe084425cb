# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Adaptive factor scheduler for the sparsification coefficient."""
import logging
from dataclasses import dataclass, replace
from typing import Optional

from blockffnpy.common import ConfigError, NonFiniteError

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SchedulerState:
    """
    lambda_cs stays at lambda_cs_0 for the first n_st steps. Losses are
    summed over windows of n_adj steps; at the end of every window past
    n_st the ratio gamma of the current to the previous window average
    rescales lambda_cs.
    """
    lambda_cs: float
    lambda_cs_0: float
    n_st: int
    n_adj: int
    gamma_min: float
    step: int = 0
    window_sum_current: float = 0.0
    window_sum_previous: float = 0.0
    windows_completed: int = 0
    last_gamma: Optional[float] = None


def new_scheduler_state(lambda_cs_0: float, n_st: int = 1000, n_adj: int = 100,
                        gamma_min: float = 1.025) -> SchedulerState:
    """Initial scheduler state."""
    if lambda_cs_0 <= 0:
        raise ConfigError("lambda_cs_0 must be positive")
    if n_adj < 1 or n_st < 0:
        raise ConfigError("n_adj must be positive and n_st non-negative")
    if gamma_min < 1.0:
        raise ConfigError("gamma_min must be at least 1")
    return SchedulerState(lambda_cs_0, lambda_cs_0, n_st, n_adj, gamma_min)


def scheduler_step(state: SchedulerState, l_cs_t: float) -> SchedulerState:
    """
    Account one step's loss and return the updated state.

    At step m = (i + 1) * n_adj > n_st, with gamma = current / previous
    window average: lambda <- gamma * lambda when gamma <= 1, otherwise
    lambda <- max(gamma_min, gamma) * lambda. A zero window average holds
    lambda unchanged.
    """
    if not l_cs_t >= 0.0 or l_cs_t == float("inf"):
        raise NonFiniteError(f"scheduler fed invalid loss {l_cs_t}")
    step = state.step + 1
    current = state.window_sum_current + l_cs_t
    if step % state.n_adj:
        return replace(state, step=step, window_sum_current=current)

    lambda_cs, gamma = state.lambda_cs, None
    if step > state.n_st and state.windows_completed > 0:
        if state.window_sum_previous > 0.0 and current > 0.0:
            gamma = (current / state.n_adj) / (state.window_sum_previous / state.n_adj)
            lambda_cs *= gamma if gamma <= 1.0 else max(state.gamma_min, gamma)
            _log.debug("step %d: gamma %.4f, lambda_cs %.6g", step, gamma, lambda_cs)
        else:
            _log.warning("step %d: zero window average, holding lambda_cs at %.6g",
                         step, lambda_cs)
    return replace(state, step=step, lambda_cs=lambda_cs, window_sum_current=0.0,
                   window_sum_previous=current,
                   windows_completed=state.windows_completed + 1, last_gamma=gamma)
