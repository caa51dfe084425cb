# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Finite-difference checking of hand-derived gradients."""
from typing import Callable, Mapping

import numpy as np

from blockffnpy.numerics.grad_tape import GradTape, Variable

ScalarFn = Callable[[GradTape, Mapping[str, Variable]], Variable]


class KinkProximityError(RuntimeError):
    """
    The checked point lies too close to a ReLU kink, clamp bound or
    selection boundary for central differences to be meaningful.
    """


def _evaluate(fn: ScalarFn, point: Mapping[str, np.ndarray]) -> float:
    tape = GradTape()
    return fn(tape, {name: Variable(value, name=name) for name, value in point.items()}).item()


def grad_check(fn: ScalarFn, point: Mapping[str, np.ndarray], step: float = 1e-5,
               floor: float = 1e-5) -> float:
    """
    Compare the taped gradient of a scalar function against central
    differences (f(x+h) - f(x-h)) / 2h, component by component.

    ``fn`` receives a fresh tape and one Variable per named parameter and
    returns a 1x1 Variable. Returns the largest relative error
    |analytic - numeric| / max(|analytic|, |numeric|, floor).
    """
    base = {name: np.array(value, dtype=np.float64) for name, value in point.items()}
    tape = GradTape()
    variables = {name: Variable(value.copy(), name=name) for name, value in base.items()}
    output = fn(tape, variables)
    if tape.kink_margin <= 10.0 * step:
        raise KinkProximityError(
            f"kink margin {tape.kink_margin:.3e} is within 10 steps of h={step:.1e}")
    tape.backward(output)

    worst = 0.0
    for name, var in variables.items():
        analytic = tape.gradient(var)
        for index in np.ndindex(base[name].shape):
            shifted = dict(base)
            plus = base[name].copy()
            plus[index] += step
            shifted[name] = plus
            f_plus = _evaluate(fn, shifted)
            minus = base[name].copy()
            minus[index] -= step
            shifted[name] = minus
            f_minus = _evaluate(fn, shifted)
            numeric = (f_plus - f_minus) / (2.0 * step)
            exact = float(analytic[index])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, error)
    return worst
