# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Learnable tensors of one BlockFFN layer."""
from dataclasses import dataclass, fields
from typing import Dict, Optional

import numpy as np

from blockffnpy.common import ContractViolation, ExpertKind, RouterKind
from blockffnpy.ffn.config import FfnConfig
from blockffnpy.numerics import Variable


@dataclass
class FfnParams:
    """
    Expert projections are stored stacked: expert i owns columns
    [i*d_e, (i+1)*d_e) of ``w_up``/``w_gate`` and the same rows of
    ``w_down``. ``router_gain`` is a 1 x N_e row.
    """
    w_router: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray
    router_gain: Optional[np.ndarray] = None
    w_gate: Optional[np.ndarray] = None

    def _block(self, i: int, d_e: int) -> slice:
        return slice(i * d_e, (i + 1) * d_e)

    def up(self, i: int, d_e: int) -> np.ndarray:
        """W_up of expert i, d_h x d_e."""
        return self.w_up[:, self._block(i, d_e)]

    def gate(self, i: int, d_e: int) -> np.ndarray:
        """W_gate of expert i, d_h x d_e."""
        return self.w_gate[:, self._block(i, d_e)]

    def down(self, i: int, d_e: int) -> np.ndarray:
        """W_down of expert i, d_e x d_h."""
        return self.w_down[self._block(i, d_e), :]

    def tensors(self) -> Dict[str, np.ndarray]:
        """Present tensors by field name, in declaration order."""
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def bind(self) -> Dict[str, Variable]:
        """Wrap every tensor as a Variable for a taped forward."""
        return {name: Variable(value, name=name) for name, value in self.tensors().items()}

    def astype(self, dtype) -> "FfnParams":
        """A copy with every tensor cast to ``dtype``."""
        return FfnParams(**{name: np.ascontiguousarray(value, dtype=dtype)
                            for name, value in self.tensors().items()})

    def validate(self, config: FfnConfig) -> None:
        """Check every shape against the layer configuration."""
        expected = expected_shapes(config)
        present = self.tensors()
        if set(expected) != set(present):
            raise ContractViolation(
                f"FfnParams tensors {sorted(present)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            if present[name].shape != shape:
                raise ContractViolation(f"{name} has shape {present[name].shape}, expected {shape}")


def expected_shapes(config: FfnConfig) -> Dict[str, tuple]:
    """Tensor shapes implied by a layer configuration."""
    shapes = {
        "w_router": (config.d_h, config.routed_experts),
        "w_up": (config.d_h, config.expert_width),
        "w_down": (config.expert_width, config.d_h),
    }
    if config.router_kind is RouterKind.RELU_RMSNORM:
        shapes["router_gain"] = (1, config.n_experts)
    if config.expert_kind is ExpertKind.GATED_SWISH:
        shapes["w_gate"] = (config.d_h, config.expert_width)
    return shapes


def init_ffn_params(config: FfnConfig, rng: np.random.Generator,
                    dtype=np.float32) -> FfnParams:
    """
    Zero-mean normal weights with variance 1 / fan-in (per expert for the
    down projection), router gains at one.
    """
    tensors = {}
    for name, shape in expected_shapes(config).items():
        if name == "router_gain":
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            fan_in = config.d_e if name == "w_down" else shape[0]
            tensors[name] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=shape).astype(dtype)
    return FfnParams(**tensors)
