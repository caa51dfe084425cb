# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""AdamW, global-norm clipping and the warmup-stable-decay schedule."""
import math
from typing import Dict

import numpy as np

from blockffnpy.training.config import OptimConfig


def learning_rate(step: int, config: OptimConfig) -> float:
    """
    Learning rate for a 1-based step: linear warmup to ``lr``, constant,
    then linear decay to zero. Steps past the schedule get zero.
    """
    warmup, stable, decay = config.warmup_steps, config.stable_steps, config.decay_steps
    if step <= warmup:
        return config.lr * step / warmup
    if step <= warmup + stable:
        return config.lr
    remaining = warmup + stable + decay - step
    if decay == 0 or remaining <= 0:
        return 0.0
    return config.lr * remaining / decay


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


class AdamW:
    """Adam with decoupled weight decay, applied to 2-D weight matrices only."""

    def __init__(self, config: OptimConfig):
        self.config = config
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    @staticmethod
    def decays(value: np.ndarray) -> bool:
        """Gain rows (1 x d) are not decayed."""
        return value.ndim == 2 and value.shape[0] > 1

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place."""
        cfg = self.config
        self.step_count += 1
        correction1 = 1.0 - cfg.beta1 ** self.step_count
        correction2 = 1.0 - cfg.beta2 ** self.step_count
        for name, value in params.items():
            grad = grads[name].astype(value.dtype, copy=False)
            m = self._m.setdefault(name, np.zeros_like(value))
            v = self._v.setdefault(name, np.zeros_like(value))
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            if cfg.weight_decay and self.decays(value):
                value *= 1.0 - lr * cfg.weight_decay
            value -= (lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)).astype(
                value.dtype, copy=False)
