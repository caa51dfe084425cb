# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""What decoding needs from a target model."""
from typing import List, Optional, Protocol, Sequence

import numpy as np

from blockffnpy.ffn import FfnConfig
from blockffnpy.kernel import ChunkUnionPlan


class TargetForward(Protocol):
    """Logits for every position and, for a sparse chunk, one plan per layer."""
    logits: np.ndarray
    plans: List[ChunkUnionPlan]


class TargetModel(Protocol):
    """A causal language model whose BlockFFN layers can run a sparse chunk."""
    vocab_size: int
    context_length: int
    n_layers: int

    @property
    def config(self):
        """Model configuration exposing ``ffn``."""

    def forward(self, tokens: Sequence[int], sparse_from: Optional[int] = None) -> TargetForward:
        """Logits for ``tokens``; rows from ``sparse_from`` on form one sparse chunk."""


def ffn_config(model: TargetModel) -> FfnConfig:
    """The BlockFFN configuration shared by every layer of ``model``."""
    return model.config.ffn
