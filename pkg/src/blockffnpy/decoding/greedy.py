# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Plain autoregressive greedy decoding, the reference for speculative decoding."""
from typing import List, Sequence

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.decoding.target import TargetModel


def greedy_decode(model: TargetModel, prompt: Sequence[int], max_tokens: int) -> List[int]:
    """Append the argmax token ``max_tokens`` times; returns only the new tokens."""
    if len(prompt) + max_tokens > model.context_length:
        raise ContractViolation(
            f"prompt of {len(prompt)} plus {max_tokens} tokens exceeds "
            f"context length {model.context_length}")
    sequence = list(prompt)
    for _ in range(max_tokens):
        sequence.append(int(np.argmax(model.forward(sequence).logits[-1])))
    return sequence[len(prompt):]
