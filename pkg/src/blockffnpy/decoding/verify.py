# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Greedy verification of a draft chunk in one target pass."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from blockffnpy.decoding.drafters import DraftBatch
from blockffnpy.decoding.target import TargetModel
from blockffnpy.kernel import ChunkUnionPlan


@dataclass
class VerifyResult:
    """
    ``accepted`` drafts (0..n) are kept and ``bonus_token`` follows them.
    ``plans`` holds the chunk union plan of every layer.
    """
    accepted: int
    bonus_token: int
    plans: List[ChunkUnionPlan] = field(default_factory=list)
    drafts: Tuple[int, ...] = ()

    @property
    def emitted(self) -> List[int]:
        """Accepted drafts followed by the bonus token."""
        return list(self.drafts[:self.accepted]) + [self.bonus_token]


def verify_chunk(model: TargetModel, batch: DraftBatch) -> VerifyResult:
    """
    Run the context plus drafts through the target once. The last context
    token and the drafts (n + 1 rows) form the chunk that goes through the
    sparse kernel; its logits predict draft k at row k and the bonus token
    at the first mismatch (or after the last draft).
    """
    sequence = list(batch.context) + list(batch.drafts)
    start = len(batch.context) - 1
    result = model.forward(sequence, sparse_from=start)
    predictions = np.argmax(result.logits[start:], axis=1)
    accepted = 0
    while accepted < batch.n and batch.drafts[accepted] == int(predictions[accepted]):
        accepted += 1
    return VerifyResult(accepted, int(predictions[accepted]), list(result.plans), batch.drafts)
