# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Per-token expert allocation histogram."""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from blockffnpy.common import ContractViolation
from blockffnpy.metrics.sparsity import activated


@dataclass
class AllocationHistogram:
    """For every vocabulary id: occurrence count and mean activated-expert ratio."""
    entries: Dict[int, Tuple[int, float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total(self) -> int:
        """Total token occurrences."""
        return sum(count for count, _ in self.entries.values())

    def write_csv(self, path: Path) -> None:
        """Columns: token_id, frequency, mean_ratio."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["token_id", "frequency", "mean_ratio"])
            for token_id in sorted(self.entries):
                count, ratio = self.entries[token_id]
                writer.writerow([token_id, count, f"{ratio:.6f}"])


def allocation_histogram(token_ids: np.ndarray, a: np.ndarray,
                         threshold: float = 0.0) -> AllocationHistogram:
    """Accumulate |S| / N_e per occurrence of every token id."""
    token_ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
    if token_ids.size == 0:
        return AllocationHistogram()
    if token_ids.shape[0] != a.shape[0]:
        raise ContractViolation(f"{token_ids.shape[0]} ids for {a.shape[0]} activation rows")
    ratios = activated(a, threshold).mean(axis=1)
    entries = {}
    for token_id in np.unique(token_ids):
        picked = ratios[token_ids == token_id]
        entries[int(token_id)] = (int(picked.size), float(picked.mean()))
    return AllocationHistogram(entries)
