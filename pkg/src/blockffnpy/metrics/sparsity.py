# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Token-level, chunk-level, reuse and union sparsity.

An expert is activated by a token when |A| is strictly above the
threshold (default 0, exact nonzero). Every metric depends on the support
only.
"""
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from blockffnpy.common import ContractViolation

DEFAULT_CHUNK_LENGTHS = (1, 2, 4, 8, 16, 32)


def activated(a: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Boolean activation mask."""
    if a.ndim != 2 or a.shape[0] < 1:
        raise ContractViolation("activations must be a non-empty 2-D tensor")
    return np.abs(a) > threshold


def tls(a: np.ndarray, threshold: float = 0.0) -> float:
    """Mean fraction of inactive experts per token."""
    return float(np.mean(~activated(a, threshold)))


def cls(a: np.ndarray, chunk_len: int, threshold: float = 0.0) -> float:
    """
    Mean fraction of experts inactive for every token of a chunk, over
    consecutive disjoint chunks aligned at 0; the trailing partial chunk is
    dropped.
    """
    mask = activated(a, threshold)
    rows, width = mask.shape
    if chunk_len < 1:
        raise ContractViolation("chunk length must be positive")
    if rows < chunk_len:
        raise ContractViolation(f"sequence shorter than chunk ({rows} < {chunk_len})")
    chunks = mask[: rows - rows % chunk_len].reshape(-1, chunk_len, width)
    return float(np.mean(~chunks.any(axis=1)))


def reuse_ratio(a: np.ndarray, threshold: float = 0.0) -> Optional[float]:
    """
    Mean over consecutive pairs of |S_i & S_i+1| / |S_i|; pairs whose first
    token activates nothing are left out. None when no pair remains.
    """
    mask = activated(a, threshold)
    if mask.shape[0] < 2:
        raise ContractViolation("reuse ratio needs at least two tokens")
    sizes = mask[:-1].sum(axis=1)
    kept = sizes > 0
    if not np.any(kept):
        return None
    shared = (mask[:-1] & mask[1:]).sum(axis=1)
    return float(np.mean(shared[kept] / sizes[kept]))


def union_sparsity(a: np.ndarray, threshold: float = 0.0) -> float:
    """1 - |union of activated experts| / N_e over an arbitrary token set."""
    mask = activated(a, threshold)
    return 1.0 - float(mask.any(axis=0).sum()) / mask.shape[1]


def activation_magnitude(a: np.ndarray) -> float:
    """Mean over tokens of the L2 norm of the activation row."""
    if a.ndim != 2 or a.shape[0] < 1:
        raise ContractViolation("activations must be a non-empty 2-D tensor")
    return float(np.mean(np.linalg.norm(a, axis=1)))


@dataclass
class SparsityReport:
    """Sparsity summary of one layer (or of a layer mean)."""
    tls: float
    cls: Dict[int, float] = field(default_factory=dict)
    reuse_ratio: Optional[float] = None
    union_sparsity: Optional[float] = None
    token_count: int = 0
    magnitude: Optional[float] = None

    def to_dict(self) -> dict:
        """JSON-ready mapping; CLS keys become strings."""
        data = asdict(self)
        data["cls"] = {str(length): value for length, value in self.cls.items()}
        return data

    def to_json(self) -> str:
        """Serialise as JSON."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def sparsity_report(a: np.ndarray, chunk_lengths: Iterable[int] = DEFAULT_CHUNK_LENGTHS,
                    threshold: float = 0.0, with_union: bool = False) -> SparsityReport:
    """Every metric over one token stream; chunk lengths beyond its length are skipped."""
    rows = a.shape[0]
    return SparsityReport(
        tls=tls(a, threshold),
        cls={length: cls(a, length, threshold) for length in chunk_lengths if length <= rows},
        reuse_ratio=reuse_ratio(a, threshold) if rows >= 2 else None,
        union_sparsity=union_sparsity(a, threshold) if with_union else None,
        token_count=rows,
        magnitude=activation_magnitude(a),
    )


def mean_report(reports: Iterable[SparsityReport]) -> SparsityReport:
    """Average per-layer reports field by field."""
    reports = list(reports)
    if not reports:
        raise ContractViolation("no reports to average")

    def _mean(values):
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else None

    lengths = set.intersection(*(set(r.cls) for r in reports))
    return SparsityReport(
        tls=_mean(r.tls for r in reports),
        cls={length: _mean(r.cls[length] for r in reports) for length in sorted(lengths)},
        reuse_ratio=_mean(r.reuse_ratio for r in reports),
        union_sparsity=_mean(r.union_sparsity for r in reports),
        token_count=reports[0].token_count,
        magnitude=_mean(r.magnitude for r in reports),
    )
