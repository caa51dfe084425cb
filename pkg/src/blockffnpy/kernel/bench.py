# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""Wall-clock comparison of the chunk kernel against the dense routine."""
import csv
import logging
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, List

import numpy as np

from blockffnpy.ffn import FfnConfig, init_ffn_params
from blockffnpy.kernel.cost import cost_accounting
from blockffnpy.kernel.sparse_chunk import dense_chunk_ffn, sparse_chunk_ffn
from blockffnpy.kernel.union_plan import build_union_plan

_log = logging.getLogger(__name__)

# Shortest total measured time per side before the repetition count is widened.
MIN_MEASURED_NS = 5_000_000
MAX_REPEATS = 1 << 16


@dataclass(frozen=True)
class BenchRow:
    """One density of the benchmark table."""
    density: float
    n: int
    d_h: int
    d_e: int
    n_experts: int
    sparse_ns: float
    dense_ns: float
    bytes_ratio: float


def synthetic_activations(n: int, n_experts: int, density: float,
                          rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """
    Activations whose union covers round(density * N_e) experts; every union
    expert is active for most tokens and for at least one.
    """
    union_size = int(round(density * n_experts))
    a = np.zeros((n, n_experts), dtype=dtype)
    if union_size == 0:
        return a
    union = np.sort(rng.choice(n_experts, size=union_size, replace=False))
    live = rng.random((n, union_size)) < 0.8
    live[rng.integers(0, n, size=union_size), np.arange(union_size)] = True
    a[:, union] = np.where(live, rng.uniform(0.1, 1.0, size=(n, union_size)), 0.0)
    return a


def _time_ns(fn, repeats: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    while True:
        start = time.perf_counter_ns()
        for _ in range(repeats):
            fn()
        elapsed = time.perf_counter_ns() - start
        if elapsed >= MIN_MEASURED_NS or repeats >= MAX_REPEATS:
            return elapsed / repeats
        _log.warning("%d repeats took %d ns, widening the repetition count", repeats, elapsed)
        repeats *= 4


def bench_chunk_ffn(config: FfnConfig, densities: Iterable[float], n: int = 32,
                    repeats: int = 20, warmup: int = 3, seed: int = 0) -> List[BenchRow]:
    """Mean nanoseconds per chunk, sparse against dense, for every union density."""
    rng = np.random.default_rng(seed)
    params = init_ffn_params(config, rng, dtype=np.float32)
    x = rng.normal(size=(n, config.d_h)).astype(np.float32)
    rows = []
    for density in densities:
        a = synthetic_activations(n, config.n_experts, density, rng)
        plan = build_union_plan(a)
        sparse_ns = _time_ns(lambda: sparse_chunk_ffn(x, params, plan, a, config), repeats, warmup)
        dense_ns = _time_ns(lambda: dense_chunk_ffn(x, params, a, config), repeats, warmup)
        ratio = float(cost_accounting(plan, config).bytes_ratio)
        row = BenchRow(density, n, config.d_h, config.d_e, config.n_experts,
                       sparse_ns, dense_ns, ratio)
        _log.info("density %.2f: sparse %.0f ns, dense %.0f ns", density, sparse_ns, dense_ns)
        rows.append(row)
    return rows


def write_bench_csv(rows: Iterable[BenchRow], path: Path) -> None:
    """Columns: density, n, d_h, d_e, N_e, sparse_ns, dense_ns, bytes_ratio."""
    header = [f.name if f.name != "n_experts" else "N_e" for f in fields(BenchRow)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(astuple(row))
