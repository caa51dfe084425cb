# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0

"""Export the chunk-union kernel, its cost model and benchmark."""
from .union_plan import ChunkUnionPlan, build_union_plan
from .sparse_chunk import (
    EXPERT_TILE,
    TOKEN_TILE,
    dense_chunk_ffn,
    gathered_up_projection,
    masked_down_projection,
    sparse_chunk_ffn,
)
from .cost import CostReport, cost_accounting
from .bench import BenchRow, bench_chunk_ffn, synthetic_activations, write_bench_csv
