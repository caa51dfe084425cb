# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Chunk-union FFN kernel.

Up projection: the hidden states of all n tokens are multiplied with the
gathered weights of each tile of union experts, giving ``mid``; entries of
(token, expert) pairs outside the activation pattern are then masked out.
Down projection: the masked, A-weighted ``mid`` of every tile is
accumulated into Y, tile after tile in union order.

The expert-major loops mirror a GEMM whose outer loop (up projection) and
inner loop (down projection) scan only union experts.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional

import numpy as np

from blockffnpy.common import ContractViolation, ExpertKind
from blockffnpy.ffn import FfnConfig, FfnParams
from blockffnpy.kernel.union_plan import ChunkUnionPlan
from blockffnpy.numerics import swish

# 8 experts of d_e = 16 against d_h = 64 float32 weights: 32 KiB per
# projection tile, an L1/L2-resident working set.
EXPERT_TILE = 8
# 32 tokens per row tile, the verification chunk size.
TOKEN_TILE = 32


def _tiles(experts: np.ndarray):
    for start in range(0, experts.size, EXPERT_TILE):
        yield start, experts[start:start + EXPERT_TILE]


def _gather_columns(weights: np.ndarray, experts: np.ndarray, d_e: int) -> np.ndarray:
    columns = (experts[:, None] * d_e + np.arange(d_e)[None, :]).reshape(-1)
    return np.ascontiguousarray(weights[:, columns])


def _gather_rows(weights: np.ndarray, experts: np.ndarray, d_e: int) -> np.ndarray:
    rows = (experts[:, None] * d_e + np.arange(d_e)[None, :]).reshape(-1)
    return np.ascontiguousarray(weights[rows, :])


def _up_tile(x: np.ndarray, params: FfnParams, experts: np.ndarray, d_e: int) -> np.ndarray:
    w_up = _gather_columns(params.w_up, experts, d_e)
    mid = np.empty((x.shape[0], w_up.shape[1]), dtype=x.dtype)
    for row in range(0, x.shape[0], TOKEN_TILE):
        mid[row:row + TOKEN_TILE] = swish(x[row:row + TOKEN_TILE] @ w_up)
    return mid


def _down_tile(y: np.ndarray, mid: np.ndarray, weights: np.ndarray, params: FfnParams,
               experts: np.ndarray, d_e: int) -> None:
    w_down = _gather_rows(params.w_down, experts, d_e)
    weighted = mid * np.repeat(weights, d_e, axis=1)
    for row in range(0, y.shape[0], TOKEN_TILE):
        y[row:row + TOKEN_TILE] += weighted[row:row + TOKEN_TILE] @ w_down


def _check_kind(config: FfnConfig) -> None:
    if config.expert_kind is not ExpertKind.NONGATED_SWISH:
        raise ContractViolation("the chunk kernel only runs non-gated experts")


def gathered_up_projection(x: np.ndarray, params: FfnParams, plan: ChunkUnionPlan,
                           config: FfnConfig, workers: int = 1) -> Dict[int, np.ndarray]:
    """
    Unmasked ``mid`` = Swish(X W_up) for every tile of union experts, keyed
    by the tile's start offset in the union. Tiles write disjoint outputs,
    so they may run on a thread pool.
    """
    _check_kind(config)
    if x.shape != (plan.n_tokens, config.d_h):
        raise ContractViolation(f"chunk shape {x.shape} does not match the plan")
    tiles = list(_tiles(plan.union_indices))
    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mids = list(pool.map(lambda tile: _up_tile(x, params, tile[1], config.d_e), tiles))
    else:
        mids = [_up_tile(x, params, experts, config.d_e) for _, experts in tiles]
    return {start: mid for (start, _), mid in zip(tiles, mids)}


def masked_down_projection(mids: Dict[int, np.ndarray], params: FfnParams,
                           plan: ChunkUnionPlan, a: np.ndarray,
                           config: FfnConfig) -> np.ndarray:
    """
    Mask ``mid`` by the activation pattern, weight it by A and accumulate
    Y tile by tile in union order. Masked entries never reach Y.
    """
    _check_kind(config)
    plan.check_against(a)
    y = np.zeros((plan.n_tokens, config.d_h), dtype=a.dtype)
    for start, experts in _tiles(plan.union_indices):
        keep = np.repeat(plan.per_token_mask[:, experts], config.d_e, axis=1)
        mid = np.where(keep, mids[start], 0.0).astype(y.dtype, copy=False)
        _down_tile(y, mid, a[:, experts], params, experts, config.d_e)
    return y


def sparse_chunk_ffn(x: np.ndarray, params: FfnParams, plan: ChunkUnionPlan,
                     a: np.ndarray, config: FfnConfig, workers: int = 1) -> np.ndarray:
    """The layer output for one chunk, touching only union experts."""
    plan.check_against(a)
    mids = gathered_up_projection(x, params, plan, config, workers)
    return masked_down_projection(mids, params, plan, a, config)


def dense_chunk_ffn(x: np.ndarray, params: FfnParams, a: np.ndarray,
                    config: FfnConfig, experts: Optional[np.ndarray] = None) -> np.ndarray:
    """
    The same tiled routine over every expert (or ``experts``), unmasked:
    the dense reference the sparse path is benchmarked and compared against.
    """
    _check_kind(config)
    experts = np.arange(config.n_experts) if experts is None else experts
    y = np.zeros((x.shape[0], config.d_h), dtype=a.dtype)
    for _, tile in _tiles(experts):
        _down_tile(y, _up_tile(x, params, tile, config.d_e), a[:, tile], params, tile,
                   config.d_e)
    return y
