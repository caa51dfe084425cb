# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
from fractions import Fraction

import numpy as np
import pytest

from blockffnpy.common import ContractViolation
from blockffnpy.ffn import FfnConfig, expert_forward, init_ffn_params
from blockffnpy.kernel import (
    bench_chunk_ffn,
    build_union_plan,
    cost_accounting,
    dense_chunk_ffn,
    gathered_up_projection,
    masked_down_projection,
    sparse_chunk_ffn,
    synthetic_activations,
    write_bench_csv,
)
from blockffnpy.metrics import union_sparsity

CHUNK = FfnConfig(d_h=64, d_e=16, n_experts=64)


def _chunk(seed, density=0.3, n=32, config=CHUNK, dtype=np.float32):
    rng = np.random.default_rng(seed)
    params = init_ffn_params(config, rng, dtype=dtype)
    x = rng.normal(size=(n, config.d_h)).astype(dtype)
    a = synthetic_activations(n, config.n_experts, density, rng, dtype=dtype)
    sums = a.sum(axis=1, keepdims=True)
    a = np.where(sums > 0, a / np.where(sums > 0, sums, 1), 0).astype(dtype)
    return params, x, a


def _expert_sum(x, params, a, config):
    y = np.zeros((x.shape[0], config.d_h), dtype=x.dtype)
    for i in range(config.n_experts):
        y += a[:, i:i + 1] * expert_forward(x, params, config, i)
    return y


def test_union_plan_examples():
    plan = build_union_plan(np.zeros((4, 8)))
    assert plan.union_size == 0
    assert not plan.per_token_mask.any()

    a = np.zeros((4, 8))
    a[2, 5] = 0.3
    plan = build_union_plan(a)
    assert plan.union_indices.tolist() == [5]
    assert plan.n_tokens == 4


def test_union_plan_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = (rng.random((8, 12)) < 0.2) * rng.normal(size=(8, 12))
        expected = sorted({i for k in range(8) for i in range(12) if a[k, i] != 0})
        plan = build_union_plan(a)
        assert plan.union_indices.tolist() == expected
        np.testing.assert_array_equal(plan.per_token_mask, a != 0)
        np.testing.assert_array_equal(build_union_plan(a).union_indices, plan.union_indices)


@pytest.mark.parametrize("density", [0.1, 0.25, 0.6])
def test_sparse_kernel_matches_expert_sum(density):
    for seed in range(5):
        params, x, a = _chunk(seed, density)
        plan = build_union_plan(a)
        y = sparse_chunk_ffn(x, params, plan, a, CHUNK)
        reference = _expert_sum(x, params, a, CHUNK)
        assert np.max(np.abs(y - reference)) < 1e-5


def test_sparse_kernel_of_empty_union_is_zero():
    params, x, _ = _chunk(1)
    a = np.zeros((32, CHUNK.n_experts), dtype=np.float32)
    y = sparse_chunk_ffn(x, params, build_union_plan(a), a, CHUNK)
    np.testing.assert_array_equal(y, 0.0)


def test_full_union_is_bitwise_dense():
    params, x, _ = _chunk(2, dtype=np.float64)
    a = np.random.default_rng(2).uniform(0.1, 1.0, size=(32, CHUNK.n_experts))
    y = sparse_chunk_ffn(x, params, build_union_plan(a), a, CHUNK)
    np.testing.assert_array_equal(y, dense_chunk_ffn(x, params, a, CHUNK))


def test_kernel_is_deterministic_across_workers():
    params, x, a = _chunk(4, density=0.8, dtype=np.float64)
    plan = build_union_plan(a)
    serial = sparse_chunk_ffn(x, params, plan, a, CHUNK, workers=1)
    threaded = sparse_chunk_ffn(x, params, plan, a, CHUNK, workers=4)
    np.testing.assert_array_equal(serial, threaded)


def test_kernel_contract_violations():
    params, x, a = _chunk(5)
    plan = build_union_plan(a)
    other = a.copy()
    other[0] = 0.0
    other[0, 0] = 1.0
    with pytest.raises(ContractViolation):
        sparse_chunk_ffn(x, params, plan, other, CHUNK)
    with pytest.raises(ContractViolation):
        gathered_up_projection(x[:4], params, plan, CHUNK)

    gated = FfnConfig(d_h=8, d_e=2, n_experts=4, expert_kind="gated_swish")
    gated_params, gated_x, gated_a = _chunk(5, n=4, config=gated)
    with pytest.raises(ContractViolation):
        sparse_chunk_ffn(gated_x, gated_params, build_union_plan(gated_a), gated_a, gated)


def test_cost_accounting_examples():
    a = np.ones((32, CHUNK.n_experts), dtype=np.float32)
    assert cost_accounting(build_union_plan(a), CHUNK).bytes_ratio == 1

    a = np.zeros((32, CHUNK.n_experts), dtype=np.float32)
    a[:, ::4] = 1.0
    report = cost_accounting(build_union_plan(a), CHUNK)
    assert report.bytes_ratio == Fraction(1, 4)
    assert report.flops_sparse * 4 == report.flops_dense
    assert report.union_density == 0.25


def test_cost_accounting_matches_straight_line_counting():
    rng = np.random.default_rng(6)
    for _ in range(50):
        a = (rng.random((32, CHUNK.n_experts)) < rng.uniform(0.0, 0.1)).astype(np.float32)
        plan = build_union_plan(a)
        report = cost_accounting(plan, CHUNK, bytes_per_param=2)
        union = len({i for k in range(32) for i in range(CHUNK.n_experts) if a[k, i]})
        assert report.expert_weight_bytes_touched == union * 2 * 64 * 16 * 2
        assert report.dense_expert_weight_bytes == 64 * 2 * 64 * 16 * 2
        assert report.flops_sparse == union * 32 * 2 * 64 * 16
        assert report.union_density == pytest.approx(1.0 - union_sparsity(a))


def test_synthetic_activations_hit_the_requested_union():
    rng = np.random.default_rng(7)
    for density in (0.0, 0.25, 1.0):
        a = synthetic_activations(32, 64, density, rng)
        assert build_union_plan(a).union_size == round(density * 64)


def test_bench_table(tmp_path):
    config = FfnConfig(d_h=16, d_e=4, n_experts=8)
    rows = bench_chunk_ffn(config, [0.0, 1.0], n=8, repeats=1, warmup=0)
    assert [row.density for row in rows] == [0.0, 1.0]
    assert rows[0].bytes_ratio == 0.0
    assert rows[1].bytes_ratio == 1.0
    path = tmp_path / "bench.csv"
    write_bench_csv(rows, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "density,n,d_h,d_e,N_e,sparse_ns,dense_ns,bytes_ratio"


@pytest.mark.slow
def test_sparse_kernel_is_faster_at_low_density():
    rows = bench_chunk_ffn(CHUNK, [0.0, 0.25], repeats=50)
    assert rows[0].sparse_ns < rows[0].dense_ns
    assert rows[1].sparse_ns < rows[1].dense_ns


def test_sparse_kernel_over_many_random_chunks():
    rng = np.random.default_rng(8)
    params = init_ffn_params(CHUNK, rng, dtype=np.float32)
    for _ in range(1000):
        x = rng.normal(size=(32, CHUNK.d_h)).astype(np.float32)
        density = rng.uniform(0.05, 0.95)
        a = ((rng.random((32, CHUNK.n_experts)) < density)
             * rng.uniform(0.0, 2.0 / (density * CHUNK.n_experts), size=(32, CHUNK.n_experts)))
        a = a.astype(np.float32)
        plan = build_union_plan(a)
        y = sparse_chunk_ffn(x, params, plan, a, CHUNK)
        reference = _expert_sum(x, params, a, CHUNK)
        assert np.max(np.abs(y - reference)) < 1e-5

        mids = gathered_up_projection(x, params, plan, CHUNK)
        for start, mid in mids.items():
            experts = plan.union_indices[start:start + mid.shape[1] // CHUNK.d_e]
            keep = np.repeat(plan.per_token_mask[:, experts], CHUNK.d_e, axis=1)
            mid[~keep] = np.nan
        np.testing.assert_array_equal(masked_down_projection(mids, params, plan, a, CHUNK), y)
