import numpy as np
import pytest

from paramspmm.engine import (
    benchmark_config,
    enumerate_warp_tasks,
    lane_sweeps,
    spmm,
    spmm_csr_reference,
    spmm_pcsr,
)
from paramspmm.errors import DimensionMismatchError, ParameterError
from paramspmm.matrix_io import CsrMatrix, dense_oracle_spmm, generate_synthetic, random_dense
from paramspmm.pcsr import LatticeSpec, SpmmConfig, build_pcsr, split_ratio

from conftest import random_csr

RTOL, ATOL = 1e-4, 1e-6


def close(C, A, B):
    return np.allclose(C, dense_oracle_spmm(A, B), rtol=RTOL, atol=ATOL)


# --- task grid ---------------------------------------------------------------


def test_three_tasks_one_column():
    tasks = enumerate_warp_tasks(3, SpmmConfig(2, 1, 1, False, 32))
    assert [(t.blk_x, t.blk_y, t.warp_id) for t in tasks] == [(0, 0, 0), (0, 0, 1), (1, 0, 0)]
    assert [t.crow for t in tasks] == [0, 1, 2]


def test_coarsened_single_column():
    cfg = SpmmConfig(2, 3, 1, False, 96)
    tasks = enumerate_warp_tasks(4, cfg)
    assert {t.blk_y for t in tasks} == {0}
    assert lane_sweeps(0, cfg).tolist() == [3] * 32


def test_residual_segment():
    cfg = SpmmConfig(2, 1, 1, False, 48)
    tasks = enumerate_warp_tasks(2, cfg)
    assert sorted({t.blk_y for t in tasks}) == [0, 1]
    assert {t.seg for t in tasks} == {0, 32}
    assert int((lane_sweeps(32, cfg) > 0).sum()) == 16


@pytest.mark.parametrize("rows, W, dim, omega, F", [(5, 2, 70, 32, 1), (7, 4, 33, 4, 3), (1, 8, 1, 32, 1)])
def test_grid_exact_cover(rows, W, dim, omega, F):
    cfg = SpmmConfig(W, F, 1, False, dim, omega)
    cover = {}
    for t in enumerate_warp_tasks(rows, cfg):
        assert t.crow < rows and t.seg < dim
        for lane in range(omega):
            for j in range(lane_sweeps(t.seg, cfg)[lane]):
                col = t.seg + j * omega + lane
                cover[(t.crow, col)] = cover.get((t.crow, col), 0) + 1
    assert cover == {(r, c): 1 for r in range(rows) for c in range(dim)}


def test_grid_needs_rows():
    with pytest.raises(ParameterError):
        enumerate_warp_tasks(0, SpmmConfig(2, 1, 1, False, 32))


# --- CSR reference -----------------------------------------------------------


def test_csr_reference():
    B = random_dense(10, 45, seed=3)
    assert np.array_equal(spmm_csr_reference(CsrMatrix.identity(10), B), B)
    A = random_csr(10, 0.3, 1)
    assert close(spmm_csr_reference(A, B, W=2, omega=32), A, B)


def test_csr_reference_single_row_trace():
    A = CsrMatrix.from_coo(4, [0], [1], [2.0])
    B = random_dense(4, 6, seed=0)
    C = spmm_csr_reference(A, B, W=1, omega=4)
    assert np.array_equal(C[0], 2 * B[1])
    assert not C[1:].any()


# --- PCSR engine -------------------------------------------------------------


@pytest.mark.parametrize("dim", [16, 48, 96])
@pytest.mark.parametrize("mode", ["lockstep", "trace"])
def test_full_lattice_matches_oracle(dim, mode):
    A = random_csr(64, 0.08, dim)
    B = random_dense(64, dim, seed=dim + 1)
    for cfg in LatticeSpec().configs(dim):
        C, rep = spmm_pcsr(build_pcsr(A, cfg), B, mode=mode)
        assert C.dtype == np.float32
        assert close(C, A, B), cfg


def test_identity_exact_everywhere():
    A = CsrMatrix.identity(9)
    for omega in (4, 32):
        B = random_dense(9, 37, seed=omega)
        for cfg in LatticeSpec(omega=omega).configs(37):
            for mode in ("lockstep", "trace"):
                C, _ = spmm(A, B, cfg, mode=mode)
                assert np.array_equal(C, B), (cfg, mode)


def test_balanced_sharing_matches_unbalanced():
    # row 0 carries 12 nonzeros, every other row one; SG = 4 splits row 0 over three warps
    rows = [0] * 12 + list(range(1, 12))
    cols = list(range(12)) + list(range(11))
    A = CsrMatrix.from_coo(12, rows, cols, np.arange(1, 24, dtype=float))
    B = random_dense(12, 8, seed=5)
    bal = build_pcsr(A, SpmmConfig(2, 1, 1, True, 8, omega=4))
    assert bal.sg == 4
    assert bal.t_row[:3].tolist() == [0, 0, 0]
    plain = build_pcsr(A, SpmmConfig(2, 1, 1, False, 8, omega=4))
    for mode in ("lockstep", "trace"):
        C1, _ = spmm_pcsr(bal, B, mode=mode)
        C0, _ = spmm_pcsr(plain, B, mode=mode)
        assert np.allclose(C1, C0, rtol=1e-6, atol=1e-7)
        assert close(C1, A, B)


@pytest.mark.parametrize("dim", [1, 31, 33, 47, 65, 100])
def test_boundary_dims(dim):
    A = generate_synthetic("powerlaw", 150, None, dim)
    B = random_dense(150, dim, seed=2)
    for cfg in LatticeSpec(Ws=(4,)).configs(dim):
        C, _ = spmm(A, B, cfg)
        assert close(C, A, B), cfg


def test_exact_integer_accumulation():
    # small integers add exactly in floating point, so every schedule must agree bit for bit
    A = random_csr(40, 0.3, 9, integer=True)
    B = np.random.default_rng(0).integers(-3, 4, size=(40, 20)).astype(np.float32)
    expect = (A.to_dense() @ B.astype(np.float64)).astype(np.float32)
    for cfg in LatticeSpec(Ws=(2,), Ss=(True,), omega=4).configs(20):
        P = build_pcsr(A, cfg)
        for kw in ({}, {"threads": 3}, {"mode": "trace", "threads": 4},
                   {"mode": "trace", "threads": 4, "deterministic": True}):
            C, _ = spmm_pcsr(P, B, **kw)
            assert np.array_equal(C, expect), (cfg, kw)


def test_schedule_independence():
    A = generate_synthetic("community", 300, None, 4)
    B = random_dense(300, 96, seed=4)
    for cfg in (SpmmConfig(4, 1, 2, True, 96), SpmmConfig(2, 3, 1, False, 96)):
        P = build_pcsr(A, cfg)
        ref, _ = spmm_pcsr(P, B, threads=1)
        for threads in (2, 4):
            C, _ = spmm_pcsr(P, B, threads=threads)
            assert np.allclose(C, ref, rtol=RTOL, atol=ATOL)
            C, _ = spmm_pcsr(P, B, mode="trace", threads=threads)
            assert np.allclose(C, ref, rtol=RTOL, atol=ATOL)


# --- counts and benchmarking -------------------------------------------------


@pytest.mark.parametrize("V", [1, 2])
@pytest.mark.parametrize("S", [False, True])
def test_counts(V, S):
    A = generate_synthetic("powerlaw", 200, None, 1)
    dim = 50
    B = random_dense(200, dim, seed=1)
    P = build_pcsr(A, SpmmConfig(2, 2, V, S, dim, omega=16))
    _, lock = spmm_pcsr(P, B)
    _, trace = spmm_pcsr(P, B, mode="trace")
    assert lock.mac_ops == trace.mac_ops == P.nnz_v * V * dim
    assert lock.atomic_writes == trace.atomic_writes
    assert lock.direct_writes == trace.direct_writes
    if S:
        assert lock.direct_writes == 0 and lock.atomic_writes == P.num_warp_rows * V * dim
    else:
        assert lock.atomic_writes == 0 and lock.direct_writes == P.num_panels * V * dim


def test_write_ratio_tracks_split_ratio():
    A = generate_synthetic("powerlaw", 3000, {"exponent": 1.8}, 2)
    B = random_dense(3000, 32, seed=0)
    _, bal = spmm(A, B, SpmmConfig(2, 1, 1, True, 32))
    _, plain = spmm(A, B, SpmmConfig(2, 1, 1, False, 32))
    sr = split_ratio(A, 1, 32)
    assert sr > 1
    assert bal.atomic_writes / plain.direct_writes == pytest.approx(sr, rel=1e-3)


def test_benchmark_config():
    A = generate_synthetic("uniform", 200, None, 0)
    B = random_dense(200, 32, seed=0)
    rep, C = benchmark_config(A, SpmmConfig(2, 1, 1, False, 32), B, repeats=3, return_output=True)
    assert rep.elapsed > 0
    assert rep.gflops == pytest.approx(2 * A.nnz * 32 / rep.elapsed / 1e9)
    assert close(C, A, B)
    with pytest.raises(ParameterError):
        benchmark_config(A, SpmmConfig(2, 1, 1, False, 32), B, repeats=2)


def test_engine_errors():
    A = CsrMatrix.identity(4)
    P = build_pcsr(A, SpmmConfig(2, 1, 1, False, 8))
    with pytest.raises(DimensionMismatchError):
        spmm_pcsr(P, np.zeros((5, 8), np.float32))
    with pytest.raises(DimensionMismatchError):
        spmm_pcsr(P, np.zeros((4, 9), np.float32))
    with pytest.raises(ParameterError):
        spmm_pcsr(P, np.zeros((4, 8), np.float32), mode="gpu")
