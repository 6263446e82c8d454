import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramspmm.engine import spmm
from paramspmm.errors import DimensionMismatchError, FormatError, ParameterError
from paramspmm.features import extract_features, row_bandwidths
from paramspmm.matrix_io import CsrMatrix, dense_oracle_spmm, generate_synthetic, random_dense
from paramspmm.pcsr import SpmmConfig, padding_ratio
from paramspmm.reorder import (
    Permutation,
    apply_permutation,
    permute_rows,
    read_permutation,
    reorder_locality,
    write_permutation,
)

from conftest import random_csr


def scrambled_path(n, seed):
    labels = np.random.default_rng(seed).permutation(n)
    src = labels[:-1]
    dst = labels[1:]
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    return CsrMatrix.from_coo(n, rows, cols, np.ones(len(rows)))


def test_identity_strategy():
    A = generate_synthetic("uniform", 30, None, 0)
    p = reorder_locality(A, "identity")
    assert p.perm.tolist() == list(range(30))
    assert apply_permutation(A, p) == A


@pytest.mark.parametrize("strategy", ["bfs", "degree-bfs"])
@pytest.mark.parametrize("seed", range(5))
def test_scrambled_path_restored(strategy, seed):
    A = scrambled_path(200, seed)
    assert row_bandwidths(A).max() > 2
    B = apply_permutation(A, reorder_locality(A, strategy, seed))
    assert row_bandwidths(B).max() <= 2


def test_community_padding_drops():
    wins = 0
    for seed in range(20):
        A = generate_synthetic("community", 600, {"communities": 12, "d_in": 6, "d_out": 0.5}, seed)
        B = apply_permutation(A, reorder_locality(A, "bfs", seed))
        wins += padding_ratio(B, 2) <= padding_ratio(A, 2)
    assert wins >= 16


def test_disconnected_components_ordered_by_size():
    # a 2-node component and a 4-node path
    A = CsrMatrix.from_coo(6, [0, 1, 2, 3, 4, 3, 4, 5], [1, 0, 3, 2, 3, 4, 5, 4], np.ones(8))
    p = reorder_locality(A, "bfs", 0)
    assert sorted(p.perm[[2, 3, 4, 5]].tolist()) == [0, 1, 2, 3]
    assert sorted(p.perm[[0, 1]].tolist()) == [4, 5]


def test_deterministic():
    A = generate_synthetic("powerlaw", 300, None, 2)
    assert reorder_locality(A, "bfs", 7) == reorder_locality(A, "bfs", 7)


@given(st.integers(2, 25), st.floats(0.05, 0.5), st.integers(0, 9999))
def test_permutation_round_trip_and_invariants(n, density, seed):
    A = random_csr(n, density, seed)
    p = reorder_locality(A, "degree-bfs", seed)
    assert np.array_equal(p.perm[p.inverse], np.arange(n))
    B = apply_permutation(A, p)
    assert apply_permutation(B, p.inverted()) == A
    assert B.nnz == A.nnz
    assert sorted(B.degrees().tolist()) == sorted(A.degrees().tolist())
    if A.nnz:
        f, g = extract_features(A), extract_features(B)
        for name in ("d", "d_max", "cv", "rho"):
            assert getattr(f, name) == pytest.approx(getattr(g, name))


def test_spmm_consistency():
    A = generate_synthetic("community", 400, None, 3)
    B = random_dense(400, 40, seed=3)
    p = reorder_locality(A, "bfs", 3)
    A2, B2 = apply_permutation(A, p), permute_rows(B, p)
    cfg = SpmmConfig(4, 2, 2, True, 40)
    C, _ = spmm(A, B, cfg)
    C2, _ = spmm(A2, B2, cfg)
    assert np.allclose(C2, permute_rows(C, p), rtol=1e-4, atol=1e-6)
    assert np.allclose(C2, dense_oracle_spmm(A2, B2), rtol=1e-4, atol=1e-6)


def test_permutation_file(tmp_path):
    p = Permutation.from_array([2, 0, 1])
    path = tmp_path / "p.txt"
    write_permutation(p, path)
    assert path.read_text() == "2\n0\n1\n"
    assert read_permutation(path) == p
    path.write_text("0\n0\n")
    with pytest.raises(FormatError):
        read_permutation(path)
    path.write_text("0\nx\n")
    with pytest.raises(FormatError):
        read_permutation(path)


def test_permutation_errors():
    with pytest.raises(ParameterError):
        Permutation.from_array([0, 2])
    with pytest.raises(DimensionMismatchError):
        apply_permutation(CsrMatrix.identity(3), Permutation.identity(4))
    with pytest.raises(ParameterError):
        reorder_locality(CsrMatrix.identity(3), "rabbit")
