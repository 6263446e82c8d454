import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramspmm.errors import DimensionMismatchError, MatrixMarketError, ParameterError
from paramspmm.matrix_io import (
    GENERATOR_KINDS,
    CsrMatrix,
    dense_oracle_spmm,
    generate_synthetic,
    load_matrix_market,
    random_dense,
    read_dense,
    synthetic_corpus,
    triple_loop_spmm,
    write_dense,
    write_matrix_market,
)

from conftest import random_csr


def mm(tmp_path, text, name="a.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def bandwidths(A):
    out = []
    for i in range(A.n):
        cols = A.col_idx[A.row_ptr[i]:A.row_ptr[i + 1]]
        out.append(int(cols[-1] - cols[0]) if len(cols) else 0)
    return np.array(out)


# --- loading -----------------------------------------------------------------


def test_load_basic(tmp_path):
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate real general\n3 3 2\n1 1 2.0\n3 2 5.0\n")
    A = load_matrix_market(p)
    assert A.n == 3
    assert A.row_ptr.tolist() == [0, 1, 1, 2]
    assert A.col_idx.tolist() == [0, 1]
    assert A.val.tolist() == [2.0, 5.0]


def test_duplicates_are_summed(tmp_path):
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 1.0\n")
    A = load_matrix_market(p)
    assert A.nnz == 1 and A.val[0] == 2.0


def test_symmetric_expansion(tmp_path):
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n2 1 3.0\n")
    A = load_matrix_market(p)
    assert A.to_dense().tolist() == [[0.0, 3.0], [3.0, 0.0]]


def test_skew_symmetric_and_pattern(tmp_path):
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 3.0\n")
    assert load_matrix_market(p).to_dense().tolist() == [[0.0, -3.0], [3.0, 0.0]]
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate pattern general\n% comment\n3 3 2\n1 2\n3 3\n", "b.mtx")
    A = load_matrix_market(p)
    assert A.val.tolist() == [1.0, 1.0]


def test_explicit_zero_dropped_and_rectangular_padded(tmp_path):
    p = mm(tmp_path, "%%MatrixMarket matrix coordinate integer general\n2 4 2\n1 4 7\n2 1 0\n")
    A = load_matrix_market(p)
    assert A.n == 4 and A.nnz == 1
    assert A.to_dense()[0, 3] == 7.0


@pytest.mark.parametrize(
    "text, line",
    [
        ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2),
        ("not a header\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    with pytest.raises(MatrixMarketError) as exc:
        load_matrix_market(mm(tmp_path, text))
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_entry_count_mismatch(tmp_path):
    with pytest.raises(MatrixMarketError):
        load_matrix_market(mm(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n"))


@given(st.integers(1, 12), st.floats(0.05, 0.9), st.integers(0, 10_000))
def test_write_load_round_trip(tmp_path_factory, n, density, seed):
    A = random_csr(n, density, seed)
    p = tmp_path_factory.mktemp("rt") / "a.mtx"
    write_matrix_market(A, p)
    B = load_matrix_market(p)
    B.check()
    assert A == B


@given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(-3, 3)), min_size=1, max_size=20))
def test_fuzzed_files_are_canonical(tmp_path_factory, entries):
    body = "".join(f"{r} {c} {v}\n" for r, c, v in entries)
    p = tmp_path_factory.mktemp("fz") / "a.mtx"
    p.write_text(f"%%MatrixMarket matrix coordinate integer general\n6 6 {len(entries)}\n{body}")
    A = load_matrix_market(p)
    A.check()
    expect = np.zeros((6, 6))
    for r, c, v in entries:
        expect[r - 1, c - 1] += v
    assert np.array_equal(A.to_dense(), expect)
    for i in range(A.n):
        cols = A.col_idx[A.row_ptr[i]:A.row_ptr[i + 1]]
        assert np.all(np.diff(cols) > 0)


def test_csr_is_read_only():
    A = CsrMatrix.identity(3)
    with pytest.raises(ValueError):
        A.val[0] = 5.0


# --- generators --------------------------------------------------------------


def test_banded_tridiagonal():
    A = generate_synthetic("banded", 8, {"half_width": 1}, seed=0)
    assert bandwidths(A).max() <= 2
    d = A.to_dense()
    assert np.all(d[np.abs(np.subtract.outer(range(8), range(8))) > 1] == 0)


@pytest.mark.parametrize("hw", [1, 3, 7])
def test_banded_bound(hw):
    A = generate_synthetic("banded", 200, {"half_width": hw, "density": 0.5}, seed=hw)
    assert bandwidths(A).max() <= 2 * hw


def test_uniform_deterministic():
    a = generate_synthetic("uniform", 1000, {"d": 8}, seed=7)
    b = generate_synthetic("uniform", 1000, {"d": 8}, seed=7)
    assert a == b
    assert a != generate_synthetic("uniform", 1000, {"d": 8}, seed=8)


def test_powerlaw_skew():
    A = generate_synthetic("powerlaw", 2000, {"exponent": 2.1}, seed=3)
    deg = [A.row_ptr[i + 1] - A.row_ptr[i] for i in range(A.n)]
    mean = sum(deg) / len(deg)
    std = (sum((x - mean) ** 2 for x in deg) / len(deg)) ** 0.5
    assert std / mean > 1.0


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
def test_generators_nonempty_and_valid(kind):
    for seed in range(3):
        A = generate_synthetic(kind, 50, None, seed)
        A.check()
        assert A.nnz >= 1
        assert np.all(A.val > 0)  # duplicate edges may sum past 1


@pytest.mark.parametrize(
    "kind, n, params",
    [
        ("powerlaw", 100, {"exponent": 1.0}),
        ("banded", 10, {"half_width": 10}),
        ("uniform", 1, {}),
        ("uniform", 10, {"bogus": 1}),
        ("nope", 10, {}),
    ],
)
def test_generator_rejects_bad_params(kind, n, params):
    with pytest.raises(ParameterError):
        generate_synthetic(kind, n, params, 0)


def test_synthetic_corpus_deterministic():
    a = synthetic_corpus(6, seed=2, n_range=(40, 80))
    b = synthetic_corpus(6, seed=2, n_range=(40, 80))
    assert [x[0] for x in a] == [x[0] for x in b]
    assert all(x[1] == y[1] for x, y in zip(a, b))


# --- dense and oracle --------------------------------------------------------


def test_oracle_identity_and_zero():
    B = random_dense(4, 5, seed=1)
    assert np.array_equal(dense_oracle_spmm(CsrMatrix.identity(4), B), B.astype(np.float64))
    Z = CsrMatrix.from_dense(np.zeros((4, 4)))
    assert not dense_oracle_spmm(Z, B).any()


def test_oracle_hand_example():
    A = CsrMatrix.from_dense([[1, 2], [0, 3]])
    C = dense_oracle_spmm(A, np.array([[1, 0], [1, 1]], dtype=np.float32))
    assert C.tolist() == [[3, 2], [3, 3]]


def test_oracle_matches_triple_loop():
    A = random_csr(9, 0.3, 5)
    B = random_dense(9, 4, seed=2)
    assert np.allclose(dense_oracle_spmm(A, B), triple_loop_spmm(A, B), rtol=1e-12, atol=1e-12)


def test_oracle_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        dense_oracle_spmm(CsrMatrix.identity(3), np.zeros((4, 2), np.float32))


def test_random_dense_range():
    B = random_dense(100, 10, seed=0)
    assert B.dtype == np.float32 and B.min() >= -1 and B.max() <= 1


@pytest.mark.parametrize("suffix", [".npy", ".f32"])
def test_dense_round_trip(tmp_path, suffix):
    B = random_dense(7, 3, seed=4)
    p = tmp_path / f"b{suffix}"
    write_dense(B, p)
    assert np.array_equal(read_dense(p, rows=7), B)


def test_raw_dense_needs_rows(tmp_path):
    p = tmp_path / "b.f32"
    write_dense(random_dense(3, 3), p)
    with pytest.raises(DimensionMismatchError):
        read_dense(p, rows=2)
