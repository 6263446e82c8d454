"""Sparse/dense matrix containers, Matrix Market I/O, synthetic generators and
the dense ground-truth SpMM used by the test suite.

All sparse matrices are square (n x n) CSR with 32-bit values. Dense matrices
are plain ``numpy`` arrays of shape ``(rows, dim)`` and dtype float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, MatrixMarketError, ParameterError

VALUE_DTYPE = np.float32
INDEX_DTYPE = np.int64


def _frozen(a, dtype):
    if isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable:
        return a
    a = np.array(a, dtype=dtype, copy=True, order="C")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Canonical compressed-sparse-row matrix.

    Columns inside a row are strictly increasing, duplicates are merged and
    explicit zeros are absent. Arrays are read-only after construction.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, INDEX_DTYPE))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, INDEX_DTYPE))
        object.__setattr__(self, "val", _frozen(self.val, VALUE_DTYPE))
        self.check()

    def check(self):
        rp, ci = self.row_ptr, self.col_idx
        if self.n < 1:
            raise ParameterError(f"matrix order must be >= 1, got {self.n}")
        if rp.shape != (self.n + 1,):
            raise ParameterError("row_ptr must have n + 1 entries")
        if rp[0] != 0 or rp[-1] != len(ci) or len(ci) != len(self.val):
            raise ParameterError("row_ptr does not delimit col_idx/val")
        if np.any(np.diff(rp) < 0):
            raise ParameterError("row_ptr must be non-decreasing")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.n:
                raise ParameterError("column index out of range")
            # strictly increasing inside each row: every non-row-start step must rise
            step = np.diff(ci)
            row_start = np.zeros(len(ci), dtype=bool)
            row_start[rp[:-1][rp[:-1] < len(ci)]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise ParameterError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self):
        return (self.n, self.n)

    def degrees(self) -> np.ndarray:
        """Row nonzero counts (out-degrees)."""
        return np.diff(self.row_ptr)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored nonzero, aligned with ``col_idx``."""
        return np.repeat(np.arange(self.n, dtype=INDEX_DTYPE), self.degrees())

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=dtype)
        out[self.row_indices(), self.col_idx] = self.val
        return out

    def to_coo(self):
        return self.row_indices(), self.col_idx.copy(), self.val.copy()

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.val, other.val)
        )

    def __repr__(self):
        return f"CsrMatrix(n={self.n}, nnz={self.nnz})"

    @classmethod
    def from_coo(cls, n, rows, cols, vals) -> "CsrMatrix":
        """Canonicalize coordinate triples: sum duplicates, drop zeros, sort."""
        rows = np.asarray(rows, dtype=INDEX_DTYPE).ravel()
        cols = np.asarray(cols, dtype=INDEX_DTYPE).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ParameterError("rows, cols and vals must have equal length")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise ParameterError(f"coordinate out of range for n={n}")
        key = rows * n + cols
        order = np.argsort(key, kind="stable")
        key, vals = key[order], vals[order]
        if len(key):
            first = np.ones(len(key), dtype=bool)
            first[1:] = key[1:] != key[:-1]
            starts = np.flatnonzero(first)
            key = key[starts]
            vals = np.add.reduceat(vals, starts)
        vals = vals.astype(VALUE_DTYPE)
        keep = vals != 0
        key, vals = key[keep], vals[keep]
        r, c = np.divmod(key, n)
        row_ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
        np.cumsum(np.bincount(r, minlength=n), out=row_ptr[1:])
        return cls(n, row_ptr, c, vals)

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ParameterError("dense input must be square")
        r, c = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], r, c, dense[r, c])

    @classmethod
    def identity(cls, n) -> "CsrMatrix":
        i = np.arange(n)
        return cls(n, np.arange(n + 1), i, np.ones(n, dtype=VALUE_DTYPE))


# ---------------------------------------------------------------------------
# Matrix Market

_FIELDS = {"real", "integer", "pattern", "double"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric"}


def load_matrix_market(path) -> CsrMatrix:
    """Read a coordinate Matrix Market file into a canonical square CsrMatrix.

    Symmetric files are expanded to both triangles, pattern entries get the
    value 1.0 and rectangular matrices are zero-padded to ``max(rows, cols)``.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)

    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing '%%MatrixMarket' banner", 1)
    obj, fmt, field, symmetry = (h.lower() for h in head[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format '{obj} {fmt}'", 1)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field '{field}'", 1)
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if text and not text.startswith("%"):
            size = text.split()
            break
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    try:
        nrows, ncols, nnz = (int(s) for s in size)
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", lineno) from None
    if nrows < 1 or ncols < 1 or nnz < 0:
        raise MatrixMarketError("invalid matrix size", lineno)

    pattern = field == "pattern"
    ntok = 2 if pattern else 3
    rows = np.empty(nnz, dtype=INDEX_DTYPE)
    cols = np.empty(nnz, dtype=INDEX_DTYPE)
    vals = np.ones(nnz, dtype=np.float64)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        if k >= nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", lineno)
        tok = text.split()
        if len(tok) != ntok:
            raise MatrixMarketError(f"expected {ntok} fields, got {len(tok)}", lineno)
        try:
            i, j = int(tok[0]), int(tok[1])
            if not pattern:
                vals[k] = float(tok[2])
        except ValueError:
            raise MatrixMarketError(f"non-numeric entry '{text}'", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) outside {nrows}x{ncols}", lineno)
        rows[k], cols[k] = i - 1, j - 1
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {k}", len(lines))

    if symmetry != "general":
        off = rows != cols
        sign = -1.0 if symmetry == "skew-symmetric" else 1.0
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    return CsrMatrix.from_coo(max(nrows, ncols), rows, cols, vals)


def write_matrix_market(A: CsrMatrix, path, comment=None):
    r, c, v = A.to_coo()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, x in zip(r.tolist(), c.tolist(), v.tolist()):
            # %.9g round-trips float32 exactly
            fh.write(f"{i + 1} {j + 1} {x:.9g}\n")


# ---------------------------------------------------------------------------
# Synthetic corpus

GENERATOR_KINDS = ("uniform", "powerlaw", "banded", "community")


def _edge_values(rng, m):
    # edge weights in (0, 1]
    return 1.0 - rng.random(m)


def generate_synthetic(kind, n, params=None, seed=0) -> CsrMatrix:
    """Deterministic synthetic sparse matrix.

    ``kind`` / recognised ``params``:

    * ``uniform``: ``d`` average nonzeros per row (default 8).
    * ``powerlaw``: ``exponent`` > 1 (default 2.1), ``d_min`` (default 1);
      row degrees follow a discrete Pareto law, columns are uniform.
    * ``banded``: ``half_width`` < n (default 1), ``density`` in (0, 1]
      (default 1.0); nonzeros only where ``|i - j| <= half_width``.
    * ``community``: ``communities`` (default 8), ``d_in`` (default 8),
      ``d_out`` (default 1); symmetric, community membership is a random
      labelling so node ids carry no locality.
    """
    params = dict(params or {})
    n = int(n)
    if n < 2:
        raise ParameterError("n must be >= 2")
    rng = np.random.default_rng(seed)

    if kind == "uniform":
        d = float(params.pop("d", 8))
        if d <= 0:
            raise ParameterError("uniform: d must be > 0")
        m = max(1, int(round(n * d)))
        rows = rng.integers(0, n, m)
        cols = rng.integers(0, n, m)
    elif kind == "powerlaw":
        exponent = float(params.pop("exponent", 2.1))
        d_min = int(params.pop("d_min", 1))
        if exponent <= 1:
            raise ParameterError("powerlaw: exponent must be > 1")
        if not 1 <= d_min <= n:
            raise ParameterError("powerlaw: d_min must lie in [1, n]")
        u = rng.random(n)
        deg = np.floor(d_min * (1.0 - u) ** (-1.0 / (exponent - 1.0)))
        deg = np.minimum(deg, n).astype(INDEX_DTYPE)
        rows = np.repeat(np.arange(n), deg)
        cols = rng.integers(0, n, len(rows))
    elif kind == "banded":
        hw = int(params.pop("half_width", 1))
        density = float(params.pop("density", 1.0))
        if not 0 <= hw < n:
            raise ParameterError("banded: half_width must lie in [0, n)")
        if not 0 < density <= 1:
            raise ParameterError("banded: density must lie in (0, 1]")
        offs = np.arange(-hw, hw + 1)
        rows = np.repeat(np.arange(n), len(offs))
        cols = rows + np.tile(offs, n)
        ok = (cols >= 0) & (cols < n)
        if density < 1:
            ok &= rng.random(len(rows)) < density
        rows, cols = rows[ok], cols[ok]
    elif kind == "community":
        k = int(params.pop("communities", 8))
        d_in = float(params.pop("d_in", 8))
        d_out = float(params.pop("d_out", 1))
        if not 1 <= k <= n:
            raise ParameterError("community: communities must lie in [1, n]")
        if d_in < 0 or d_out < 0 or d_in + d_out <= 0:
            raise ParameterError("community: degrees must be non-negative and not both zero")
        member = rng.permutation(n) % k
        groups = [np.flatnonzero(member == g) for g in range(k)]
        m_in = int(round(n * d_in / 2))
        src = rng.integers(0, n, m_in)
        g_of = member[src]
        sizes = np.array([len(g) for g in groups])
        pick = (rng.random(m_in) * sizes[g_of]).astype(INDEX_DTYPE)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        flat = np.concatenate(groups)
        dst = flat[offsets[g_of] + pick]
        m_out = int(round(n * d_out / 2))
        rows = np.concatenate([src, rng.integers(0, n, m_out)])
        cols = np.concatenate([dst, rng.integers(0, n, m_out)])
        rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
    else:
        raise ParameterError(f"unknown generator kind '{kind}' (expected one of {GENERATOR_KINDS})")

    if params:
        raise ParameterError(f"{kind}: unknown parameters {sorted(params)}")
    if len(rows) == 0:
        rows = cols = np.zeros(1, dtype=INDEX_DTYPE)
    vals = _edge_values(rng, len(rows))
    if kind == "community":
        # mirror weights so the matrix stays symmetric
        half = len(rows) // 2
        vals[half:] = vals[:half]
    A = CsrMatrix.from_coo(n, rows, cols, vals)
    if A.nnz == 0:  # pragma: no cover - weights are never zero
        raise ParameterError("generator produced an empty matrix")
    return A


# ---------------------------------------------------------------------------
# Dense matrices


def random_dense(rows, cols, seed=0) -> np.ndarray:
    """Dense operand with entries uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(rows, cols)).astype(VALUE_DTYPE)


def read_dense(path, rows=None) -> np.ndarray:
    """Load a dense matrix from ``.npy`` or a raw little-endian f32 row-major file.

    Raw files carry no shape, so ``rows`` is required for them.
    """
    path = Path(path)
    if path.suffix == ".npy":
        out = np.load(path)
        if out.ndim != 2:
            raise DimensionMismatchError(f"{path}: expected a 2-D array")
        return np.ascontiguousarray(out, dtype=VALUE_DTYPE)
    raw = np.fromfile(path, dtype="<f4")
    if rows is None or rows < 1 or raw.size % rows:
        raise DimensionMismatchError(f"{path}: {raw.size} values do not form {rows} rows")
    return raw.reshape(rows, raw.size // rows).astype(VALUE_DTYPE)


def write_dense(M, path):
    path = Path(path)
    M = np.ascontiguousarray(M, dtype=VALUE_DTYPE)
    if path.suffix == ".npy":
        np.save(path, M)
    else:
        M.astype("<f4").tofile(path)


def _check_operands(A: CsrMatrix, B):
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != A.n:
        raise DimensionMismatchError(f"B has shape {B.shape}, expected ({A.n}, dim)")
    return B


def dense_oracle_spmm(A: CsrMatrix, B) -> np.ndarray:
    """Ground truth C = A @ B in float64, from the densified operand.

    This deliberately shares no code with the engines: A is expanded to a
    dense array and multiplied with an ordinary dense product.
    """
    B = _check_operands(A, B)
    return A.to_dense(np.float64) @ B.astype(np.float64)


def triple_loop_spmm(A: CsrMatrix, B) -> np.ndarray:
    """Literal ``C[i][j] = sum_k A[i][k] * B[k][j]`` loop. Tiny inputs only."""
    B = _check_operands(A, B)
    dense = A.to_dense(np.float64)
    n, dim = B.shape
    C = np.zeros((n, dim))
    for i in range(n):
        for j in range(dim):
            s = 0.0
            for k in range(n):
                s += dense[i, k] * float(B[k, j])
            C[i, j] = s
    return C


def synthetic_corpus(count, seed=0, n_range=(512, 4096), kinds=GENERATOR_KINDS):
    """``count`` matrices cycling through ``kinds`` with randomly drawn sizes
    and generator parameters. Returns a list of ``(id, CsrMatrix)``."""
    rng = np.random.default_rng(seed)
    lo, hi = n_range
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        n = int(rng.integers(lo, hi + 1))
        if kind == "uniform":
            params = {"d": float(rng.uniform(2, 32))}
        elif kind == "powerlaw":
            params = {"exponent": float(rng.uniform(1.6, 3.0)), "d_min": int(rng.integers(1, 5))}
        elif kind == "banded":
            params = {"half_width": int(rng.integers(1, 17)), "density": float(rng.uniform(0.3, 1.0))}
        else:
            params = {"communities": int(rng.integers(4, 65)), "d_in": float(rng.uniform(2, 16)),
                      "d_out": float(rng.uniform(0, 4))}
        sub = int(rng.integers(0, 2**31))
        out.append((f"{kind}-{i:04d}", generate_synthetic(kind, n, params, sub)))
    return out
