"""Parameterized CSR: vectorized V x 1 blocking, nonzero-split balancing and
the configuration metrics (MAC-job gap, padding ratio, split granularity,
split ratio).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, UndefinedMetricError
from .matrix_io import INDEX_DTYPE, VALUE_DTYPE, CsrMatrix

VECTOR_SIZES = (1, 2)


def ceildiv(a, b):
    return -(-a // b)


@dataclass(frozen=True)
class SpmmConfig:
    """Kernel configuration <W, F, V, S> plus warp width and dense width."""

    W: int
    F: int
    V: int
    S: bool
    dim: int
    omega: int = 32

    def __post_init__(self):
        for name in ("W", "F", "V", "dim", "omega"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ParameterError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "S", bool(self.S))
        if self.W < 1 or self.omega < 1 or self.dim < 1:
            raise ParameterError("W, omega and dim must all be >= 1")
        if self.V not in VECTOR_SIZES:
            raise ParameterError(f"V must be one of {VECTOR_SIZES}, got {self.V}")
        if not 1 <= self.F <= self.max_F:
            raise ParameterError(f"F must lie in [1, {self.max_F}] for dim={self.dim}, omega={self.omega}")

    @property
    def max_F(self) -> int:
        return ceildiv(self.dim, self.omega)

    @property
    def key(self) -> str:
        return f"W{self.W}_F{self.F}_V{self.V}_S{int(self.S)}"

    def __str__(self):
        return f"<W={self.W}, F={self.F}, V={self.V}, S={self.S}>"


@dataclass(frozen=True)
class LatticeSpec:
    """The enumerable configuration space for one warp width.

    ``configs(dim)`` walks W, then F, then V, then S (False before True); the
    position in that walk is the config id used by the decider.
    """

    Ws: tuple = (2, 4, 8)
    Vs: tuple = VECTOR_SIZES
    Ss: tuple = (False, True)
    omega: int = 32

    def __post_init__(self):
        object.__setattr__(self, "Ws", tuple(int(w) for w in self.Ws))
        object.__setattr__(self, "Vs", tuple(int(v) for v in self.Vs))
        object.__setattr__(self, "Ss", tuple(bool(s) for s in self.Ss))
        if not self.Ws or not self.Vs or not self.Ss:
            raise ParameterError("lattice axes must be non-empty")
        if any(v not in VECTOR_SIZES for v in self.Vs):
            raise ParameterError(f"V must be drawn from {VECTOR_SIZES}")

    def configs(self, dim) -> list:
        fmax = ceildiv(int(dim), self.omega)
        return [
            SpmmConfig(W, F, V, S, dim, self.omega)
            for W in self.Ws
            for F in range(1, fmax + 1)
            for V in self.Vs
            for S in self.Ss
        ]

    def to_dict(self):
        return {"Ws": list(self.Ws), "Vs": list(self.Vs), "Ss": list(self.Ss), "omega": self.omega}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["Ws"]), tuple(d["Vs"]), tuple(d["Ss"]), int(d["omega"]))


def config_lattice(dim, omega=32, Ws=(2, 4, 8)) -> list:
    return LatticeSpec(Ws=tuple(Ws), omega=omega).configs(dim)


# ---------------------------------------------------------------------------
# vectorized blocking


@dataclass(frozen=True)
class Blocking:
    """V x 1 nonzero vectors of a matrix, grouped by row panel."""

    V: int
    num_panels: int
    panel_ptr: np.ndarray   # (num_panels + 1,)
    col_idx: np.ndarray     # (nnz_v,)
    val: np.ndarray         # (nnz_v, V), zero padded
    nnz: int

    @property
    def nnz_v(self) -> int:
        return len(self.col_idx)

    @property
    def panel_counts(self) -> np.ndarray:
        return np.diff(self.panel_ptr)

    @property
    def nonempty_panels(self) -> int:
        return int(np.count_nonzero(self.panel_counts))


def vector_blocking(A: CsrMatrix, V: int) -> Blocking:
    V = int(V)
    if V < 1:
        raise ParameterError("V must be >= 1")
    num_panels = ceildiv(A.n, V)
    rows = A.row_indices()
    panel, lane = np.divmod(rows, V)
    key = panel * A.n + A.col_idx
    if V == 1:
        order = np.arange(len(key))  # CSR order is already (row, col) sorted
    else:
        order = np.argsort(key, kind="stable")
    key = key[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    vec_of = np.cumsum(first) - 1
    ukey = key[first]
    vec_panel, vec_col = np.divmod(ukey, A.n)
    val = np.zeros((len(ukey), V), dtype=VALUE_DTYPE)
    val[vec_of, lane[order]] = A.val[order]
    panel_ptr = np.zeros(num_panels + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(vec_panel, minlength=num_panels), out=panel_ptr[1:])
    return Blocking(V, num_panels, panel_ptr, vec_col.astype(INDEX_DTYPE), val, A.nnz)


def chunk_panels(panel_ptr, sg):
    """Split every panel's vector run into consecutive chunks of <= sg vectors.

    An empty panel keeps a single empty chunk, so the balanced row pointer is
    never shorter than the unbalanced one.
    """
    counts = np.diff(panel_ptr)
    per_panel = np.maximum(1, ceildiv(counts, sg))
    t_row = np.repeat(np.arange(len(counts), dtype=INDEX_DTYPE), per_panel)
    first_chunk = np.concatenate([[0], np.cumsum(per_panel)[:-1]])
    k = np.arange(len(t_row)) - first_chunk[t_row]
    starts = panel_ptr[:-1][t_row] + k * sg
    row_ptr = np.append(starts, panel_ptr[-1]).astype(INDEX_DTYPE)
    return row_ptr, t_row


# ---------------------------------------------------------------------------
# metrics


def compute_mac_gap(dim, F, omega=32) -> int:
    """Idle MAC jobs of the residual warp in a C row.

    Zero when ``dim`` is a multiple of ``F * omega`` (there is no residual
    warp), otherwise ``min(dim, F*omega) - dim % (F*omega)``.
    """
    if dim < 1 or F < 1 or omega < 1:
        raise ParameterError("dim, F and omega must be >= 1")
    span = F * omega
    tr = dim % span
    if tr == 0:
        return 0
    return min(dim, span) - tr


def _require_nonzeros(A: CsrMatrix):
    if A.nnz == 0:
        raise UndefinedMetricError("metric undefined for a matrix without nonzeros")


def padding_ratio(A: CsrMatrix, V: int) -> float:
    """Fraction of V x 1 vector slots holding padded zeros."""
    _require_nonzeros(A)
    blk = vector_blocking(A, V)
    return 1.0 - blk.nnz / (blk.nnz_v * blk.V)


def _sg_from_blocking(blk: Blocking, omega: int) -> int:
    nep = blk.nonempty_panels
    if nep == 0:
        raise UndefinedMetricError("split granularity undefined: every row panel is empty")
    # CEILDIV(nnz_v / nep, omega) * omega, kept in exact integer arithmetic
    return ceildiv(blk.nnz_v, nep * omega) * omega


def split_granularity(A: CsrMatrix, V: int, omega: int = 32) -> int:
    """Per-warp cap on nonzero vectors under balancing; a multiple of omega."""
    _require_nonzeros(A)
    return _sg_from_blocking(vector_blocking(A, V), omega)


def split_ratio_from_counts(panel_counts, sg) -> float:
    panel_ptr = np.concatenate([[0], np.cumsum(panel_counts)]).astype(INDEX_DTYPE)
    row_ptr, _ = chunk_panels(panel_ptr, int(sg))
    return len(row_ptr) / len(panel_ptr)


def split_ratio(A: CsrMatrix, V: int, omega: int = 32) -> float:
    """Length of the balanced row pointer over the unbalanced one (>= 1)."""
    _require_nonzeros(A)
    blk = vector_blocking(A, V)
    return split_ratio_from_counts(blk.panel_counts, _sg_from_blocking(blk, omega))


@dataclass(frozen=True)
class PcsrMetrics:
    nnz: int
    nnzV: int
    PR: float
    SG: int
    SR: float
    dHatV: float


def pcsr_metrics(A: CsrMatrix, V: int, omega: int = 32) -> PcsrMetrics:
    _require_nonzeros(A)
    blk = vector_blocking(A, V)
    sg = _sg_from_blocking(blk, omega)
    return PcsrMetrics(
        nnz=blk.nnz,
        nnzV=blk.nnz_v,
        PR=1.0 - blk.nnz / (blk.nnz_v * V),
        SG=sg,
        SR=split_ratio_from_counts(blk.panel_counts, sg),
        dHatV=blk.nnz_v / blk.nonempty_panels,
    )


# ---------------------------------------------------------------------------
# PCSR


@dataclass(frozen=True, eq=False)
class Pcsr:
    """The four-array PCSR representation bound to one configuration.

    ``row_ptr`` delimits warp workloads (panels when unbalanced, chunks when
    balanced); ``t_row[w]`` is the output panel of chunk ``w`` and is empty
    without balancing. ``val`` is flat with ``V`` entries per vector.
    """

    n: int
    num_panels: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    val: np.ndarray
    t_row: np.ndarray
    config: SpmmConfig
    sg: int = 0
    nnz: int = field(default=-1)

    def __post_init__(self):
        for name, dt in (("row_ptr", INDEX_DTYPE), ("col_idx", INDEX_DTYPE), ("t_row", INDEX_DTYPE), ("val", VALUE_DTYPE)):
            a = np.array(getattr(self, name), dtype=dt, copy=True).ravel()
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.nnz < 0:
            object.__setattr__(self, "nnz", int(np.count_nonzero(self.val)))
        V = self.config.V
        if len(self.val) != len(self.col_idx) * V:
            raise FormatError("val length must equal colIdx length x V")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.col_idx) or np.any(np.diff(self.row_ptr) < 0):
            raise FormatError("rowPtr does not delimit the vector arrays")
        if self.num_panels != ceildiv(self.n, V):
            raise FormatError("numPanels inconsistent with n and V")
        if self.config.S:
            if len(self.t_row) != len(self.row_ptr) - 1:
                raise FormatError("TRow length must equal rowPtr length - 1")
            if len(self.t_row) and (self.t_row.min() < 0 or self.t_row.max() >= self.num_panels):
                raise FormatError("TRow entry outside the panel range")
        else:
            if len(self.t_row) or len(self.row_ptr) != self.num_panels + 1:
                raise FormatError("unbalanced PCSR must have empty TRow and numPanels + 1 row pointers")

    @property
    def nnz_v(self) -> int:
        return len(self.col_idx)

    @property
    def num_warp_rows(self) -> int:
        return len(self.row_ptr) - 1

    def workloads(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def vectors(self) -> np.ndarray:
        return self.val.reshape(-1, self.config.V)

    def output_panels(self) -> np.ndarray:
        """Output panel of every warp row."""
        if self.config.S:
            return self.t_row
        return np.arange(self.num_panels, dtype=INDEX_DTYPE)

    def to_csr(self) -> CsrMatrix:
        """Scatter vectors back to (row, col, value), dropping padded zeros."""
        V = self.config.V
        vec_panel = np.repeat(self.output_panels(), self.workloads())
        vals = self.vectors()
        rows = vec_panel[:, None] * V + np.arange(V)[None, :]
        cols = np.broadcast_to(self.col_idx[:, None], rows.shape)
        keep = vals != 0
        if np.any(rows[keep] >= self.n):
            raise FormatError("nonzero stored in a padded row")
        return CsrMatrix.from_coo(self.n, rows[keep], cols[keep], vals[keep])

    def __eq__(self, other):
        if not isinstance(other, Pcsr):
            return NotImplemented
        return (
            self.n == other.n
            and self.num_panels == other.num_panels
            and self.config == other.config
            and self.sg == other.sg
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("row_ptr", "col_idx", "val", "t_row")
            )
        )


def build_pcsr(A: CsrMatrix, config: SpmmConfig, sg=None) -> Pcsr:
    """Block ``A`` into V x 1 vectors and, when ``config.S``, split heavy panels.

    ``sg`` overrides the split granularity derived from the matrix.
    """
    blk = vector_blocking(A, config.V)
    if not config.S:
        return Pcsr(A.n, blk.num_panels, blk.panel_ptr, blk.col_idx, blk.val.ravel(),
                    np.empty(0, INDEX_DTYPE), config, 0, A.nnz)
    if sg is None:
        if blk.nonempty_panels == 0:
            sg = config.omega
        else:
            sg = _sg_from_blocking(blk, config.omega)
    sg = int(sg)
    if sg < 1:
        raise ParameterError("split granularity must be >= 1")
    row_ptr, t_row = chunk_panels(blk.panel_ptr, sg)
    return Pcsr(A.n, blk.num_panels, row_ptr, blk.col_idx, blk.val.ravel(), t_row, config, sg, A.nnz)


# ---------------------------------------------------------------------------
# binary file
#
# little endian, header then arrays:
#   magic "PCSR" | version u32 | n u64 | numPanels u64 | nnzV u64
#   | V u8 | S u8 | omega u16 | W u32 | F u32 | dim u32
#   | numWarpRows u64 | SG u64 | nnz u64
#   rowPtr u64[numWarpRows+1] | colIdx u32[nnzV] | val f32[nnzV*V]
#   | TRow u32[numWarpRows] (only when S = 1)

PCSR_MAGIC = b"PCSR"
PCSR_VERSION = 1
_HEADER = struct.Struct("<4sIQQQBBHIIIQQQ")


def write_pcsr(P: Pcsr, path):
    c = P.config
    header = _HEADER.pack(PCSR_MAGIC, PCSR_VERSION, P.n, P.num_panels, P.nnz_v, c.V, int(c.S),
                          c.omega, c.W, c.F, c.dim, P.num_warp_rows, P.sg, P.nnz)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(P.row_ptr.astype("<u8").tobytes())
        fh.write(P.col_idx.astype("<u4").tobytes())
        fh.write(P.val.astype("<f4").tobytes())
        if c.S:
            fh.write(P.t_row.astype("<u4").tobytes())


def read_pcsr(path) -> Pcsr:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated PCSR header")
    (magic, version, n, num_panels, nnz_v, V, S, omega, W, F, dim,
     nwr, sg, nnz) = _HEADER.unpack_from(data)
    if magic != PCSR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != PCSR_VERSION:
        raise FormatError(f"{path}: unsupported PCSR version {version}")
    sizes = [("<u8", nwr + 1), ("<u4", nnz_v), ("<f4", nnz_v * V)]
    if S:
        sizes.append(("<u4", nwr))
    expect = _HEADER.size + sum(np.dtype(dt).itemsize * k for dt, k in sizes)
    if len(data) != expect:
        raise FormatError(f"{path}: expected {expect} bytes, found {len(data)}")
    arrays, off = [], _HEADER.size
    for dt, k in sizes:
        arrays.append(np.frombuffer(data, dtype=dt, count=k, offset=off))
        off += np.dtype(dt).itemsize * k
    t_row = arrays[3] if S else np.empty(0)
    try:
        config = SpmmConfig(W, F, V, bool(S), dim, omega)
    except ParameterError as exc:
        raise FormatError(f"{path}: invalid configuration in header ({exc})") from None
    return Pcsr(n, num_panels, arrays[0], arrays[1], arrays[2], t_row, config, sg, nnz)
