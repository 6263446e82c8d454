"""CPU emulation of the warp-task SpMM kernels.

Two executors share the same grid: ``(blkX, blkY, warpId)`` with
``Crow = blkX * W + warpId`` selecting a warp row (panel or balanced chunk)
and ``seg = blkY * omega * F`` selecting a column segment of C.

``trace``
    Runs every warp task on its own, iterating its nonzero vectors one at a
    time; lanes (and the F coarsened sweeps) are a vectorised inner loop.
    Slow, literal, used to validate the fast path.

``lockstep``
    A compiled loop nest over the same grid. Inside a thread block every warp
    steps through as many iterations as the block's longest warp (the extra
    ones are idle and read a zero row), so load imbalance costs time the way
    it does on SIMT hardware. Each vector fetches its column index and V
    values once and reuses every B value V times. This executor gets timed.

Partial sums are kept in float64 and C is rounded to float32 once at the end.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatchError, ParameterError
from .matrix_io import VALUE_DTYPE, CsrMatrix
from .pcsr import Pcsr, SpmmConfig, build_pcsr, ceildiv

MODES = ("lockstep", "trace")


@dataclass(frozen=True)
class WarpTask:
    blk_x: int
    blk_y: int
    warp_id: int
    W: int
    omega: int
    F: int

    @property
    def crow(self) -> int:
        return self.blk_x * self.W + self.warp_id

    @property
    def seg(self) -> int:
        return self.blk_y * self.omega * self.F


@dataclass(frozen=True)
class EngineReport:
    elapsed: float
    mac_ops: int
    atomic_writes: int
    direct_writes: int = 0
    nnz: int = 0
    dim: int = 0

    @property
    def gflops(self) -> float:
        if self.elapsed <= 0:
            return float("inf")
        return 2.0 * self.nnz * self.dim / self.elapsed / 1e9


def grid_shape(num_warp_rows, config: SpmmConfig):
    return ceildiv(num_warp_rows, config.W), ceildiv(config.dim, config.omega * config.F)


def enumerate_warp_tasks(num_warp_rows, config: SpmmConfig) -> list:
    """Live warp tasks of the 2-D grid, ordered by (blkX, blkY, warpId)."""
    if num_warp_rows < 1:
        raise ParameterError("num_warp_rows must be >= 1")
    gx, gy = grid_shape(num_warp_rows, config)
    W, omega, F = config.W, config.omega, config.F
    return [
        WarpTask(bx, by, w, W, omega, F)
        for bx in range(gx)
        for by in range(gy)
        for w in range(W)
        if bx * W + w < num_warp_rows
    ]


def lane_sweeps(seg, config: SpmmConfig) -> np.ndarray:
    """MAC sweeps per lane: ``min(F, CEILDIV(dim - (seg + lane), omega))``, floored at 0."""
    lane_seg = seg + np.arange(config.omega)
    t = np.minimum(config.F, -(-(config.dim - lane_seg) // config.omega))
    return np.maximum(t, 0)


def _operands(n, B):
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatchError(f"B has shape {B.shape}, expected ({n}, dim)")
    # trailing zero row backs idle lockstep slots
    B64 = np.zeros((n + 1, B.shape[1]))
    B64[:n] = B.astype(VALUE_DTYPE)
    return B64


# ---------------------------------------------------------------------------
# Algorithm 1: plain CSR


def spmm_csr_reference(A: CsrMatrix, B, W=4, omega=32) -> np.ndarray:
    """Row-wise CSR SpMM, one warp per C row and omega-wide segment.

    Lanes whose column falls past ``dim`` stay idle, so ``dim`` need not be a
    multiple of omega.
    """
    B64 = _operands(A.n, B)
    dim = B64.shape[1]
    cfg = SpmmConfig(W, 1, 1, False, dim, omega)
    C = np.zeros((A.n, dim))
    for task in enumerate_warp_tasks(A.n, cfg):
        lanes = task.seg + np.arange(omega)
        lanes = lanes[lanes < dim]
        res = np.zeros(len(lanes))
        for i in range(A.row_ptr[task.crow], A.row_ptr[task.crow + 1]):
            res += float(A.val[i]) * B64[A.col_idx[i], lanes]
        C[task.crow, lanes] = res
    return C.astype(VALUE_DTYPE)


# ---------------------------------------------------------------------------
# Algorithm 2: PCSR


def _check_pcsr(P: Pcsr, B64):
    dim = B64.shape[1]
    if dim != P.config.dim:
        raise DimensionMismatchError(f"B has {dim} columns but the PCSR was built for dim={P.config.dim}")


def _counts(P: Pcsr):
    c = P.config
    mac = P.nnz_v * c.V * c.dim
    writes = (P.num_warp_rows if c.S else P.num_panels) * c.V * c.dim
    return mac, (writes if c.S else 0), (0 if c.S else writes)


def _finish(P: Pcsr, C64):
    return C64[: P.n].astype(VALUE_DTYPE)


def _run_trace(P: Pcsr, B64, threads, deterministic):
    c = P.config
    V, dim = c.V, c.dim
    vecs = P.vectors()
    C64 = np.zeros((P.num_panels * V, dim))
    tasks = enumerate_warp_tasks(P.num_warp_rows, c)
    lock = threading.Lock()
    partials = [None] * len(tasks)
    lane = np.arange(c.omega)

    def run(k):
        task = tasks[k]
        seg, crow = task.seg, task.crow
        t = lane_sweeps(seg, c)
        res = np.zeros((V, c.F, c.omega))
        active = np.arange(c.F)[:, None] < t[None, :]          # (F, omega)
        cols = np.where(active, seg + np.arange(c.F)[:, None] * c.omega + lane[None, :], 0)
        macs = 0
        for i in range(P.row_ptr[crow], P.row_ptr[crow + 1]):
            brow = P.col_idx[i]                                 # fetched once per vector
            v = vecs[i]                                         # V values fetched once
            bval = np.where(active, B64[brow, cols], 0.0)       # each B value reused V times
            res += v[:, None, None] * bval[None, :, :]
            macs += int(t.sum()) * V
        rows = ((P.t_row[crow] if c.S else crow) * V + np.arange(V))[:, None]
        out_cols = cols[active][None, :]
        out = res[:, active]
        if not c.S:
            C64[rows, out_cols] = out
        elif deterministic:
            partials[k] = (rows, out_cols, out)
        else:
            with lock:  # atomicAdd; (row, col) pairs are distinct within a task
                C64[rows, out_cols] += out
        return macs, int(active.sum()) * V

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            stats = list(pool.map(run, range(len(tasks))))
    else:
        stats = [run(k) for k in range(len(tasks))]
    if c.S and deterministic:
        for rows, out_cols, out in partials:
            C64[rows, out_cols] += out
    mac = sum(s[0] for s in stats)
    writes = sum(s[1] for s in stats)
    return C64, mac, (writes if c.S else 0), (0 if c.S else writes)


@njit(cache=True, nogil=True)
def _lockstep_kernel(row_ptr, col_idx, val, out_panel, B, C, V, F, omega, W, dim,
                     accumulate, by_lo, by_hi):  # pragma: no cover - compiled
    nwr = len(row_ptr) - 1
    nblk = (nwr + W - 1) // W
    zero_row = B.shape[0] - 1
    span = omega * F
    res = np.zeros((V, span))
    vk = np.zeros(V)
    for bx in range(nblk):
        # every warp of the block steps through as many iterations as its longest warp
        steps = 0
        for w in range(W):
            r = bx * W + w
            if r < nwr and row_ptr[r + 1] - row_ptr[r] > steps:
                steps = row_ptr[r + 1] - row_ptr[r]
        for by in range(by_lo, by_hi):
            seg = by * span
            width = min(span, dim - seg)  # lanes past dim run fewer sweeps
            for w in range(W):
                r = bx * W + w
                if r >= nwr:
                    break
                head = row_ptr[r]
                load = row_ptr[r + 1] - head
                for k in range(V):
                    for c in range(width):
                        res[k, c] = 0.0
                for i in range(steps):
                    if i < load:
                        brow = col_idx[head + i]
                        for k in range(V):
                            vk[k] = val[(head + i) * V + k]
                    else:  # idle iteration
                        brow = zero_row
                        for k in range(V):
                            vk[k] = 0.0
                    brow_vals = B[brow, seg:seg + width]
                    for k in range(V):
                        a = vk[k]
                        rk = res[k]
                        for c in range(width):
                            rk[c] += a * brow_vals[c]
                base = out_panel[r] * V
                for k in range(V):
                    rk = res[k]
                    ck = C[base + k]
                    if accumulate:
                        for c in range(width):
                            ck[seg + c] += rk[c]
                    else:
                        for c in range(width):
                            ck[seg + c] = rk[c]


def _run_lockstep(P: Pcsr, B64, threads):
    c = P.config
    C64 = np.zeros((P.num_panels * c.V, c.dim))
    gy = ceildiv(c.dim, c.omega * c.F)
    out_panel = P.output_panels()
    out_panel.flags.writeable = False  # one compiled specialisation for both S values
    args = (P.row_ptr, P.col_idx, P.val, out_panel, B64, C64, c.V, c.F, c.omega, c.W, c.dim, c.S)
    if threads > 1 and gy > 1:
        # split the grid by blkY: column ranges are disjoint, so no two workers touch one C element
        edges = np.linspace(0, gy, min(threads, gy) + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda k: _lockstep_kernel(*args, edges[k], edges[k + 1]), range(len(edges) - 1)))
    else:
        _lockstep_kernel(*args, 0, gy)
    return C64


def spmm_pcsr(P: Pcsr, B, mode="lockstep", threads=1, deterministic=False):
    """C = A @ B from a PCSR. Returns ``(C, EngineReport)``.

    With ``config.S`` partial results are accumulated into C. In ``trace``
    mode with threads the accumulation is lock-protected (atomic) and
    ``deterministic=True`` replays it in task order instead. ``lockstep`` is
    always deterministic: workers own disjoint column ranges.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}")
    B64 = _operands(P.n, B)
    _check_pcsr(P, B64)
    threads = max(1, int(threads))
    t0 = time.perf_counter()
    if mode == "trace":
        C64, mac, atomic, direct = _run_trace(P, B64, threads, deterministic)
    else:
        C64 = _run_lockstep(P, B64, threads)
        mac, atomic, direct = _counts(P)
    elapsed = time.perf_counter() - t0
    report = EngineReport(elapsed, mac, atomic, direct, P.nnz, P.config.dim)
    return _finish(P, C64), report


def spmm(A: CsrMatrix, B, config: SpmmConfig, **kwargs):
    return spmm_pcsr(build_pcsr(A, config), B, **kwargs)


def benchmark_config(A: CsrMatrix, config: SpmmConfig, B, repeats=5, threads=1, warmup=2,
                     return_output=False):
    """Time the lockstep kernel for one configuration.

    PCSR generation and warm-up happen before the clock starts; the
    reported time is the minimum over ``repeats`` runs.
    """
    if repeats < 3:
        raise ParameterError("repeats must be >= 3")
    P = build_pcsr(A, config)
    B64 = _operands(A.n, B)
    _check_pcsr(P, B64)
    for _ in range(max(1, warmup)):  # first call may compile
        C64 = _run_lockstep(P, B64, threads)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        C64 = _run_lockstep(P, B64, threads)
        best = min(best, time.perf_counter() - t0)
    mac, atomic, direct = _counts(P)
    report = EngineReport(best, mac, atomic, direct, A.nnz, config.dim)
    if return_output:
        return report, _finish(P, C64)
    return report


def benchmark_configs(A: CsrMatrix, configs, B, repeats=5, threads=1, warmup=2, seed=0, check=None):
    """Time several configurations against each other on one input.

    Every PCSR is built and warmed up first (``check(config, C)`` is called
    on each warm-up output, if given). Timing then runs in ``repeats``
    rounds; each round visits every configuration once, in a freshly
    shuffled order, so clock and cache drift spread evenly instead of
    favouring whichever configuration happens to run late. Each report
    carries the minimum over its rounds. Reports come back in input order.
    """
    if repeats < 3:
        raise ParameterError("repeats must be >= 3")
    B64 = _operands(A.n, B)
    plans = []
    for cfg in configs:
        P = build_pcsr(A, cfg)
        _check_pcsr(P, B64)
        for _ in range(max(1, warmup)):
            C64 = _run_lockstep(P, B64, threads)
        if check is not None:
            check(cfg, _finish(P, C64))
        plans.append(P)
    best = np.full(len(plans), np.inf)
    rng = np.random.default_rng(seed)
    for _ in range(repeats):
        for i in rng.permutation(len(plans)):
            t0 = time.perf_counter()
            _run_lockstep(plans[i], B64, threads)
            best[i] = min(best[i], time.perf_counter() - t0)
    return [EngineReport(float(t), *_counts(P), A.nnz, P.config.dim) for t, P in zip(best, plans)]
