"""Structural features of a sparse matrix used by the configuration decider.

Three groups: size (n, n_hat, nnz, delta, d, d_hat, d_max), degree
distribution (cv, cv_hat, sr1, sr2) and data locality (rho, b, b_max, pr1,
pr2). None of them depend on the dense operand, so a matrix is measured once
and reused for every ``dim``.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import SchemaError, UndefinedMetricError
from .matrix_io import CsrMatrix
from .pcsr import pcsr_metrics

FEATURE_SCHEMA_VERSION = 1

# fixed column order; bump FEATURE_SCHEMA_VERSION when it changes
FEATURE_NAMES = (
    "n", "n_hat", "nnz", "delta", "d", "d_hat", "d_max",
    "cv", "cv_hat", "sr1", "sr2",
    "rho", "b", "b_max", "pr1", "pr2",
)


@dataclass(frozen=True)
class FeatureVector:
    n: int
    n_hat: int
    nnz: int
    delta: float
    d: float
    d_hat: float
    d_max: int
    cv: float
    cv_hat: float
    sr1: float
    sr2: float
    rho: float
    b: float
    b_max: int
    pr1: float
    pr2: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, astuple(self)))

    @classmethod
    def from_mapping(cls, row) -> "FeatureVector":
        missing = [k for k in FEATURE_NAMES if k not in row]
        if missing:
            raise SchemaError(f"feature columns missing: {missing}")
        kw = {}
        for f in fields(cls):
            raw = row[f.name]
            kw[f.name] = int(float(raw)) if f.type in (int, "int") else float(raw)
        return cls(**kw)


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


def _cv(x):
    mean = x.mean()
    return float(x.std() / mean) if mean > 0 else 0.0


def row_bandwidths(A: CsrMatrix) -> np.ndarray:
    """Last minus first column index per row; 0 for empty and single-entry rows."""
    deg = A.degrees()
    bw = np.zeros(A.n, dtype=np.int64)
    full = deg > 0
    first = A.col_idx[A.row_ptr[:-1][full]]
    last = A.col_idx[A.row_ptr[1:][full] - 1]
    bw[full] = last - first
    return bw


def extract_features(A: CsrMatrix, omega=32) -> FeatureVector:
    if A.nnz == 0:
        raise UndefinedMetricError("features undefined for a matrix without nonzeros")
    deg = A.degrees().astype(np.float64)
    nonempty = deg[deg > 0]
    bw = row_bandwidths(A)
    m1 = pcsr_metrics(A, 1, omega)
    m2 = pcsr_metrics(A, 2, omega)
    n, nnz = A.n, A.nnz
    return FeatureVector(
        n=n,
        n_hat=len(nonempty),
        nnz=nnz,
        delta=len(nonempty) / n,
        d=nnz / n,
        d_hat=nnz / len(nonempty),
        d_max=int(deg.max()),
        cv=_cv(deg),
        cv_hat=_cv(nonempty),
        sr1=m1.SR,
        sr2=m2.SR,
        rho=nnz / (n * n),
        b=float(bw.mean()),
        b_max=int(bw.max()),
        pr1=m1.PR,
        pr2=m2.PR,
    )


def write_feature_csv(path, items):
    """``items``: iterable of ``(id, FeatureVector)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("id",) + FEATURE_NAMES)
        for ident, fv in items:
            w.writerow((ident,) + astuple(fv))


def read_feature_csv(path):
    with open(path, newline="") as fh:
        return [(row["id"], FeatureVector.from_mapping(row)) for row in csv.DictReader(fh)]
