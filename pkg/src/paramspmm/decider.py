"""Configuration decider: label matrices by exhaustive benchmarking, fit a
random forest on their structural features and predict <W, F, V, S>.

One model serves one ``dim``. Labels are joint: the class is the position
of the best configuration in ``LatticeSpec.configs(dim)``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import benchmark_configs
from .errors import (
    FormatError,
    ModelNotFoundError,
    ParameterError,
    SchemaError,
    VerificationError,
)
from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, FeatureVector, extract_features
from .forest import DecisionTree, RandomForest
from .matrix_io import dense_oracle_spmm, random_dense
from .pcsr import LatticeSpec, SpmmConfig

log = logging.getLogger(__name__)

MODEL_FORMAT = "paramspmm-decider"
MODEL_VERSION = 1
MODEL_DIR_ENV = "PARAMSPMM_MODEL_DIR"
MODEL_FILENAME = "decider.json"

RTOL, ATOL = 1e-4, 1e-6


@dataclass
class LabeledRow:
    """One matrix: its features and the throughput of every lattice config."""

    id: str
    features: FeatureVector
    throughput: np.ndarray  # GFLOPS per config id, NaN where the run failed

    @property
    def label(self) -> int:
        return int(np.nanargmax(self.throughput))

    @property
    def best(self) -> float:
        return float(np.nanmax(self.throughput))


@dataclass
class LabeledCorpus:
    dim: int
    lattice: LatticeSpec
    rows: list = field(default_factory=list)

    @property
    def configs(self) -> list:
        return self.lattice.configs(self.dim)

    def X(self) -> np.ndarray:
        return np.array([r.features.as_array() for r in self.rows])

    def y(self) -> np.ndarray:
        return np.array([r.label for r in self.rows], dtype=np.int64)

    def subset(self, idx) -> "LabeledCorpus":
        return LabeledCorpus(self.dim, self.lattice, [self.rows[i] for i in idx])

    def split(self, train_fraction=0.8, seed=0):
        """Shuffled train/test split."""
        order = np.random.default_rng(seed).permutation(len(self.rows))
        cut = int(round(train_fraction * len(order)))
        return self.subset(order[:cut]), self.subset(order[cut:])


def verify_output(C, A, B):
    expect = dense_oracle_spmm(A, B)
    return bool(np.allclose(C, expect, rtol=RTOL, atol=ATOL))


def benchmark_lattice(A, dim, lattice: LatticeSpec, repeats=5, B=None, seed=0, verify=False,
                      threads=1, name=None):
    """Benchmark every configuration of the lattice on one matrix.

    Returns a list of ``(config, EngineReport)`` in lattice order. With
    ``verify`` every output is checked against the dense oracle and a
    mismatch raises ``VerificationError``.
    """
    if B is None:
        B = random_dense(A.n, dim, seed)
    configs = lattice.configs(dim)
    check = None
    if verify:
        expect = dense_oracle_spmm(A, B)

        def check(cfg, C):
            if not np.allclose(C, expect, rtol=RTOL, atol=ATOL):
                raise VerificationError(f"{name or 'matrix'}: output differs from the oracle under {cfg}",
                                        matrix=name, config=cfg)

    reports = benchmark_configs(A, configs, B, repeats=repeats, threads=threads, seed=seed, check=check)
    return list(zip(configs, reports))


def label_corpus(matrices, dim, lattice: LatticeSpec = None, repeats=5, seed=0, verify=True,
                 threads=1) -> LabeledCorpus:
    """Exhaustively benchmark ``matrices`` (iterable of ``(id, CsrMatrix)``).

    A matrix whose benchmark fails is logged and skipped.
    """
    lattice = lattice or LatticeSpec()
    corpus = LabeledCorpus(int(dim), lattice)
    for k, (ident, A) in enumerate(matrices):
        try:
            fv = extract_features(A, lattice.omega)
            results = benchmark_lattice(A, dim, lattice, repeats, seed=seed + k, verify=verify,
                                        threads=threads, name=ident)
        except Exception as exc:  # noqa: BLE001 - any failure only drops this matrix
            log.warning("skipping %s: %s", ident, exc)
            continue
        tp = np.array([r.gflops for _, r in results])
        corpus.rows.append(LabeledRow(str(ident), fv, tp))
    return corpus


# ---------------------------------------------------------------------------
# labeled-corpus CSV: id, dim, omega, feature columns, label, one gflops_<key>
# column per lattice config in config-id order


def write_corpus_csv(corpus: LabeledCorpus, path):
    keys = [c.key for c in corpus.configs]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "dim", "omega", *FEATURE_NAMES, "label", *(f"gflops_{k}" for k in keys)])
        for r in corpus.rows:
            w.writerow([r.id, corpus.dim, corpus.lattice.omega, *r.features.as_dict().values(),
                        keys[r.label], *(repr(float(x)) for x in r.throughput)])


def corpus_from_records(records, dim, lattice: LatticeSpec = None) -> LabeledCorpus:
    """Assemble a corpus from long-form benchmark records.

    Each record is a mapping with ``matrix``, ``dim``, ``W``, ``F``, ``V``,
    ``S``, ``gflops`` and the feature columns (the ``bench`` CSV schema).
    Records for other dims are ignored.
    """
    dim = int(dim)
    by_matrix = {}
    omegas = set()
    Ws = set()
    for rec in records:
        if int(rec["dim"]) != dim:
            continue
        omegas.add(int(rec["omega"]))
        Ws.add(int(rec["W"]))
        by_matrix.setdefault(rec["matrix"], []).append(rec)
    if not by_matrix:
        raise ParameterError(f"no benchmark records for dim={dim}")
    if len(omegas) != 1:
        raise SchemaError(f"records mix warp widths {sorted(omegas)}")
    lattice = lattice or LatticeSpec(Ws=tuple(sorted(Ws)), omega=omegas.pop())
    index = {c.key: i for i, c in enumerate(lattice.configs(dim))}
    corpus = LabeledCorpus(dim, lattice)
    for name, recs in by_matrix.items():
        tp = np.full(len(index), np.nan)
        for rec in recs:
            key = SpmmConfig(int(rec["W"]), int(rec["F"]), int(rec["V"]), _truthy(rec["S"]), dim,
                             lattice.omega).key
            if key in index:
                tp[index[key]] = float(rec["gflops"])
        if np.all(np.isnan(tp)):
            continue
        corpus.rows.append(LabeledRow(str(name), FeatureVector.from_mapping(recs[0]), tp))
    return corpus


def _truthy(v):
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "t", "yes")
    return bool(v)


def read_corpus_csv(path) -> LabeledCorpus:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        cols = reader.fieldnames or []
    if not rows:
        raise FormatError(f"{path}: empty corpus")
    dim, omega = int(rows[0]["dim"]), int(rows[0]["omega"])
    keys = [c[len("gflops_"):] for c in cols if c.startswith("gflops_")]
    cfgs = [_parse_key(k, dim, omega) for k in keys]
    lattice = LatticeSpec(Ws=tuple(sorted({c.W for c in cfgs})), Vs=tuple(sorted({c.V for c in cfgs})),
                          Ss=tuple(sorted({c.S for c in cfgs})), omega=omega)
    if [c.key for c in lattice.configs(dim)] != keys:
        raise SchemaError(f"{path}: throughput columns do not follow lattice order")
    corpus = LabeledCorpus(dim, lattice)
    for row in rows:
        tp = np.array([float(row[f"gflops_{k}"]) for k in keys])
        corpus.rows.append(LabeledRow(row["id"], FeatureVector.from_mapping(row), tp))
    return corpus


def _parse_key(key, dim, omega):
    try:
        parts = dict((p[0], int(p[1:])) for p in key.split("_"))
        return SpmmConfig(parts["W"], parts["F"], parts["V"], bool(parts["S"]), dim, omega)
    except (KeyError, ValueError, IndexError) as exc:
        raise SchemaError(f"bad config key {key!r}: {exc}") from None


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class HyperParams:
    num_trees: int = 100
    max_depth: int | None = 12
    min_leaf: int = 2
    feature_subsample: object = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class DeciderModel:
    forest: RandomForest
    dim: int
    lattice: LatticeSpec
    hyper: HyperParams = field(default_factory=HyperParams)
    feature_schema: int = FEATURE_SCHEMA_VERSION

    @property
    def configs(self) -> list:
        return self.lattice.configs(self.dim)

    def to_dict(self):
        return {
            "dim": self.dim,
            "lattice": self.lattice.to_dict(),
            "feature_schema": self.feature_schema,
            "features": list(FEATURE_NAMES),
            "n_classes": self.forest.n_classes,
            "hyper": self.hyper.to_dict(),
            "trees": [t.to_dict() for t in self.forest.trees],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            if d["feature_schema"] != FEATURE_SCHEMA_VERSION or list(d["features"]) != list(FEATURE_NAMES):
                raise SchemaError(
                    f"model feature schema {d['feature_schema']} does not match {FEATURE_SCHEMA_VERSION}")
            hyper = HyperParams(**d["hyper"])
            forest = RandomForest(len(d["trees"]), hyper.max_depth, hyper.min_leaf, hyper.feature_subsample,
                                  hyper.bootstrap, hyper.seed)
            forest.n_classes = int(d["n_classes"])
            forest.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
            model = cls(forest, int(d["dim"]), LatticeSpec.from_dict(d["lattice"]), hyper, d["feature_schema"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed model: {exc}") from None
        n_cfg = len(model.configs)
        if forest.n_classes != n_cfg or any(v < 0 or v >= n_cfg for t in forest.trees for v in t.value):
            raise FormatError("model leaves reference configs outside its lattice")
        return model


def train(corpus: LabeledCorpus, hyper: HyperParams = None, workers=1) -> DeciderModel:
    if not corpus.rows:
        raise ParameterError("cannot train on an empty corpus")
    hyper = hyper or HyperParams()
    forest = RandomForest(hyper.num_trees, hyper.max_depth, hyper.min_leaf, hyper.feature_subsample,
                          hyper.bootstrap, hyper.seed, workers)
    forest.fit(corpus.X(), corpus.y(), n_classes=len(corpus.configs))
    return DeciderModel(forest, corpus.dim, corpus.lattice, hyper)


def predict(model: DeciderModel, f: FeatureVector) -> SpmmConfig:
    if not isinstance(f, FeatureVector):
        raise SchemaError(f"expected a FeatureVector, got {type(f).__name__}")
    cid = int(model.forest.predict(f.as_array()[None, :])[0])
    return model.configs[cid]


def predict_ids(model: DeciderModel, corpus: LabeledCorpus) -> np.ndarray:
    return model.forest.predict(corpus.X())


@dataclass(frozen=True)
class Score:
    mean: float
    random_mean: float
    per_matrix: np.ndarray
    random_per_matrix: np.ndarray


def score_normalized(model: DeciderModel, corpus: LabeledCorpus, seed=0) -> Score:
    """Mean of throughput(predicted) / throughput(best) over the corpus, with
    a uniformly drawn configuration as the baseline."""
    if model.dim != corpus.dim or [c.key for c in model.configs] != [c.key for c in corpus.configs]:
        raise SchemaError("model and corpus disagree on dim or lattice")
    if not corpus.rows:
        raise ParameterError("cannot score an empty corpus")
    pred = predict_ids(model, corpus)
    rng = np.random.default_rng(seed)
    rnd = rng.integers(0, len(corpus.configs), len(corpus.rows))
    norm, rnorm = [], []
    for r, p, q in zip(corpus.rows, pred, rnd):
        tp = np.nan_to_num(r.throughput, nan=0.0)
        norm.append(tp[p] / r.best)
        rnorm.append(tp[q] / r.best)
    norm, rnorm = np.array(norm), np.array(rnorm)
    return Score(float(norm.mean()), float(rnorm.mean()), norm, rnorm)


# ---------------------------------------------------------------------------
# model bundle: {"format", "version", "models": {"<dim>": model}}


def save_models(models, path):
    if isinstance(models, DeciderModel):
        models = [models]
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_schema": FEATURE_SCHEMA_VERSION,
        "models": {str(m.dim): m.to_dict() for m in models},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_models(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a model file ({exc})") from None
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"{path}: model version {doc.get('version')} is not {MODEL_VERSION}")
    if doc.get("feature_schema") != FEATURE_SCHEMA_VERSION:
        raise SchemaError(f"{path}: feature schema {doc.get('feature_schema')} is not {FEATURE_SCHEMA_VERSION}")
    return {int(k): DeciderModel.from_dict(v) for k, v in doc["models"].items()}


def default_model_path():
    root = os.environ.get(MODEL_DIR_ENV)
    return Path(root) / MODEL_FILENAME if root else None


def find_model(dim, path=None) -> DeciderModel:
    path = path or default_model_path()
    if path is None or not Path(path).exists():
        raise ModelNotFoundError(f"no model file (pass --model or set {MODEL_DIR_ENV})")
    models = load_models(path)
    if int(dim) not in models:
        raise ModelNotFoundError(f"{path}: no model for dim={dim} (have {sorted(models)})")
    return models[int(dim)]
