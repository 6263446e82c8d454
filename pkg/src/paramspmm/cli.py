"""Command-line entry point: ``paramspmm <command> ...``.

Commands
    convert   Matrix Market -> PCSR binary
    inspect   print features / PCSR metrics of a .mtx or .pcsr file
    gen       write a synthetic matrix
    bench     sweep the configuration lattice, write a long-form CSV
    train     fit one decider per dim from bench CSVs
    predict   print the predicted <W, F, V, S> for a matrix
    spmm      predict (or take flags), build PCSR, execute, write C  (alias: run)
    reorder   locality reordering of a matrix
    report    render figures and a summary for a bench CSV

Exit codes
    0  success
    1  unexpected internal error
    2  usage error (bad flags or flag values)
    3  unreadable or malformed input (Matrix Market, PCSR, dense, CSV, manifest)
    4  result verification against the dense oracle failed
    5  no model for the requested dim, or a model/feature schema mismatch
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decider as dec
from .engine import spmm_pcsr
from .errors import (
    DimensionMismatchError,
    FormatError,
    MatrixMarketError,
    ModelNotFoundError,
    ParameterError,
    ParamSpMMError,
    SchemaError,
    UndefinedMetricError,
    VerificationError,
)
from .features import FEATURE_NAMES, extract_features, row_bandwidths
from .matrix_io import (
    GENERATOR_KINDS,
    CsrMatrix,
    dense_oracle_spmm,
    generate_synthetic,
    load_matrix_market,
    random_dense,
    read_dense,
    synthetic_corpus,
    write_dense,
    write_matrix_market,
)
from .pcsr import LatticeSpec, SpmmConfig, build_pcsr, pcsr_metrics, read_pcsr, write_pcsr
from .reorder import STRATEGIES, apply_permutation, read_permutation, reorder_locality, write_permutation

log = logging.getLogger("paramspmm")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INPUT, EXIT_VERIFY, EXIT_MODEL = 0, 1, 2, 3, 4, 5

DEFAULT_DIMS = tuple(range(16, 257, 16))

BENCH_COLUMNS = (
    "matrix", "dim", "omega", "config_id", "W", "F", "V", "S",
    "elapsed_s", "gflops", "mac_ops", "atomic_writes", "direct_writes", "verified",
    *FEATURE_NAMES,
)


class UsageError(ParamSpMMError):
    pass


# ---------------------------------------------------------------------------
# run manifest


@dataclass
class RunManifest:
    """Everything one ``bench`` invocation needs.

    JSON form::

        {"inputs": ["a.mtx", ...], "dims": [16, 32], "omega": 32,
         "lattice": {"Ws": [2, 4, 8], "Vs": [1, 2], "Ss": [false, true]},
         "repeats": 5, "seed": 0, "out": "bench-out",
         "synthetic": {"count": 20, "seed": 0, "n_min": 512, "n_max": 4096}}

    ``synthetic`` is optional and adds generated matrices to ``inputs``.
    """

    inputs: list
    dims: list
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    repeats: int = 5
    seed: int = 0
    out: Path = Path("bench-out")
    synthetic: dict | None = None

    @property
    def omega(self) -> int:
        return self.lattice.omega

    def validate(self):
        if not self.dims:
            raise UsageError("dim list is empty")
        if any(int(d) < 1 for d in self.dims):
            raise UsageError("dims must be positive")
        if self.repeats < 3:
            raise UsageError("repeats must be >= 3")
        missing = [str(p) for p in self.inputs if not Path(p).is_file()]
        if missing:
            raise FormatError(f"input files not found: {missing}")
        if not self.inputs and not (self.synthetic and self.synthetic.get("count", 0) > 0):
            raise UsageError("no inputs: give matrix files or a synthetic count")
        return self

    @classmethod
    def from_json(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: cannot read manifest ({exc})") from None
        base = Path(path).parent
        lat = doc.get("lattice", {})
        try:
            lattice = LatticeSpec(
                Ws=tuple(lat.get("Ws", (2, 4, 8))),
                Vs=tuple(lat.get("Vs", (1, 2))),
                Ss=tuple(lat.get("Ss", (False, True))),
                omega=int(doc.get("omega", lat.get("omega", 32))),
            )
            return cls(
                inputs=[p if Path(p).is_absolute() else base / p for p in doc.get("inputs", [])],
                dims=[int(d) for d in doc.get("dims", DEFAULT_DIMS)],
                lattice=lattice,
                repeats=int(doc.get("repeats", 5)),
                seed=int(doc.get("seed", 0)),
                out=Path(doc.get("out", "bench-out")),
                synthetic=doc.get("synthetic"),
            )
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad manifest field ({exc})") from None

    def matrices(self):
        names = set()
        for p in self.inputs:
            name = Path(p).stem
            while name in names:
                name += "_"
            names.add(name)
            yield name, load_matrix_market(p)
        if self.synthetic and self.synthetic.get("count", 0) > 0:
            s = self.synthetic
            n_range = (int(s.get("n_min", 512)), int(s.get("n_max", 4096)))
            yield from synthetic_corpus(int(s["count"]), int(s.get("seed", self.seed)), n_range)


# ---------------------------------------------------------------------------
# helpers


def _config_from_args(args, dim):
    return SpmmConfig(args.w, args.f, args.v, args.balance, dim, args.omega)


def _choose_config(args, A, dim):
    if getattr(args, "auto", False):
        model = dec.find_model(dim, args.model)
        if model.lattice.omega != args.omega:
            log.info("using the model's warp width %d", model.lattice.omega)
        cfg = dec.predict(model, extract_features(A, model.lattice.omega))
        log.info("decider picked %s", cfg)
        return cfg
    return _config_from_args(args, dim)


def _fmt_config(cfg: SpmmConfig) -> str:
    return f"W={cfg.W} F={cfg.F} V={cfg.V} S={int(cfg.S)}"


def _read_records(paths):
    records = []
    for path in paths:
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = [c for c in ("matrix", "dim", "omega", "W", "F", "V", "S", "gflops")
                           if c not in (reader.fieldnames or [])]
                if missing:
                    raise SchemaError(f"{path}: bench columns missing: {missing}")
                records.extend(reader)
        except OSError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if not records:
        raise FormatError("bench CSV has no rows")
    return records


def _emit(pairs, out=None):
    out = out or sys.stdout
    for k, v in pairs:
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}={v}", file=out)


# ---------------------------------------------------------------------------
# commands


def cmd_convert(args):
    A = load_matrix_market(args.input)
    cfg = _choose_config(args, A, args.dim)
    P = build_pcsr(A, cfg)
    write_pcsr(P, args.output)
    _emit([("config", _fmt_config(cfg)), ("panels", P.num_panels), ("warp_rows", P.num_warp_rows),
           ("nnz_v", P.nnz_v), ("sg", P.sg), ("output", args.output)])
    return EXIT_OK


def cmd_inspect(args):
    path = Path(args.input)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"PCSR":
        P = read_pcsr(path)
        loads = P.workloads()
        pairs = [("format", "pcsr"), ("n", P.n), ("nnz", P.nnz), ("config", _fmt_config(P.config)),
                 ("dim", P.config.dim), ("omega", P.config.omega), ("panels", P.num_panels),
                 ("warp_rows", P.num_warp_rows), ("nnz_v", P.nnz_v), ("sg", P.sg),
                 ("max_workload", int(loads.max()) if len(loads) else 0),
                 ("trow", "yes" if P.config.S else "no")]
        if args.json:
            print(json.dumps(dict(pairs)))
        else:
            _emit(pairs)
        return EXIT_OK
    A = load_matrix_market(path)
    pairs = [("format", "mtx"), ("n", A.n), ("nnz", A.nnz)]
    if A.nnz:
        pairs += list(extract_features(A, args.omega).as_dict().items())
        for V in (1, 2):
            m = pcsr_metrics(A, V, args.omega)
            pairs += [(f"v{V}_nnz_v", m.nnzV), (f"v{V}_pr", m.PR), (f"v{V}_sg", m.SG), (f"v{V}_sr", m.SR)]
    if args.json:
        print(json.dumps({k: (v.item() if hasattr(v, "item") else v) for k, v in pairs}))
    else:
        _emit(pairs)
    return EXIT_OK


def _parse_params(items):
    params = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = int(v)
        except ValueError:
            try:
                params[k] = float(v)
            except ValueError:
                raise UsageError(f"--param {k}: not a number: {v!r}") from None
    return params


def cmd_gen(args):
    A = generate_synthetic(args.kind, args.n, _parse_params(args.param), args.seed)
    write_matrix_market(A, args.out, comment=f"synthetic {args.kind} n={args.n} seed={args.seed}")
    _emit([("n", A.n), ("nnz", A.nnz), ("output", args.out)])
    return EXIT_OK


def _manifest_from_args(args) -> RunManifest:
    if args.manifest:
        m = RunManifest.from_json(args.manifest)
    else:
        m = RunManifest(inputs=[Path(p) for p in args.inputs], dims=list(DEFAULT_DIMS))
    # explicit flags override the manifest
    if args.inputs and args.manifest:
        m.inputs = [Path(p) for p in args.inputs]
    if args.dim:
        m.dims = list(args.dim)
    if args.omega is not None or args.w or args.v:
        m.lattice = LatticeSpec(Ws=tuple(args.w or m.lattice.Ws), Vs=tuple(args.v or m.lattice.Vs),
                                Ss=m.lattice.Ss, omega=args.omega if args.omega is not None else m.omega)
    if args.repeats is not None:
        m.repeats = args.repeats
    if args.seed is not None:
        m.seed = args.seed
    if args.out is not None:
        m.out = Path(args.out)
    if args.synthetic:
        m.synthetic = {"count": args.synthetic, "seed": m.seed}
    return m.validate()


def cmd_bench(args):
    m = _manifest_from_args(args)
    m.out.mkdir(parents=True, exist_ok=True)
    csv_path = m.out / "bench.csv"
    rows = 0
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for k, (name, A) in enumerate(m.matrices()):
            feats = extract_features(A, m.omega).as_dict()
            for dim in m.dims:
                B = random_dense(A.n, dim, seed=[m.seed, k, dim])
                results = dec.benchmark_lattice(A, dim, m.lattice, m.repeats, B=B, seed=m.seed + k,
                                                verify=args.verify, threads=args.threads, name=name)
                for cfg, report in results:
                    writer.writerow({
                        "matrix": name, "dim": dim, "omega": m.omega, "config_id": cfg.key,
                        "W": cfg.W, "F": cfg.F, "V": cfg.V, "S": int(cfg.S),
                        "elapsed_s": f"{report.elapsed:.9g}", "gflops": f"{report.gflops:.6g}",
                        "mac_ops": report.mac_ops, "atomic_writes": report.atomic_writes,
                        "direct_writes": report.direct_writes,
                        "verified": int(bool(args.verify)), **feats,
                    })
                    rows += 1
                log.info("%s dim=%d done", name, dim)
    _emit([("rows", rows), ("csv", csv_path)])
    if args.plot:
        from .plotting import render_report

        for p in render_report(_read_records([csv_path]), m.out):
            print(f"figure={p}")
    return EXIT_OK


def cmd_train(args):
    records = _read_records(args.csv)
    dims = sorted(set(args.dim) if args.dim else {int(r["dim"]) for r in records})
    hyper = dec.HyperParams(num_trees=args.trees, max_depth=args.max_depth or None,
                            min_leaf=args.min_leaf, feature_subsample=args.max_features,
                            bootstrap=not args.no_bootstrap, seed=args.seed)
    models = []
    for dim in dims:
        corpus = dec.corpus_from_records(records, dim)
        if args.holdout > 0:
            train_part, test_part = corpus.split(1.0 - args.holdout, seed=args.seed)
            model = dec.train(train_part, hyper)
            if test_part.rows:
                s = dec.score_normalized(model, test_part, seed=args.seed)
                print(f"dim={dim} train={len(train_part.rows)} test={len(test_part.rows)} "
                      f"normalized={s.mean:.4f} random={s.random_mean:.4f}")
        else:
            model = dec.train(corpus, hyper)
            print(f"dim={dim} train={len(corpus.rows)}")
        models.append(model)
    out = Path(args.out)
    if out.is_dir() or args.out.endswith("/"):
        out = out / dec.MODEL_FILENAME
    out.parent.mkdir(parents=True, exist_ok=True)
    dec.save_models(models, out)
    print(f"model={out}")
    return EXIT_OK


def cmd_predict(args):
    A = load_matrix_market(args.input)
    args.auto = True
    print(_fmt_config(_choose_config(args, A, args.dim)))
    return EXIT_OK


def cmd_spmm(args):
    A = load_matrix_market(args.input)
    if args.b:
        B = read_dense(args.b, rows=A.n)
        if args.dim is not None and args.dim != B.shape[1]:
            raise DimensionMismatchError(f"--dim {args.dim} but B has {B.shape[1]} columns")
    elif args.dim is not None:
        B = random_dense(A.n, args.dim, args.seed)
    else:
        raise UsageError("give --dim or --b")
    cfg = _choose_config(args, A, B.shape[1])
    P = build_pcsr(A, cfg)
    C, report = spmm_pcsr(P, B, threads=args.threads)
    if args.verify and not np.allclose(C, dense_oracle_spmm(A, B), rtol=dec.RTOL, atol=dec.ATOL):
        raise VerificationError(f"verification failed: config={cfg.key}", config=cfg)
    if args.out:
        write_dense(C, args.out)
    _emit([("config", _fmt_config(cfg)), ("elapsed_s", report.elapsed), ("gflops", report.gflops),
           ("verified", int(bool(args.verify)))] + ([("output", args.out)] if args.out else []))
    return EXIT_OK


def cmd_reorder(args):
    A = load_matrix_market(args.input)
    p = read_permutation(args.perm_in) if args.perm_in else reorder_locality(A, args.strategy, args.seed)
    A2 = apply_permutation(A, p)
    write_matrix_market(A2, args.out)
    if args.perm_out:
        write_permutation(p, args.perm_out)
    before = float(row_bandwidths(A).mean()) if A.nnz else 0.0
    after = float(row_bandwidths(A2).mean()) if A2.nnz else 0.0
    _emit([("mean_bandwidth_before", before), ("mean_bandwidth_after", after), ("output", args.out)])
    return EXIT_OK


def cmd_report(args):
    from .plotting import render_report

    records = _read_records(args.csv)
    out = Path(args.out)
    for p in render_report(records, out):
        print(f"figure={p}")
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "matrix", "best_config", "best_gflops"])
        best = {}
        for r in records:
            key = (int(r["dim"]), r["matrix"])
            if key not in best or float(r["gflops"]) > best[key][1]:
                best[key] = (r["config_id"], float(r["gflops"]))
        for (dim, name), (cid, g) in sorted(best.items()):
            w.writerow([dim, name, cid, f"{g:.6g}"])
    print(f"summary={summary}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {v}")
    return v


def _add_config_flags(p, dim_required=True):
    p.add_argument("--dim", type=_positive, required=dim_required, help="dense width of B and C")
    p.add_argument("--omega", type=_positive, default=32, help="warp width (default 32)")
    p.add_argument("--w", type=_positive, default=4, help="warps per block")
    p.add_argument("--f", type=_positive, default=1, help="coarsening factor")
    p.add_argument("--v", type=int, choices=(1, 2), default=1, help="vector size")
    p.add_argument("--balance", action="store_true", help="split long panels (S=true)")
    p.add_argument("--auto", action="store_true", help="pick the configuration with the decider")
    p.add_argument("--model", help=f"model file (default ${dec.MODEL_DIR_ENV}/{dec.MODEL_FILENAME})")


def build_parser():
    ap = argparse.ArgumentParser(prog="paramspmm", description="Parameterised CSR SpMM toolkit.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="Matrix Market -> PCSR binary")
    p.add_argument("input")
    p.add_argument("output")
    _add_config_flags(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("inspect", help="features and metrics of a .mtx or .pcsr file")
    p.add_argument("input")
    p.add_argument("--omega", type=_positive, default=32)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen", help="write a synthetic matrix")
    p.add_argument("kind", choices=GENERATOR_KINDS)
    p.add_argument("n", type=_positive)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="sweep the configuration lattice")
    p.add_argument("inputs", nargs="*", help="Matrix Market files")
    p.add_argument("--manifest", help="run manifest JSON")
    p.add_argument("--dim", type=_positive, action="append", help="repeatable; default 16..256 step 16")
    p.add_argument("--omega", type=_positive)
    p.add_argument("--w", type=_positive, nargs="+", help="W values (default 2 4 8)")
    p.add_argument("--v", type=int, nargs="+", choices=(1, 2), help="V values (default 1 2)")
    p.add_argument("--synthetic", type=int, default=0, metavar="COUNT", help="add generated matrices")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--verify", action="store_true", help="check every output against the oracle")
    p.add_argument("--plot", action="store_true", help="render figures next to the CSV")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="fit deciders from bench CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--dim", type=_positive, action="append", help="dims to train (default: all present)")
    p.add_argument("--trees", type=_positive, default=100)
    p.add_argument("--max-depth", type=int, default=12, help="0 for unbounded")
    p.add_argument("--min-leaf", type=_positive, default=2)
    p.add_argument("--max-features", choices=("sqrt", "log2", "all"), default="sqrt",
                   help="features tried per split")
    p.add_argument("--no-bootstrap", action="store_true", help="fit every tree on the full corpus")
    p.add_argument("--holdout", type=float, default=0.0, help="fraction held out and scored")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file, or a directory (existing or ending in /)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="print the predicted configuration")
    p.add_argument("input")
    p.add_argument("--dim", type=_positive, required=True)
    p.add_argument("--omega", type=_positive, default=32)
    p.add_argument("--model")
    p.set_defaults(func=cmd_predict)

    for name in ("spmm", "run"):
        p = sub.add_parser(name, help="multiply a matrix by a dense operand")
        p.add_argument("input")
        _add_config_flags(p, dim_required=False)
        p.add_argument("--b", help="dense operand (.npy or raw f32 row-major)")
        p.add_argument("--seed", type=int, default=0, help="seed for a generated B")
        p.add_argument("--threads", type=_positive, default=1)
        p.add_argument("--verify", action="store_true")
        p.add_argument("--out", help="where to write C (.npy or raw f32)")
        p.set_defaults(func=cmd_spmm)

    p = sub.add_parser("reorder", help="locality reordering")
    p.add_argument("input")
    p.add_argument("--strategy", choices=STRATEGIES, default="bfs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perm-in", help="apply this permutation instead of computing one")
    p.add_argument("--perm-out", help="write the permutation used")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reorder)

    p = sub.add_parser("report", help="figures and summary for bench CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"paramspmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as exc:
        print(f"paramspmm: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ModelNotFoundError, SchemaError) as exc:
        print(f"paramspmm: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (MatrixMarketError, FormatError, DimensionMismatchError, UndefinedMetricError, ParameterError,
            OSError) as exc:
        print(f"paramspmm: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ParamSpMMError as exc:
        print(f"paramspmm: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
