"""``wunt`` command-line interface.

Subcommands: ``estimate``, ``transform``, ``simulate``, ``bench`` and
``demo-warmup``.  Exit codes: 0 success, 2 configuration error, 3 input
schema error, 4 numerical failure (no overlap, separation), 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import KEYS, RunConfig, describe_keys
from .data import load_csv
from .errors import ConfigError, DataError, WuntError
from .estimator import estimate_ipw_logistic, estimate_kernel, estimate_projection, export_weights
from .transformer import SmoothingKernel, fit_transformer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def default_threads() -> int:
    env = os.environ.get("WUNT_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"WUNT_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"WUNT_THREADS must be a positive integer, got {env!r}")
        return n
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _int_list(text):
    try:
        vals = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected comma-separated positive integers, got {text!r}")
    return vals


def _float_list(text):
    try:
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# --------------------------------------------------------------------------
# output helpers


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def csv_to_markdown(text: str) -> str:
    """Render CSV text as a Markdown table (CSV stays the source of truth)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return ""
    head, body = rows[0], rows[1:]
    out = ["| " + " | ".join(head) + " |", "|" + "|".join("---" for _ in head) + "|"]
    for r in body:
        cells = []
        for c in r:
            try:
                x = float(c)
                cells.append(c if x == int(x) and "." not in c and "e" not in c else f"{x:.4g}")
            except ValueError:
                cells.append(c)
        out.append("| " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _emit_table(rows, path, fmt) -> None:
    text = rows_to_csv(rows)
    if fmt == "markdown":
        text = csv_to_markdown(text)
    _emit(text, path)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# --------------------------------------------------------------------------
# configuration


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration keys (also accepted in the --config JSON file)")
    g.add_argument("--config", metavar="FILE", help="JSON file of configuration keys")
    for k, key in KEYS.items():
        default = "auto" if key.default is None else key.default
        g.add_argument(f"--{k}", dest=f"cfg:{k}", metavar="V", default=None, help=f"{key.help} (default: {default})")


def build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig.defaults()
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return cfg.update(overrides)


# --------------------------------------------------------------------------
# subcommands


def _header(path) -> list[str]:
    with Path(path).open(newline="") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _load(args, outcome=True):
    cov = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    y = args.outcome
    if not outcome:
        # transform: the outcome column is optional and only passed through
        if not y or (y == "Y" and Path(args.data).is_file() and y not in _header(args.data)):
            y = None
    return load_csv(args.data, args.treatment, y, cov)


def _extra_controls(args, ds):
    if not args.extra:
        return None
    names = list(ds.covariate_names)
    header = _header(args.extra)
    missing = [c for c in names if c not in header]
    if missing:
        raise DataError(f"{args.extra}: missing column {missing[0]!r}")
    # the pool carries covariates only; a dummy treatment column is not required
    rows = np.loadtxt(args.extra, delimiter=",", skiprows=1, ndmin=2, usecols=[header.index(c) for c in names])
    return rows


def _transformer(cfg: RunConfig, ds, extra):
    return fit_transformer(
        cfg["transformer"],
        ds,
        extra,
        cfg["rescale.margin"],
        SmoothingKernel(cfg["smoothing.kernel"]),
        cfg["partition.allocation"],
    )


def cmd_estimate(args) -> int:
    cfg = build_config(args)
    ds = _load(args)
    ds.check_estimable()
    kind = cfg["estimator"]
    if kind == "ipw-logistic":
        report = estimate_ipw_logistic(ds)
    else:
        t = _transformer(cfg, ds, _extra_controls(args, ds))
        n = cfg.rate_n(ds.n, ds.n0, ds.n1)
        if kind == "kernel":
            report = estimate_kernel(ds, t, cfg.product_kernel(n, ds.d), args.threads)
        else:
            report = estimate_projection(ds, t, cfg.projection_basis(n, ds.d), args.threads)
    report.config = {**cfg.to_dict(), **report.config}
    if args.weights:
        export_weights(report, args.weights, clip_negative=args.clip_negative)
    _emit(json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n", args.out)
    return EXIT_OK


def cmd_transform(args) -> int:
    cfg = build_config(args)
    ds = _load(args, outcome=False)
    t = _transformer(cfg, ds, _extra_controls(args, ds))
    u = t.transform(ds.covariates)
    rows = []
    for i in range(ds.n):
        row = {"row": i, args.treatment: int(ds.treatment[i])}
        if ds.outcome is not None:
            row[args.outcome] = float(ds.outcome[i])
        row.update({f"U_{nm}": float(v) for nm, v in zip(ds.covariate_names, u[i])})
        rows.append(row)
    _emit(rows_to_csv(rows), args.out)
    if args.partition_json:
        Path(args.partition_json).write_text(json.dumps(t.describe(), indent=2, default=_json_default) + "\n")
    return EXIT_OK


def _study_specs(args, cfg):
    from .sim import STUDY_TUNING, parse_spec

    specs = []
    for name in args.estimators.split(","):
        name = name.strip()
        if not name:
            continue
        kind = name.lower().split("+")[0]
        try:
            spec = parse_spec(name, **{**STUDY_TUNING.get(kind, {}), **(cfg.spec_overrides() if kind != "ipw" else {})})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        specs.append(spec)
    if not specs:
        raise ConfigError("no estimators given")
    return specs


def cmd_simulate(args) -> int:
    from .sim import run_replications

    cfg = build_config(args)
    specs = _study_specs(args, cfg)
    res = run_replications(
        args.model,
        specs,
        args.reps,
        args.seed,
        n=args.n,
        rho=args.rho,
        n1=args.n1,
        n0=args.n0,
        threads=args.threads,
    )
    _emit_table(res.table(), args.out, args.format)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .sim import time_transformer, timing_bench

    cfg = build_config(args)
    specs = _study_specs(args, cfg)
    tab = timing_bench(specs, args.sizes, args.seed, args.reps, args.model, backend=args.backend, rounds=args.rounds, stage=args.stage)
    rows = tab.rows()
    if args.transformer_n:
        secs = time_transformer(args.transformer_n, args.seed)
        rows.append({"estimator": f"joint-transformer-build(n={args.transformer_n})", **{f"n={n}": None for n in tab.sizes}, "slope": None, "seconds": secs})
        for r in rows[:-1]:
            r["seconds"] = None
    _emit_table(rows, args.out, args.format)
    return EXIT_OK


def cmd_demo_warmup(args) -> int:
    from .warmup import WarmupDesign, default_grid, run_warmup

    design = WarmupDesign(n=args.n, response=args.response, bins=args.bins, beta=args.beta, design_seed=args.seed)
    grid = args.bandwidths if args.bandwidths else default_grid(args.n, args.grid_size)
    res = run_warmup(design, grid, args.reps, args.seed)
    _emit_table(res.rows(), args.out, args.format)
    sys.stderr.write(f"MSE-minimising h = {res.best_bandwidth:.4g}; density-optimal n^(-1/(1+2 beta)) = {design.h_density():.4g}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wunt",
        description="Weighting by uniform transformer: ATT estimation, simulation studies and timing.",
        epilog="configuration keys and defaults:\n" + describe_keys() + "\n\nexit codes: 0 ok, 2 config, 3 input schema, 4 numerical (overlap/separation), 5 I/O",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"wunt {__version__}")
    p.add_argument("--error-format", choices=("text", "json"), default="text", help="format of error messages on stderr (default: text)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def errfmt(sp):
        sp.add_argument("--error-format", choices=("text", "json"), default=argparse.SUPPRESS, help="format of error messages on stderr (default: text)")

    def common(sp):
        errfmt(sp)
        sp.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: $WUNT_THREADS or available cores)")
        _add_config_flags(sp)

    def data_args(sp, outcome_required):
        sp.add_argument("--data", required=True, help="input CSV with a header row")
        sp.add_argument("--treatment", default="Z", help="treatment column (default: Z)")
        sp.add_argument(
            "--outcome",
            default="Y",
            help="outcome column (default: Y)" + ("" if outcome_required else "; passed through when present, '' for none"),
        )
        sp.add_argument("--covariates", default=None, help="comma-separated covariate columns (default: all other columns)")
        sp.add_argument("--extra", default=None, help="CSV of unlabeled control covariates used to build the transformer")

    e = sub.add_parser("estimate", help="estimate the ATT from a CSV file", formatter_class=argparse.RawDescriptionHelpFormatter, epilog=describe_keys())
    data_args(e, True)
    e.add_argument("--out", default="-", help="JSON report path (default: stdout)")
    e.add_argument("--weights", default=None, help="write per-unit weights to this CSV")
    e.add_argument("--clip-negative", action="store_true", help="clip negative control weights to 0 in the weights CSV and renormalise")
    common(e)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("transform", help="apply a uniform transformer to a CSV file", formatter_class=argparse.RawDescriptionHelpFormatter, epilog=describe_keys())
    data_args(t, False)
    t.add_argument("--out", default="-", help="CSV of transformed covariates (default: stdout)")
    t.add_argument("--partition-json", default=None, help="write the transformer description (partition tree) as JSON")
    common(t)
    t.set_defaults(func=cmd_transform)

    s = sub.add_parser("simulate", help="bias/RMSE simulation study", formatter_class=argparse.RawDescriptionHelpFormatter, epilog=describe_keys())
    s.add_argument("--model", choices=("y1", "y2", "y3", "y4"), required=True)
    s.add_argument("--rho", type=float, default=0.0, help="AR(1) correlation for y1/y2 (default: 0)")
    s.add_argument("--n", type=_positive_int, default=1000, help="sample size for y3/y4 (default: 1000)")
    s.add_argument("--n1", type=_positive_int, default=500, help="treated size for y1/y2 (default: 500)")
    s.add_argument("--n0", type=_positive_int, default=1000, help="control size for y1/y2 (default: 1000)")
    s.add_argument("--reps", type=_positive_int, default=100, help="replications (default: 100)")
    s.add_argument("--seed", type=int, default=0, help="base seed (default: 0)")
    s.add_argument(
        "--estimators",
        default="kernel+joint,kernel+marginal,projection+joint,projection+marginal,ipw",
        help="comma-separated labels such as kernel+joint, projection+marginal+extra, ipw",
    )
    s.add_argument("--out", default="-", help="table path (default: stdout)")
    s.add_argument("--format", choices=("csv", "markdown"), default="csv")
    common(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="timing table and log-log slopes", formatter_class=argparse.RawDescriptionHelpFormatter, epilog=describe_keys())
    b.add_argument("--model", choices=("y3", "y4"), default="y3")
    b.add_argument("--sizes", type=_int_list, default=[1000, 2000, 5000], help="comma-separated sample sizes (default: 1000,2000,5000)")
    b.add_argument("--reps", type=_positive_int, default=10, help="timed runs per size (default: 10)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--estimators", default="kernel+joint,kernel+marginal,projection+joint,projection+marginal,ipw")
    b.add_argument("--backend", choices=("numba", "numpy"), default=None, help="compute backend (default: numba unless WUNT_DISABLE_NUMBA is set)")
    b.add_argument("--rounds", type=_positive_int, default=5, help="timing rounds per cell; the fastest is kept (default: 5)")
    b.add_argument(
        "--stage",
        choices=("pipeline", "estimate"),
        default="pipeline",
        help="time transformer fit plus estimate, or the estimator call alone (default: pipeline)",
    )
    b.add_argument("--transformer-n", type=int, default=10000, help="also time the joint transformer build at this n (0 to skip; default: 10000)")
    b.add_argument("--out", default="-")
    b.add_argument("--format", choices=("csv", "markdown"), default="csv")
    common(b)
    b.set_defaults(func=cmd_bench)

    w = sub.add_parser("demo-warmup", help="one-dimensional MSE-versus-bandwidth demo")
    w.add_argument("--n", type=_positive_int, default=4000, help="total sample size (default: 4000)")
    w.add_argument("--response", choices=("step", "smooth"), default="step")
    w.add_argument("--bins", type=_positive_int, default=32, help="number of steps of the rough design (default: 32)")
    w.add_argument("--beta", type=float, default=0.5, help="smoothness of the treated density for the n^(-1/(1+2 beta)) reference (default: 0.5)")
    w.add_argument("--reps", type=_positive_int, default=50)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--grid-size", type=_positive_int, default=10, help="points in the default log grid (default: 10)")
    w.add_argument("--bandwidths", type=_float_list, default=None, help="explicit comma-separated bandwidth grid")
    w.add_argument("--out", default="-")
    w.add_argument("--format", choices=("csv", "markdown"), default="csv")
    w.add_argument("--threads", type=_positive_int, default=None, help="accepted for uniformity; the demo is serial")
    errfmt(w)
    w.set_defaults(func=cmd_demo_warmup)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, WuntError):
        return exc.exit_code
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError, OSError)):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return 1


def _report_error(exc: BaseException, fmt: str, code: int) -> None:
    if fmt == "json":
        obj = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        sys.stderr.write(json.dumps(obj) + "\n")
    else:
        sys.stderr.write(f"wunt: error: {exc}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is None:
            args.threads = default_threads()
        return args.func(args)
    except (WuntError, OSError, ValueError) as exc:
        code = _exit_code(exc)
        _report_error(exc, args.error_format, code)
        return code


def entry() -> None:  # pragma: no cover
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
