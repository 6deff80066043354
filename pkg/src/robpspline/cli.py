"""Command-line interface: ``robpspline {fit,scale,simulate,verify}``.

Exit status is 0 on success, 2 for unreadable input or bad arguments, 3 for
invalid configurations and 4 for numerical failures.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import __version__
from .basis import design_matrix, make_basis
from .errors import (
    DegenerateScaleError,
    InsufficientDataError,
    InvalidParameterError,
    PSplineError,
)
from .loss import huber, make_loss
from .penalty import penalty_ratio_bracket
from .scale import m_scale
from .sim import ERROR_DISTS, ESTIMATORS, FUNCTIONS, Scenario, run_study, test_function
from .solver import FitConfig, irls_fit, select_lambda

logger = logging.getLogger("robpspline")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4


class InputError(Exception):
    """Malformed input file."""


@dataclass(frozen=True)
class Dataset:
    """Sorted observations with the affine map taking ``x`` onto [0, 1]."""

    x: np.ndarray
    y: np.ndarray
    x_offset: float
    x_scale: float

    @property
    def n(self):
        return self.y.size

    @property
    def unit_x(self):
        return self.to_unit(self.x)

    def to_unit(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.x_offset) / self.x_scale, 0.0, 1.0)

    def from_unit(self, u):
        return self.x_offset + np.asarray(u, dtype=float) * self.x_scale

    @classmethod
    def from_arrays(cls, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        order = np.argsort(x, kind="stable")
        x, y = x[order], y[order]
        span = x[-1] - x[0]
        if not span > 0:
            raise InvalidParameterError("x must take at least two distinct values")
        return cls(x, y, float(x[0]), float(span))


def read_columns(path, names):
    """
    Read numeric columns from a comma-separated file with a header row.

    Raises
    ------
    InputError
        With the offending line number on any parse problem.

    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if names is None:
            if len(header) != 1:
                raise InputError(f"{path}:1: expected a single column, found {len(header)}")
            names = header
        missing = [n for n in names if n not in header]
        if missing:
            raise InputError(f"{path}:1: header lacks column(s) {', '.join(missing)}")
        idx = [header.index(n) for n in names]
        cols = [[] for _ in names]
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
            for col, i in zip(cols, idx):
                try:
                    value = float(row[i])
                except ValueError:
                    raise InputError(f"{path}:{line}: cannot parse {row[i]!r} as a number") from None
                if not np.isfinite(value):
                    raise InputError(f"{path}:{line}: missing or non-finite value {row[i]!r}")
                col.append(value)
    return [np.array(c) for c in cols]


def _write_csv(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header) + ["schema_version"])
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row] + [SCHEMA_VERSION])


def _threads(args):
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("PSPLINE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"PSPLINE_THREADS must be an integer, got {env!r}") from None
    return 1


def _parse_lambda(text):
    if text == "auto":
        return "gcv"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be a number or 'auto', got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("lambda must be nonnegative")
    return value


def _parse_scale(text):
    if text in ("none", "mscale"):
        return text, None
    if text.startswith("fixed:"):
        try:
            sigma = float(text[6:])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad fixed scale {text!r}") from None
        if not sigma > 0:
            raise argparse.ArgumentTypeError("fixed scale must be positive")
        return "fixed", sigma
    raise argparse.ArgumentTypeError("scale must be none, mscale or fixed:<value>")


def _parse_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _loss_from_args(args):
    used = {
        "huber": ("k",), "tukey": ("c",), "hampel": ("a", "b", "c"), "check": ("alpha",),
        "expectile": ("alpha",), "lq": ("exponent",),
    }.get(args.loss, ())
    return make_loss(args.loss, **{name: getattr(args, name) for name in used})


def cmd_fit(args):
    x, y = read_columns(args.input, ["x", "y"])
    if x.size < args.p + args.q:
        raise InsufficientDataError(f"need at least p + q = {args.p + args.q} rows, got {x.size}")
    data = Dataset.from_arrays(x, y)
    loss = _loss_from_args(args)
    scale_mode, fixed_sigma = args.scale
    notes = []

    sigma = None
    if scale_mode == "mscale":
        try:
            sigma = m_scale(data.y).sigma
        except DegenerateScaleError as exc:
            msg = f"degenerate M-scale ({exc}); falling back to scale mode 'none'"
            warnings.warn(msg, RuntimeWarning, stacklevel=1)
            notes.append(msg)
            scale_mode = "none"
    config = FitConfig(loss=loss, p=args.p, K=args.K, q=args.q, lam=args.lam,
                       scale_mode=scale_mode, sigma=fixed_sigma)
    if config.lam == "gcv":
        result = select_lambda(data.unit_x, data.y, config, sigma=sigma)
    else:
        result = irls_fit(data.unit_x, data.y, config, config.lam, sigma=sigma)
    if not result.converged:
        notes.append(f"IRLS did not converge in {config.max_iter} iterations")

    # QQ standardisation always uses the robust difference-based scale
    try:
        qq_scale = m_scale(data.y).sigma
    except DegenerateScaleError:
        qq_scale = 1.0
    std_res = result.residuals / qq_scale
    n = data.n
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "fitted.csv", ["x", "y", "fitted", "residual", "weight"],
               [data.x, data.y, result.fitted, result.residuals, result.weights + 0.0])
    _write_csv(out / "residuals.csv", ["x", "residual", "standardized_residual"],
               [data.x, result.residuals, std_res])
    _write_csv(out / "qq.csv", ["theoretical", "sample"], [theoretical, np.sort(std_res)])

    settings = {
        "loss": loss.to_dict(),
        "p": config.p, "K": config.K, "q": config.q,
        "lambda": "auto" if config.lam == "gcv" else config.lam,
        "scale": args.scale_text,
        "scale_mode_used": scale_mode,
        "seed": args.seed,
        "max_iter": config.max_iter, "tol": config.tol,
        "lambda_grid": [config.lambda_min, config.lambda_max, config.n_grid],
        "refine_tol": config.refine_tol,
        "nonconvex_window": config.nonconvex_window,
    }
    config_hash = hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()
    meta = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "input": str(args.input),
        "input_sha256": hashlib.sha256(Path(args.input).read_bytes()).hexdigest(),
        "config": settings,
        "config_hash": config_hash,
        "n": n,
        "x_offset": data.x_offset,
        "x_scale": data.x_scale,
        "lambda": result.lam,
        "edf": result.edf,
        "sigma": result.sigma,
        "qq_scale": qq_scale,
        "gcv": result.gcv if np.isfinite(result.gcv) else None,
        "iterations": result.iterations,
        "converged": result.converged,
        "estimating_eq_norm": result.estimating_eq_norm,
        "notes": notes,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"{loss.name}: lambda={result.lam:.6g} edf={result.edf:.3f} sigma={result.sigma:.6g} "
          f"iterations={result.iterations} -> {out}")
    return EXIT_OK


def cmd_scale(args):
    if args.column:
        (y,) = read_columns(args.input, [args.column])
    else:
        (y,) = read_columns(args.input, None)
    est = m_scale(y)
    print(repr(est.sigma))
    return EXIT_OK


def _simulate_settings(args):
    settings = {
        "functions": list(FUNCTIONS), "dists": list(ERROR_DISTS),
        "estimators": list(ESTIMATORS), "reps": 1000, "seed": 0, "n": 60,
    }
    if args.config:
        try:
            settings.update(json.loads(Path(args.config).read_text()))
        except OSError as exc:
            raise InputError(f"{args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
    for key in ("functions", "dists", "estimators", "reps", "seed", "n"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    unknown = set(settings) - {"functions", "dists", "estimators", "reps", "seed", "n"}
    if unknown:
        raise InvalidParameterError(f"unknown simulation settings {sorted(unknown)}")
    if not isinstance(settings["reps"], int) or settings["reps"] < 1:
        raise InvalidParameterError("reps must be a positive integer")
    return settings


def cmd_simulate(args):
    settings = _simulate_settings(args)
    scenarios = [Scenario(f, d, settings["n"]) for f in settings["functions"]
                 for d in settings["dists"]]
    report = run_study(scenarios, settings["estimators"], settings["reps"], settings["seed"],
                       parallelism=_threads(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_verify(args):
    if args.q >= args.p:
        raise InvalidParameterError(f"penalty order q={args.q} must be smaller than p={args.p}")
    rng = np.random.default_rng(args.seed)
    ok = True

    worst = 0.0
    for K in args.K:
        B = design_matrix(make_basis(args.p, K), rng.random(args.points))
        worst = max(worst, float(np.max(np.abs(B.sum(axis=1) - 1.0))))
    pou_ok = worst < 1e-12
    ok &= pou_ok
    print(f"partition of unity: max |sum B - 1| = {worst:.3e} [{'ok' if pou_ok else 'FAIL'}]")

    brackets = {K: penalty_ratio_bracket(args.p, args.q, K, args.trials, rng) for K in args.K}
    for K, (lo, hi) in brackets.items():
        print(f"difference/derivative penalty ratio, K={K}: [{lo:.6g}, {hi:.6g}]")
    common_lo = max(lo for lo, _ in brackets.values())
    common_hi = min(hi for _, hi in brackets.values())
    overlap = common_lo <= common_hi and min(lo for lo, _ in brackets.values()) > 0
    ok &= overlap
    print(f"common interval: [{min(lo for lo, _ in brackets.values()):.6g}, "
          f"{max(hi for _, hi in brackets.values()):.6g}], brackets overlap: "
          f"{'yes' if overlap else 'no'}")

    x = np.arange(1, 61) / 60.0
    y = test_function("f1", x) + 0.5 * rng.standard_normal(60)
    for loss in (make_loss("ls"), huber(), make_loss("tukey")):
        mode = "none" if loss.kind == "ls" else "mscale"
        res = irls_fit(x, y, FitConfig(loss=loss, scale_mode=mode), 1e-3)
        good = res.converged and res.estimating_eq_norm < 1e-6
        ok &= good
        print(f"fixed point {loss.name}: |estimating equations|_inf = "
              f"{res.estimating_eq_norm:.3e} after {res.iterations} iterations "
              f"[{'ok' if good else 'FAIL'}]")
    return EXIT_OK if ok else EXIT_NUMERICAL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="robpspline", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a P-spline to an x,y CSV file")
    p.add_argument("input")
    p.add_argument("--loss", default="tukey",
                   choices=["ls", "huber", "tukey", "hampel", "check", "expectile", "lq",
                            "absolute", "logcosh"])
    p.add_argument("--k", type=float, help="Huber tuning constant (default 1.345)")
    p.add_argument("--c", type=float, help="Tukey or Hampel c (Tukey default 4.685)")
    p.add_argument("--a", type=float, help="Hampel a")
    p.add_argument("--b", type=float, help="Hampel b")
    p.add_argument("--alpha", type=float, help="check/expectile level")
    p.add_argument("--exponent", type=float, help="lq exponent in (1, 2)")
    p.add_argument("--p", type=int, default=4, help="spline order (default 4, cubic)")
    p.add_argument("--K", type=int, default=40, help="interior knots (default 40)")
    p.add_argument("--q", type=int, default=2, help="penalty order (default 2)")
    p.add_argument("--lambda", dest="lam", type=_parse_lambda, default="auto",
                   help="penalty value or 'auto' for GCV (default)")
    p.add_argument("--scale", dest="scale_text", default=None,
                   help="none, mscale or fixed:<value> (default mscale, none for ls)")
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducibility")
    p.add_argument("--out", default="fit-output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scale", help="difference-based M-scale of a response column")
    p.add_argument("input")
    p.add_argument("--column", help="column name when the file has several")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("simulate", help="Monte-Carlo comparison of LS, Huber and Tukey fits")
    p.add_argument("--config", help="JSON file with functions, dists, estimators, reps, seed, n")
    p.add_argument("--functions", type=_parse_list(str))
    p.add_argument("--dists", type=_parse_list(str))
    p.add_argument("--estimators", type=_parse_list(str))
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--threads", type=int, help="worker processes (env PSPLINE_THREADS)")
    p.add_argument("--out", default="sim-output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="numerical checks of basis, penalty and solver")
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--K", type=_parse_list(int), default=[10, 20, 40])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--points", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "fit":
        text = args.scale_text or ("none" if args.loss == "ls" else "mscale")
        try:
            args.scale = _parse_scale(text)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
        args.scale_text = text
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidParameterError, InsufficientDataError) as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PSplineError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error [numerical]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
