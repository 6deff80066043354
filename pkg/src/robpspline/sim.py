"""Monte-Carlo comparison of least-squares, Huber and Tukey P-splines.

Data follow ``y_i = f(x_i) + 0.5 * e_i`` on the fixed design ``x_i = i / n``
with one of three test functions and five error laws. Each replication draws
its own random stream from ``(seed, scenario index, replication index)``, so
reports do not depend on worker count or scheduling.
"""

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .errors import InvalidParameterError, PSplineError
from .loss import huber, least_squares, tukey
from .scale import m_scale
from .solver import FitConfig, select_lambda

__all__ = [
    "FUNCTIONS",
    "ERROR_DISTS",
    "ESTIMATORS",
    "Scenario",
    "SimulationReport",
    "test_function",
    "draw_errors",
    "mse",
    "replicate",
    "run_study",
    "scenario_grid",
]

SCHEMA_VERSION = 1

FUNCTIONS = ("f1", "f2", "f3")
ERROR_DISTS = ("gaussian", "t3", "skew-t3", "mixture", "slash")
ESTIMATORS = ("ls", "huber", "tukey")


def test_function(f_id, x):
    """The regression functions of the study, vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    if f_id == "f1":
        return np.cos(2.0 * np.pi * x)
    if f_id == "f2":
        return 3.0 * np.arctan(10.0 * (x - 0.5))
    if f_id == "f3":
        return norm.pdf((x - 0.3) / 0.1) - norm.pdf((x - 0.8) / 0.04)
    raise InvalidParameterError(f"unknown test function {f_id!r}")


test_function.__test__ = False  # not a pytest test despite the name


def draw_errors(dist, n, rng):
    """
    Draw ``n`` iid errors.

    ``skew-t3`` is the noncentral t law with 3 degrees of freedom and
    noncentrality 0.5; ``mixture`` is ``N(0, 1)`` with probability 0.85 and
    ``N(0, 81)`` otherwise; ``slash`` is ``Z / U`` with ``U`` uniform on (0, 1).
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if dist == "gaussian":
        return rng.standard_normal(n)
    if dist == "t3":
        return rng.standard_t(3, size=n)
    if dist == "skew-t3":
        z = rng.standard_normal(n)
        return (z + 0.5) / np.sqrt(rng.chisquare(3, size=n) / 3.0)
    if dist == "mixture":
        z = rng.standard_normal(n)
        return np.where(rng.random(n) < 0.15, 9.0 * z, z)
    if dist == "slash":
        z = rng.standard_normal(n)
        u = rng.random(n)
        while np.any(u == 0.0):
            u[u == 0.0] = rng.random(int(np.sum(u == 0.0)))
        return z / u
    raise InvalidParameterError(f"unknown error distribution {dist!r}")


@dataclass(frozen=True)
class Scenario:
    f_id: str
    error_dist: str
    n: int = 60
    noise_scale: float = 0.5

    def __post_init__(self):
        if self.f_id not in FUNCTIONS:
            raise InvalidParameterError(f"unknown test function {self.f_id!r}")
        if self.error_dist not in ERROR_DISTS:
            raise InvalidParameterError(f"unknown error distribution {self.error_dist!r}")
        if self.n < 2:
            raise InvalidParameterError("n must be >= 2")

    @property
    def x(self):
        return np.arange(1, self.n + 1) / self.n

    @property
    def truth(self):
        return test_function(self.f_id, self.x)


def mse(fit, scenario):
    """Discretized mean squared error ``mean((fhat(x_i) - f(x_i))**2)``."""
    fitted = getattr(fit, "fitted", fit)
    fitted = np.asarray(fitted, dtype=float)
    return float(np.mean((fitted - scenario.truth) ** 2))


def _rng(seed, scenario_index, rep):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(scenario_index, rep)))


def replicate(scenario, rng, estimators=ESTIMATORS, base=None):
    """
    One replication: draw data and fit every requested estimator.

    Least squares uses no scale. Robust fits share one M-scale; Huber is
    started from least squares and Tukey from Huber.

    Returns
    -------
    dict
        estimator -> MSE (float) or failure reason (str).
    """
    base = base or FitConfig()
    x = scenario.x
    y = scenario.truth + scenario.noise_scale * draw_errors(scenario.error_dist, scenario.n, rng)
    out = {}
    if "ls" in estimators:
        try:
            cfg = replace(base, loss=least_squares(), scale_mode="none")
            out["ls"] = mse(select_lambda(x, y, cfg), scenario)
        except (PSplineError, ArithmeticError) as exc:
            out["ls"] = f"{type(exc).__name__}: {exc}"
    robust = [e for e in estimators if e != "ls"]
    if not robust:
        return out
    try:
        sigma = m_scale(y).sigma
    except PSplineError as exc:
        for e in robust:
            out[e] = f"{type(exc).__name__}: {exc}"
        return out
    hfit = None
    if "huber" in estimators or "tukey" in estimators:
        try:
            cfg = replace(base, loss=huber(), scale_mode="mscale")
            hfit = select_lambda(x, y, cfg, sigma=sigma)
            if "huber" in estimators:
                out["huber"] = mse(hfit, scenario)
        except (PSplineError, ArithmeticError) as exc:
            for e in robust:
                out[e] = f"{type(exc).__name__}: {exc}"
            return out
    if "tukey" in estimators:
        try:
            cfg = replace(base, loss=tukey(), scale_mode="mscale")
            out["tukey"] = mse(select_lambda(x, y, cfg, sigma=sigma, huber_fit=hfit), scenario)
        except (PSplineError, ArithmeticError) as exc:
            out["tukey"] = f"{type(exc).__name__}: {exc}"
    return out


def _run_one(args):
    scenario, index, rep, seed, estimators, base = args
    return replicate(scenario, _rng(seed, index, rep), estimators, base)


@dataclass
class SimulationReport:
    """Per scenario and estimator MSE summaries plus the raw MSE arrays."""

    rows: list
    metadata: dict
    mses: dict = field(default_factory=dict, repr=False)

    def row(self, f_id, error_dist, estimator):
        for r in self.rows:
            if (r["f_id"], r["error_dist"], r["estimator"]) == (f_id, error_dist, estimator):
                return r
        raise KeyError((f_id, error_dist, estimator))

    def to_csv(self):
        buf = io.StringIO()
        cols = ["f_id", "error_dist", "estimator", "mean_mse", "median_mse", "mc_se",
                "n_reps", "failures", "schema_version"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({**{c: r[c] for c in cols[:-1]}, "schema_version": SCHEMA_VERSION})
        return buf.getvalue()

    def to_text(self):
        """Table laid out like the usual means/medians comparison table."""
        ests = self.metadata["estimators"]
        head = f"{'f':<4}{'Error distribution':<20}" + "".join(
            f"{e.upper() if e == 'ls' else e.capitalize():^18}" for e in ests)
        sub = " " * 24 + "".join(f"{'Mean':>9}{'Median':>9}" for _ in ests)
        lines = [head, sub, "-" * len(sub)]
        seen = []
        for r in self.rows:
            key = (r["f_id"], r["error_dist"])
            if key in seen:
                continue
            seen.append(key)
            cells = []
            for e in ests:
                rr = self.row(*key, e)
                cells.append(f"{_fmt(rr['mean_mse']):>9}{_fmt(rr['median_mse']):>9}")
            lines.append(f"{key[0]:<4}{key[1]:<20}" + "".join(cells))
        lines.append(f"(n = {self.metadata['n']}, reps = {self.metadata['reps']}, "
                     f"seed = {self.metadata['seed']})")
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps({"schema_version": SCHEMA_VERSION, "metadata": self.metadata,
                           "rows": self.rows}, indent=2, sort_keys=True)


def _fmt(v):
    if not np.isfinite(v):
        return "nan"
    return f"{v:.4g}" if v >= 100 else f"{v:.3f}"


def run_study(scenarios, estimators=ESTIMATORS, reps=1000, seed=0, parallelism=1, base=None):
    """
    Run every scenario for ``reps`` replications and summarise the MSEs.

    Parameters
    ----------
    scenarios : sequence of Scenario
    estimators : sequence of {"ls", "huber", "tukey"}
    reps : int
        Replications per scenario, >= 1.
    seed : int
        Root seed; replication streams are derived from it.
    parallelism : int, optional
        Number of worker processes. Results are identical for any value.
    base : FitConfig, optional
        Template for basis, penalty and GCV grid settings.

    Returns
    -------
    SimulationReport

    """
    if reps < 1:
        raise InvalidParameterError("reps must be >= 1")
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise InvalidParameterError(f"unknown estimators {sorted(unknown)}")
    estimators = tuple(e for e in ESTIMATORS if e in estimators)
    base = base or FitConfig()
    scenarios = list(scenarios)
    tasks = [(sc, i, r, seed, estimators, base) for i, sc in enumerate(scenarios) for r in range(reps)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * parallelism))))
    else:
        results = [_run_one(t) for t in tasks]

    rows, mses = [], {}
    for i, sc in enumerate(scenarios):
        chunk = results[i * reps:(i + 1) * reps]
        for e in estimators:
            vals = [r[e] for r in chunk if not isinstance(r[e], str)]
            fails = [r[e] for r in chunk if isinstance(r[e], str)]
            v = np.array(vals)
            mses[(sc.f_id, sc.error_dist, e)] = v
            rows.append({
                "f_id": sc.f_id,
                "error_dist": sc.error_dist,
                "estimator": e,
                "mean_mse": float(v.mean()) if v.size else float("nan"),
                "median_mse": float(np.median(v)) if v.size else float("nan"),
                "mc_se": float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan"),
                "n_reps": int(v.size),
                "failures": len(fails),
            })
    metadata = {
        "reps": reps,
        "seed": seed,
        "n": sorted({sc.n for sc in scenarios}),
        "scenarios": [asdict(sc) for sc in scenarios],
        "estimators": list(estimators),
        "p": base.p, "K": base.K, "q": base.q,
        "lambda_grid": [base.lambda_min, base.lambda_max, base.n_grid],
        "refine_tol": base.refine_tol,
        "nonconvex_window": base.nonconvex_window,
        "tuning": {"huber_k": huber().k, "tukey_c": tukey().c, "scale_c": 0.704},
    }
    return SimulationReport(rows, metadata, mses)


def scenario_grid(functions=FUNCTIONS, dists=ERROR_DISTS, n=60):
    """Scenarios of the full study grid."""
    return [Scenario(f, d, n) for f in functions for d in dists]
