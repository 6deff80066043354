"""M-type P-spline fitting by iteratively reweighted penalized least squares.

The estimator minimises

    (1/n) sum_i rho((y_i - B_i @ beta) / sigma) + lam * ||P beta||^2

over the spline coefficients. Writing ``psi(u) = w(u) * u``, each IRLS step
solves the weighted ridge-type system

    (B.T W B + lam_eff P.T P) beta = B.T W y,   lam_eff = 2 n sigma**2 lam,

so ``lam`` keeps the meaning it has in the objective for every loss and scale.
"""

import logging
import numbers
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .basis import design_matrix, make_basis
from .errors import (
    DimensionMismatchError,
    InvalidParameterError,
    SaturatedFitError,
    SingularSystemError,
)
from .loss import LossSpec, huber, least_squares, rho, weight
from .penalty import penalty_matrix, to_upper_banded
from .scale import m_scale

__all__ = [
    "FitConfig",
    "FitResult",
    "pwls_solve",
    "trace_hat",
    "gcv_score",
    "irls_fit",
    "select_lambda",
    "fit",
    "estimating_equation",
    "objective",
]

logger = logging.getLogger(__name__)

# relative pivot size below which the normal equations are declared singular
_PIVOT_RTOL = 1e-13
# a fit counts as converged only if the estimating equations hold to this
# tolerance, relative to one plus the size of their two terms
EQ_TOL = 1e-6


@dataclass(frozen=True)
class FitConfig:
    """
    Settings of a P-spline fit.

    ``lam`` is either a nonnegative float or ``"gcv"``. ``scale_mode`` is
    ``"none"`` (sigma = 1), ``"mscale"`` (difference-based M-scale) or
    ``"fixed"`` together with ``sigma``.
    """

    loss: LossSpec = field(default_factory=least_squares)
    p: int = 4
    K: int = 40
    q: int = 2
    lam: object = "gcv"
    scale_mode: str = "mscale"
    sigma: float = None
    max_iter: int = 100
    tol: float = 1e-8
    lambda_min: float = 1e-8
    lambda_max: float = 1e4
    n_grid: int = 50
    refine_tol: float = 1e-3
    nonconvex_window: float = 1.0

    def __post_init__(self):
        if not 1 <= self.q < self.p:
            raise InvalidParameterError(f"need 1 <= q < p, got q={self.q}, p={self.p}")
        if self.K < self.q:
            raise InvalidParameterError(f"need K >= q, got K={self.K}, q={self.q}")
        if self.lam != "gcv" and not (
            isinstance(self.lam, numbers.Real) and np.isfinite(self.lam) and self.lam >= 0
        ):
            raise InvalidParameterError("lam must be 'gcv' or a nonnegative float")
        if self.scale_mode not in ("none", "mscale", "fixed"):
            raise InvalidParameterError(f"unknown scale mode {self.scale_mode!r}")
        if self.scale_mode == "fixed" and not (self.sigma and self.sigma > 0):
            raise InvalidParameterError("fixed scale mode needs a positive sigma")
        if self.max_iter < 1 or self.tol <= 0:
            raise InvalidParameterError("max_iter must be >= 1 and tol > 0")
        if not 0 < self.lambda_min < self.lambda_max or self.n_grid < 3:
            raise InvalidParameterError("bad lambda grid")


@dataclass
class FitResult:
    beta: np.ndarray
    lam: float
    sigma: float
    fitted: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray
    edf: float
    gcv: float
    iterations: int
    converged: bool
    estimating_eq_norm: float
    loss: LossSpec
    objective_trace: list = field(default_factory=list, repr=False)
    search: dict = field(default=None, repr=False)


@dataclass(frozen=True)
class _Problem:
    """Quantities shared by every fit on one data set."""

    B: np.ndarray
    y: np.ndarray
    penalty: object
    sigma: float
    bandwidth: int

    @property
    def n(self):
        return self.y.size


def _validate_data(xs, y):
    xs = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if xs.shape != y.shape:
        raise DimensionMismatchError(f"x has {xs.size} entries but y has {y.size}")
    if not np.all(np.isfinite(y)):
        raise InvalidParameterError("responses must be finite")
    return xs, y


def resolve_sigma(y, config):
    if config.scale_mode == "none":
        return 1.0
    if config.scale_mode == "fixed":
        return float(config.sigma)
    return m_scale(y).sigma


def _problem(xs, y, config, sigma=None):
    xs, y = _validate_data(xs, y)
    basis = make_basis(config.p, config.K)
    B = design_matrix(basis, xs)
    if sigma is None:
        sigma = resolve_sigma(y, config)
    pen = penalty_matrix(config.q, basis.dim)
    return _Problem(B, y, pen, float(sigma), max(config.p - 1, config.q))


def _factor(B, w, lam_eff, penalty, bandwidth):
    BtWB = (B * w[:, None]).T @ B
    A = BtWB + lam_eff * penalty.PtP
    ab = to_upper_banded(A, bandwidth)
    try:
        cb = cholesky_banded(ab, lower=False)
    except LinAlgError:
        raise SingularSystemError("penalized normal equations are not positive definite") from None
    scale = np.max(np.diag(A))
    if scale <= 0 or np.min(cb[-1]) ** 2 < _PIVOT_RTOL * scale:
        raise SingularSystemError("penalized normal equations are numerically singular")
    return cb, BtWB


def _refined_solve(cb, B, w, y, lam_eff, penalty, steps=3):
    """
    Solve the normal equations from the factor ``cb``, then refine.

    For large ``lam_eff`` the assembled matrix carries ``B.T W B`` only to
    relative precision ``eps * lam_eff``; residuals evaluated term by term
    do not, so a few refinement steps recover the lost digits.
    """
    beta = cho_solve_banded((cb, False), B.T @ (w * y))
    if lam_eff == 0:
        return beta
    for _ in range(steps):
        r = B.T @ (w * (y - B @ beta)) - lam_eff * (penalty.P.T @ (penalty.P @ beta))
        delta = cho_solve_banded((cb, False), r)
        beta = beta + delta
        if np.max(np.abs(delta)) <= 1e-15 * (1.0 + np.max(np.abs(beta))):
            break
    return beta


def pwls_solve(B, W, y, lam_eff, P, bandwidth=None):
    """
    Penalized weighted least squares.

    Minimises ``sum_i W_i (y_i - B_i @ beta)**2 + lam_eff * ||P beta||**2``
    through a banded Cholesky factorisation of the normal equations followed
    by iterative refinement.

    Parameters
    ----------
    B : numpy.ndarray, shape (n, dim)
        Design matrix.
    W : array-like, shape (n,)
        Nonnegative observation weights.
    y : array-like, shape (n,)
    lam_eff : float
        Nonnegative penalty multiplier.
    P : DifferencePenalty
    bandwidth : int, optional
        Upper bandwidth of the normal matrix. Inferred from ``B`` and ``P``
        when omitted.

    Returns
    -------
    numpy.ndarray, shape (dim,)

    Raises
    ------
    SingularSystemError
        If the system is not (numerically) positive definite.

    """
    B = np.asarray(B, dtype=float)
    W = np.asarray(W, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if B.shape[0] != y.size or W.size != y.size or B.shape[1] != P.dim:
        raise DimensionMismatchError("design matrix, weights, responses and penalty disagree")
    if lam_eff < 0 or np.any(W < 0):
        raise InvalidParameterError("weights and lam_eff must be nonnegative")
    if bandwidth is None:
        bandwidth = max(_design_bandwidth(B), P.q)
    cb, _ = _factor(B, W, lam_eff, P, bandwidth)
    return _refined_solve(cb, B, W, y, lam_eff, P)


def _design_bandwidth(B):
    nz = B != 0
    rows = nz.any(axis=1)
    if not rows.any():
        return 0
    first = np.argmax(nz[rows], axis=1)
    last = B.shape[1] - 1 - np.argmax(nz[rows][:, ::-1], axis=1)
    return int(np.max(last - first))


def trace_hat(B, W, lam_eff, P, bandwidth=None):
    """
    Trace of ``H = B (B.T W B + lam_eff P.T P)^{-1} B.T W``.

    Uses ``tr H = tr(A^{-1} B.T W B)`` with the banded factor of ``A``, so the
    ``n x n`` matrix is never formed.
    """
    B = np.asarray(B, dtype=float)
    W = np.asarray(W, dtype=float).ravel()
    if bandwidth is None:
        bandwidth = max(_design_bandwidth(B), P.q)
    cb, BtWB = _factor(B, W, lam_eff, P, bandwidth)
    return float(np.trace(cho_solve_banded((cb, False), BtWB)))


def gcv_score(B, W, residuals, lam_eff, P, bandwidth=None, edf=None):
    """
    Weighted generalized cross-validation criterion.

    ``mean(W * residuals**2) / (1 - tr(H) / n)**2``.

    Raises
    ------
    SaturatedFitError
        If ``tr(H) / n >= 1 - 1e-8``.

    """
    W = np.asarray(W, dtype=float).ravel()
    r = np.asarray(residuals, dtype=float).ravel()
    n = r.size
    if edf is None:
        edf = trace_hat(B, W, lam_eff, P, bandwidth)
    if edf / n >= 1.0 - 1e-8:
        raise SaturatedFitError(f"effective degrees of freedom {edf:.3f} saturate n={n}")
    return float(np.mean(W * r * r) / (1.0 - edf / n) ** 2)


def objective(loss, B, y, beta, lam, sigma, penalty):
    """Penalized criterion ``mean(rho(r / sigma)) + lam * ||P beta||^2``."""
    r = y - B @ beta
    d = penalty.P @ beta
    return float(np.mean(rho(loss, r / sigma)) + lam * d @ d)


def estimating_equation(loss, B, y, beta, lam, sigma, penalty):
    """
    Gradient-form estimating equations of the standardized objective.

    ``-(1/n) sum psi(r_i / sigma) B_i / sigma + 2 lam P.T P beta`` with the
    score evaluated as ``w(u) * u`` (identical to ``psi`` away from zero).
    """
    r = y - B @ beta
    u = r / sigma
    score = weight(loss, u) * u
    return -(B.T @ score) / (y.size * sigma) + 2.0 * lam * (penalty.PtP @ beta)


def _equations_hold(loss, B, y, beta, lam, sigma, penalty):
    u = (y - B @ beta) / sigma
    data = B.T @ (weight(loss, u) * u) / (y.size * sigma)
    pen = 2.0 * lam * (penalty.PtP @ beta)
    scale = max(np.max(np.abs(data)), np.max(np.abs(pen)))
    return bool(np.max(np.abs(pen - data)) < EQ_TOL * (1.0 + scale))


def _irls(prob, loss, lam, start, max_iter, tol):
    """IRLS at fixed ``lam``; returns a FitResult with ``gcv`` left as nan."""
    B, y, pen, sigma = prob.B, prob.y, prob.penalty, prob.sigma
    n = prob.n
    lam_eff = 2.0 * n * sigma ** 2 * lam

    def solve(w):
        cb, _ = _factor(B, w, lam_eff, pen, prob.bandwidth)
        return _refined_solve(cb, B, w, y, lam_eff, pen)

    def obj(b):
        return objective(loss, B, y, b, lam, sigma, pen)

    if start is None:
        beta = solve(np.full(n, 2.0))
    else:
        beta = np.asarray(start, dtype=float).copy()
    trace = [obj(beta)]
    converged = False
    iterations = 0
    constant_weights = loss.kind == "ls"
    for iterations in range(1, max_iter + 1):
        w = weight(loss, (y - B @ beta) / sigma)
        new = solve(w)
        if loss.convex and not constant_weights:
            # step halving keeps the criterion monotone for asymmetric losses
            f_old = trace[-1]
            step = new - beta
            f_new = obj(new)
            t = 1.0
            while f_new > f_old + 1e-13 * abs(f_old) and t > 2.0 ** -30:
                t *= 0.5
                new = beta + t * step
                f_new = obj(new)
        change = np.max(np.abs(new - beta)) / (1.0 + np.max(np.abs(beta)))
        beta = new
        trace.append(obj(beta))
        if constant_weights:
            # one solve is exact; the flag still certifies the equations, which
            # rounding alone breaks once lam * |beta| approaches 1e9
            converged = _equations_hold(loss, B, y, beta, lam, sigma, pen)
            break
        # nonsmooth losses can stall with tiny steps while the equations are
        # still far from zero, so both tests must pass
        if change < tol and _equations_hold(loss, B, y, beta, lam, sigma, pen):
            converged = True
            break

    fitted = B @ beta
    r = y - fitted
    w = weight(loss, r / sigma)
    eq = estimating_equation(loss, B, y, beta, lam, sigma, pen)
    cb, BtWB = _factor(B, w, lam_eff, pen, prob.bandwidth)
    edf = float(np.trace(cho_solve_banded((cb, False), BtWB)))
    return FitResult(
        beta=beta, lam=float(lam), sigma=sigma, fitted=fitted, residuals=r, weights=w,
        edf=edf, gcv=np.nan, iterations=iterations, converged=converged,
        estimating_eq_norm=float(np.max(np.abs(eq))), loss=loss, objective_trace=trace,
    )


def _with_gcv(result):
    n = result.residuals.size
    if result.edf / n >= 1.0 - 1e-8:
        result.gcv = np.inf
    else:
        w, r = result.weights, result.residuals
        result.gcv = float(np.mean(w * r * r) / (1.0 - result.edf / n) ** 2)
    return result


def irls_fit(xs, y, config, lam, start=None, sigma=None):
    """
    Fit the M-type P-spline at a fixed penalty ``lam``.

    Parameters
    ----------
    xs : array-like, shape (n,)
        Design points in [0, 1].
    y : array-like, shape (n,)
    config : FitConfig
        ``config.lam`` is ignored in favour of ``lam``.
    lam : float
        Penalty parameter of the objective.
    start : array-like, optional
        Starting coefficients. Non-convex losses without a start are seeded
        by a Huber fit (itself started from least squares).
    sigma : float, optional
        Pre-computed scale; overrides ``config.scale_mode``.

    Returns
    -------
    FitResult
        ``converged`` is True only when the coefficients have settled and
        the estimating equations hold to a relative ``1e-6``. Least squares
        stops after one solve either way.

    """
    if not lam >= 0:
        raise InvalidParameterError("lam must be nonnegative")
    prob = _problem(xs, y, config, sigma)
    if start is None and not config.loss.convex:
        start = _irls(prob, huber(), lam, None, config.max_iter, config.tol).beta
    return _with_gcv(_irls(prob, config.loss, lam, start, config.max_iter, config.tol))


def _golden(f, a, b, tol):
    """Golden-section minimisation of ``f`` on [a, b]; returns (x, f(x))."""
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _grid_fits(prob, loss, grid, config, starts=None):
    """Fits and GCV values along ``grid``; failures score ``inf``."""
    fits, scores = [], []
    prev = None
    for i, lam in enumerate(grid):
        start = starts[i] if starts is not None else prev
        try:
            res = _with_gcv(_irls(prob, loss, lam, start, config.max_iter, config.tol))
            prev = res.beta
        except SingularSystemError:
            res = None
        fits.append(res)
        scores.append(res.gcv if res is not None and np.isfinite(res.gcv) else np.inf)
    return fits, np.array(scores)


def _argmin_largest(scores, floor=0.0):
    """
    Index of the minimum, ties resolved toward the end (larger lambda).

    Scores within ``floor`` (or a relative 1e-10) of the minimum count as
    ties, so exact-fit data are not decided by rounding noise.
    """
    low = np.min(scores)
    tied = np.flatnonzero(scores <= low + max(1e-10 * abs(low), floor))
    return int(tied[-1])


def _tie_floor(y):
    """Rounding level of the GCV numerator for responses ``y``."""
    return 1e-12 * float(np.mean((y - np.mean(y)) ** 2))


def _refine(grid, scores, best, crit, tol):
    """Golden-section search on log10(lam) between the grid neighbours of ``best``."""
    if not 0 < best < len(grid) - 1:
        return None
    if not (np.isfinite(scores[best - 1]) and np.isfinite(scores[best + 1])):
        return None
    try:
        loglam, value = _golden(crit, np.log10(grid[best - 1]), np.log10(grid[best + 1]), tol)
    except (SaturatedFitError, FloatingPointError) as exc:
        logger.debug("GCV refinement failed: %s", exc)
        return None
    return loglam if value < scores[best] else None


def select_lambda(xs, y, config, sigma=None, grid=None, huber_fit=None):
    """
    Choose ``lam`` by weighted GCV: log-spaced grid, then golden-section refinement.

    Convex losses are fitted along the whole grid, each fit warm-started from
    the previous grid point. Non-convex losses (Tukey, Hampel) first run the
    Huber search; they are then fitted only at grid points within
    ``config.nonconvex_window`` decades of the Huber choice, each started from
    the Huber fit at the same ``lam``. Far from that window the weighted GCV of
    a redescending fit is driven down by observations it rejects, so an
    unrestricted search drifts to degenerate fits.

    Ties on the grid go to the larger ``lam``. If the minimum sits on the end
    of the searched range, or refinement does not improve on it, the grid fit
    is returned.

    Parameters
    ----------
    xs, y : array-like, shape (n,)
    config : FitConfig
    sigma : float, optional
        Pre-computed scale; overrides ``config.scale_mode``.
    grid : array-like, optional
        Increasing penalty values replacing the default log-spaced grid.
    huber_fit : FitResult, optional
        Result of a previous Huber ``select_lambda`` call on the same data,
        grid and scale; reused by non-convex losses instead of recomputing.

    Returns
    -------
    FitResult
        ``search`` holds the searched grid, its GCV values, the index of the
        grid minimum, whether refinement improved on it and the grid
        coefficients.

    """
    prob = _problem(xs, y, config, sigma)
    loss = config.loss
    if grid is None:
        grid = np.logspace(np.log10(config.lambda_min), np.log10(config.lambda_max), config.n_grid)
    grid = np.asarray(grid, dtype=float)

    if loss.convex:
        fits, scores = _grid_fits(prob, loss, grid, config)
        if not np.any(np.isfinite(scores)):
            raise SaturatedFitError("no lambda on the grid gave a finite GCV value")
        best = _argmin_largest(scores, _tie_floor(prob.y))

        def make(lam):
            return _irls(prob, loss, lam, fits[best].beta, config.max_iter, config.tol)
    else:
        if huber_fit is None:
            huber_fit = select_lambda(xs, y, replace(config, loss=huber()), prob.sigma, grid)
        hgrid = huber_fit.search["grid"]
        hbetas = huber_fit.search["betas"]
        keep = np.abs(np.log10(hgrid) - np.log10(huber_fit.lam)) <= config.nonconvex_window + 1e-12
        keep &= np.array([b is not None for b in hbetas])
        grid = hgrid[keep]
        starts = [b for b, k in zip(hbetas, keep) if k]
        fits, scores = _grid_fits(prob, loss, grid, config, starts)
        if not np.any(np.isfinite(scores)):
            raise SaturatedFitError("no lambda in the search window gave a finite GCV value")
        best = _argmin_largest(scores, _tie_floor(prob.y))
        hstart = starts[best]

        def make(lam):
            h = _irls(prob, huber(), lam, hstart, config.max_iter, config.tol)
            return _irls(prob, loss, lam, h.beta, config.max_iter, config.tol)

    cache = {}

    def crit(loglam):
        try:
            res = _with_gcv(make(10.0 ** loglam))
        except SingularSystemError:
            return np.inf
        cache[loglam] = res
        return res.gcv

    loglam = _refine(grid, scores, best, crit, config.refine_tol)
    chosen = cache[loglam] if loglam is not None else fits[best]
    chosen.search = {
        "grid": grid,
        "gcv": scores,
        "grid_index": best,
        "refined": loglam is not None,
        "betas": [f.beta if f is not None else None for f in fits],
    }
    if not loss.convex:
        chosen.search["huber"] = huber_fit
    return chosen


def fit(xs, y, config):
    """Fit with ``config.lam`` fixed, or selected by GCV when it is ``"gcv"``."""
    if config.lam == "gcv":
        return select_lambda(xs, y, config)
    return irls_fit(xs, y, config, float(config.lam))


def with_loss(config, loss):
    """Copy of ``config`` using ``loss``."""
    return replace(config, loss=loss)
