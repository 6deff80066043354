"""Preliminary M-scale from consecutive response differences.

The scale ``sigma`` solves

    mean_i rho_c((y[i+1] - y[i]) / (sqrt(2) * sigma)) = target

with ``rho_c`` the bisquare bounded by 1. With ``c = 0.704`` and
``target = 0.75`` the estimate is consistent for the error standard deviation
under Gaussian noise when the trend contributes little to the differences.
A smooth trend inflates the estimate slightly; no correction is applied.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateScaleError, InsufficientDataError, InvalidParameterError
from .loss import rho, tukey

__all__ = ["ScaleEstimate", "m_scale", "scale_equation"]

SCALE_C = 0.704
SCALE_TARGET = 0.75


@dataclass(frozen=True)
class ScaleEstimate:
    sigma: float
    n_used: int
    converged: bool


def scale_equation(y, sigma, c=SCALE_C):
    """Left-hand side of the scale equation at ``sigma`` (nonincreasing in ``sigma``)."""
    d = np.diff(np.asarray(y, dtype=float))
    return float(np.mean(rho(tukey(c, normalized=True), d / (np.sqrt(2.0) * sigma))))


def m_scale(y, c=SCALE_C, target=SCALE_TARGET, tol=1e-10):
    """
    Solve the difference-based M-scale equation.

    Parameters
    ----------
    y : array-like, shape (n,)
        Responses ordered by design point; ``n >= 2``.
    c : float, optional
        Bisquare tuning constant. Default is 0.704.
    target : float, optional
        Right-hand side of the equation, in (0, 1). Default is 0.75.
    tol : float, optional
        Required accuracy of the equation residual. Default is 1e-10.

    Returns
    -------
    ScaleEstimate

    Raises
    ------
    InsufficientDataError
        If fewer than two responses are given.
    DegenerateScaleError
        If at least a fraction ``1 - target`` of the differences are exactly
        zero; the left-hand side then stays below ``target`` for every scale.

    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise InsufficientDataError("the M-scale needs at least two responses")
    if not np.all(np.isfinite(y)):
        raise InvalidParameterError("responses must be finite")
    if not 0 < target < 1:
        raise InvalidParameterError("target must lie in (0, 1)")
    d = np.diff(y)
    n_used = d.size
    nonzero = np.abs(d) > 0
    if nonzero.mean() <= target:
        raise DegenerateScaleError(
            f"{n_used - nonzero.sum()} of {n_used} consecutive differences are zero; "
            "the scale equation has no root"
        )

    # MAD-style seed; the equation is solved for sigma / seed so the search
    # path does not depend on the units of y
    seed = np.median(np.abs(d)) / 0.6745 / np.sqrt(2.0)
    if seed <= 0:
        seed = np.mean(np.abs(d[nonzero])) / np.sqrt(2.0)
    u = d / (np.sqrt(2.0) * seed)
    loss = tukey(c, normalized=True)

    def excess(t):
        return np.mean(rho(loss, u / t)) - target

    lo, hi = 1.0, 1.0
    while excess(lo) < 0:
        lo *= 0.5
    while excess(hi) > 0:
        hi *= 2.0
    if lo == hi:
        return ScaleEstimate(float(seed * lo), n_used, True)
    t = brentq(excess, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    # brentq stops on the bracket width; finish on the equation residual
    converged = abs(excess(t)) < tol
    if not converged:
        a, b = lo, hi
        for _ in range(200):
            t = 0.5 * (a + b)
            e = excess(t)
            if abs(e) < tol or b - a <= 4 * np.finfo(float).eps * t:
                break
            a, b = (t, b) if e > 0 else (a, t)
        converged = abs(excess(t)) < tol
    return ScaleEstimate(float(seed * t), n_used, bool(converged))
