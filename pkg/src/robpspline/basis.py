"""Equidistant B-spline bases on [0, 1].

The knot sequence for order ``p`` with ``K`` interior knots has spacing
``h = 1 / (K + 1)`` and is extended uniformly by ``p - 1`` knots beyond each
boundary, giving ``K + 2p`` knots and ``K + p`` basis functions that are all
active on [0, 1]. With this layout the derivative of a spline is exactly a
scaled difference of its coefficients on the lower-order basis built from the
same interior knots, which is what makes the difference penalty a faithful
surrogate for the integrated derivative penalty.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DimensionMismatchError, DomainError, InvalidParameterError

__all__ = [
    "KnotVector",
    "BSplineBasis",
    "make_basis",
    "eval_basis",
    "design_matrix",
    "evaluate_spline",
    "spline_derivative_coeffs",
    "gram_matrix",
]


@dataclass(frozen=True)
class KnotVector:
    """Knots for order ``p`` splines with ``K`` equidistant interior knots."""

    p: int
    K: int
    knots: np.ndarray = field(repr=False)

    @property
    def spacing(self):
        return 1.0 / (self.K + 1)

    @property
    def interior(self):
        return self.knots[self.p:self.p + self.K]


@dataclass(frozen=True)
class BSplineBasis:
    knot_vector: KnotVector

    @property
    def p(self):
        return self.knot_vector.p

    @property
    def K(self):
        return self.knot_vector.K

    @property
    def dim(self):
        return self.K + self.p

    @property
    def knots(self):
        return self.knot_vector.knots


def make_basis(p, K):
    """
    Build the order-``p`` B-spline basis with ``K`` equidistant interior knots.

    Parameters
    ----------
    p : int
        Spline order (degree ``p - 1``). Must be at least 1.
    K : int
        Number of interior knots. Must be at least 1.

    Returns
    -------
    BSplineBasis
        Basis of dimension ``K + p``.

    Raises
    ------
    InvalidParameterError
        If ``p < 1`` or ``K < 1``.

    """
    if int(p) != p or p < 1:
        raise InvalidParameterError(f"spline order p must be an integer >= 1, got {p}")
    if int(K) != K or K < 1:
        raise InvalidParameterError(f"interior knot count K must be an integer >= 1, got {K}")
    p, K = int(p), int(K)
    # t_m = (m - (p - 1)) / (K + 1); t_{p-1} = 0 and t_{K+p} = 1 exactly
    knots = (np.arange(K + 2 * p) - (p - 1)) / (K + 1)
    knots[p - 1] = 0.0
    knots[K + p] = 1.0
    knots.setflags(write=False)
    return BSplineBasis(KnotVector(p, K, knots))


def _check_points(x):
    x = np.asarray(x, dtype=float)
    if x.size and (not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]; extrapolation is not supported")
    return x


def _nonzero_values(basis, x):
    """
    Cox-de Boor triangle for the ``p`` basis functions active at each point.

    Returns the index of the first active function for every point and an
    array of shape (len(x), p) with their values.
    """
    p, K = basis.p, basis.K
    t = basis.knots
    # span s with t[s] <= x < t[s+1]; the last interval is closed on the right
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, p - 1, K + p - 1)

    values = np.zeros((x.size, p))
    values[:, 0] = 1.0
    left = np.empty((x.size, p))
    right = np.empty((x.size, p))
    for j in range(1, p):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(x.size)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return span - (p - 1), values


def eval_basis(basis, x):
    """Values of all ``basis.dim`` B-splines at a single point ``x``."""
    x = _check_points(np.atleast_1d(x))
    if x.size != 1:
        raise DimensionMismatchError("eval_basis takes a single point; use design_matrix")
    return design_matrix(basis, x)[0]


def design_matrix(basis, xs, sparse_format=False):
    """
    Evaluate the basis at every design point.

    Parameters
    ----------
    basis : BSplineBasis
    xs : array-like, shape (n,)
        Points in [0, 1].
    sparse_format : bool, optional
        If True, return a ``scipy.sparse.csr_array``; each row holds at most
        ``p`` stored entries. Default is False (dense ndarray).

    Returns
    -------
    numpy.ndarray or scipy.sparse.csr_array, shape (n, dim)

    """
    x = _check_points(xs).ravel()
    n, p, dim = x.size, basis.p, basis.dim
    if n == 0:
        empty = np.zeros((0, dim))
        return sparse.csr_array(empty) if sparse_format else empty
    first, values = _nonzero_values(basis, x)
    cols = first[:, None] + np.arange(p)
    if sparse_format:
        rows = np.repeat(np.arange(n), p)
        return sparse.csr_array((values.ravel(), (rows, cols.ravel())), shape=(n, dim))
    out = np.zeros((n, dim))
    np.put_along_axis(out, cols, values, axis=1)
    return out


def evaluate_spline(basis, beta, xs):
    """Evaluate ``sum_j beta_j B_j(x)`` at the points ``xs``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (basis.dim,):
        raise DimensionMismatchError(f"expected {basis.dim} coefficients, got {beta.shape}")
    x = _check_points(xs).ravel()
    if x.size == 0:
        return np.zeros(0)
    first, values = _nonzero_values(basis, x)
    return np.sum(values * beta[first[:, None] + np.arange(basis.p)], axis=1)


def spline_derivative_coeffs(basis, beta, q):
    """
    Coefficients of the ``q``-th derivative on the order ``p - q`` basis.

    For the uniformly spaced knots used here the derivative of
    ``sum beta_j B_{j,p}`` is ``(K + 1)**q * sum (Δ^q beta)_j B_{j,p-q}``,
    where the order ``p - q`` basis is ``make_basis(p - q, K)``.

    Returns
    -------
    numpy.ndarray, shape (dim - q,)

    """
    if int(q) != q or q < 1 or q >= basis.p:
        raise InvalidParameterError(f"derivative order must satisfy 1 <= q < p={basis.p}, got {q}")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (basis.dim,):
        raise DimensionMismatchError(f"expected {basis.dim} coefficients, got {beta.shape}")
    return (basis.K + 1) ** q * np.diff(beta, n=int(q))


def gram_matrix(basis):
    """
    Gram matrix ``G_ij = ∫_0^1 B_i(x) B_j(x) dx``.

    Computed with ``p + 1`` Gauss-Legendre nodes per knot interval, which is
    exact for the piecewise polynomial integrand of degree ``2p - 2``.
    """
    nodes, wts = np.polynomial.legendre.leggauss(basis.p + 1)
    h = basis.knot_vector.spacing
    starts = np.arange(basis.K + 1) * h
    x = (starts[:, None] + 0.5 * h * (nodes + 1.0)).ravel()
    w = np.tile(0.5 * h * wts, basis.K + 1)
    B = design_matrix(basis, np.clip(x, 0.0, 1.0))
    return (B * w[:, None]).T @ B
