"""Difference penalties on B-spline coefficients."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import comb

from .basis import gram_matrix, make_basis, spline_derivative_coeffs
from .errors import DimensionMismatchError, InvalidParameterError

__all__ = [
    "DifferencePenalty",
    "penalty_matrix",
    "penalty_value",
    "derivative_penalty",
    "penalty_ratio_bracket",
]


@dataclass(frozen=True)
class DifferencePenalty:
    """
    The ``(dim - q) x dim`` matrix ``P`` with ``(P @ beta)[r] = Δ^q beta[r + q]``.

    ``PtP_banded`` holds ``P.T @ P`` in the upper banded layout expected by
    ``scipy.linalg.cholesky_banded`` (``q + 1`` rows).
    """

    q: int
    dim: int
    P: np.ndarray = field(repr=False)

    @cached_property
    def PtP(self):
        return self.P.T @ self.P

    @cached_property
    def PtP_banded(self):
        return to_upper_banded(self.PtP, self.q)


def to_upper_banded(matrix, bandwidth):
    """Upper banded storage: ``ab[u + i - j, j] = matrix[i, j]`` for ``i <= j``."""
    dim = matrix.shape[0]
    ab = np.zeros((bandwidth + 1, dim))
    for k in range(bandwidth + 1):
        ab[bandwidth - k, k:] = np.diagonal(matrix, offset=k)
    return ab


def penalty_matrix(q, dim):
    """
    Matrix representative of the ``q``-th backward difference operator.

    Row ``r`` carries the signed binomial stencil ``(-1)**(q-j) * C(q, j)``
    for ``j = 0..q`` starting at column ``r``.
    """
    if int(q) != q or q < 1:
        raise InvalidParameterError(f"penalty order q must be an integer >= 1, got {q}")
    if int(dim) != dim or q >= dim:
        raise InvalidParameterError(f"penalty order q={q} must be smaller than dim={dim}")
    q, dim = int(q), int(dim)
    stencil = np.array([(-1) ** (q - j) * comb(q, j, exact=True) for j in range(q + 1)], float)
    P = np.zeros((dim - q, dim))
    for r in range(dim - q):
        P[r, r:r + q + 1] = stencil
    P.setflags(write=False)
    return DifferencePenalty(q, dim, P)


def penalty_value(penalty, beta):
    """``||P beta||^2``, the sum of squared ``q``-th differences."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (penalty.dim,):
        raise DimensionMismatchError(f"expected {penalty.dim} coefficients, got {beta.shape}")
    d = penalty.P @ beta
    return float(d @ d)


def derivative_penalty(basis, beta, q):
    """
    ``∫_0^1 |f^{(q)}|^2`` for ``f = sum beta_j B_{j,p}``.

    Evaluated as the quadratic form of the scaled ``q``-th differences in the
    Gram matrix of the order ``p - q`` basis.
    """
    lower = make_basis(basis.p - q, basis.K)
    d = spline_derivative_coeffs(basis, beta, q)
    return float(d @ gram_matrix(lower) @ d)


def penalty_ratio_bracket(p, q, K, trials, rng=None):
    """
    Empirical bracket of ``(K+1)**(1-2q) ∫|f^{(q)}|^2 / sum (Δ^q beta)^2``.

    Coefficient vectors are standard normal draws; a draw whose projection on
    the null space of ``Δ^q`` carries more than 99% of its norm is rejected.

    Parameters
    ----------
    p, q, K : int
        Spline order, penalty order (``q < p``) and interior knot count.
    trials : int
        Number of accepted random coefficient vectors.
    rng : numpy.random.Generator or int, optional

    Returns
    -------
    tuple of float
        ``(min ratio, max ratio)``.

    """
    if q >= p:
        raise InvalidParameterError(f"penalty order q={q} must be smaller than order p={p}")
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    basis = make_basis(p, K)
    pen = penalty_matrix(q, basis.dim)
    G = gram_matrix(make_basis(p - q, K))
    # orthonormal basis of the null space: polynomial sequences of degree < q
    idx = np.arange(basis.dim, dtype=float)
    null, _ = np.linalg.qr(np.vander(idx / basis.dim, q, increasing=True))
    scale = (K + 1.0) ** (1 - 2 * q)

    ratios = []
    while len(ratios) < trials:
        beta = rng.standard_normal(basis.dim)
        if np.linalg.norm(null.T @ beta) > 0.99 * np.linalg.norm(beta):
            continue
        d = spline_derivative_coeffs(basis, beta, q)
        ratios.append(scale * (d @ G @ d) / penalty_value(pen, beta))
    return float(min(ratios)), float(max(ratios))

