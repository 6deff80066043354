"""
Difference penalties versus derivative penalties
================================================

Penalising squared q-th differences of neighbouring B-spline coefficients
is cheap and banded. This script compares it with the integrated squared
q-th derivative of the spline, which it stands in for.
"""

# %%
import numpy as np

from robpspline import gram_matrix, make_basis, penalty_matrix, penalty_ratio_bracket, penalty_value
from robpspline.penalty import derivative_penalty

p, q = 4, 2
rng = np.random.default_rng(11)

# %%
# For one random cubic spline with 20 interior knots, the derivative norm is
# an exact quadratic form in the differenced coefficients, scaled by the
# knot spacing raised to the power -2q.
K = 20
basis = make_basis(p, K)
beta = rng.standard_normal(basis.dim)
G = gram_matrix(make_basis(p - q, K))
d = np.diff(beta, q)
print(f"integrated |f''|^2          {derivative_penalty(basis, beta, q):.10g}")
print(f"(K+1)^4 * d' G d            {(K + 1) ** (2 * q) * d @ G @ d:.10g}")
print(f"plain sum of squared diffs  {penalty_value(penalty_matrix(q, basis.dim), beta):.10g}")

# %%
# The plain sum differs from the derivative norm, but after rescaling by the
# knot spacing the ratio stays inside a fixed band for every K. That band
# is why the two penalties select comparable amounts of smoothing.
print(f"\n{'K':>4}{'min ratio':>12}{'max ratio':>12}")
for K in (10, 20, 40, 80, 160):
    lo, hi = penalty_ratio_bracket(p, q, K, 200, rng=K)
    print(f"{K:>4}{lo:>12.4f}{hi:>12.4f}")

# %%
# Linear sequences have zero second differences, so straight lines are never
# penalised, whatever the smoothing parameter.
line = 2.0 + 0.5 * np.arange(basis.dim)
print("\npenalty of a straight line:", penalty_value(penalty_matrix(q, basis.dim), line))
