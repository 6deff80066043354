"""
Estimating the noise level before fitting
=========================================

The robust fits standardise residuals by a scale estimated once, before any
curve is fitted. It is computed from differences of neighbouring responses,
which remove a smooth trend almost entirely.
"""

# %%
import numpy as np

from robpspline import m_scale
from robpspline.sim import test_function

rng = np.random.default_rng(3)
x = np.arange(1, 2001) / 2000
trend = 4 * test_function("f2", x)
noise = 0.3 * rng.standard_normal(x.size)
y = trend + noise

# %%
# On clean data the estimate lands close to the true 0.3, while the plain
# standard deviation of y mostly measures the trend.
print("true noise sd         0.300")
print(f"sd of y               {y.std():.3f}")
print(f"sd of differences/√2  {np.diff(y).std() / np.sqrt(2):.3f}")
print(f"M-scale               {m_scale(y).sigma:.3f}")

# %%
# Now replace a growing share of responses by wild values. The standard
# deviation of the differences is ruined by the first few; the M-scale
# moves slowly until contamination approaches its breakdown point.
print(f"\n{'contaminated':>12}{'sd of diffs':>14}{'M-scale':>10}")
for frac in (0.0, 0.01, 0.05, 0.10, 0.20):
    bad = y.copy()
    idx = rng.choice(x.size, int(frac * x.size), replace=False)
    bad[idx] += rng.standard_cauchy(idx.size) * 50
    print(f"{frac:>12.0%}{np.diff(bad).std() / np.sqrt(2):>14.3f}{m_scale(bad).sigma:>10.3f}")

# %%
# The estimate is equivariant: shifting the data changes nothing and
# rescaling it rescales the estimate.
print(f"\nsigma(y)          {m_scale(y).sigma:.6f}")
print(f"sigma(y + 100)    {m_scale(y + 100).sigma:.6f}")
print(f"sigma(-5 y) / 5   {m_scale(-5 * y).sigma / 5:.6f}")
