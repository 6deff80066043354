"""
Fitting a curve through gross outliers
======================================

Least squares, Huber and Tukey P-splines on one noisy sample whose errors
come from a normal mixture with a wide second component.
"""

# %%
# A smooth signal on 60 equidistant points, with roughly one point in ten
# drawn from a component with ten times the spread.
import numpy as np

from robpspline import FitConfig, fit
from robpspline.loss import huber, least_squares, tukey
from robpspline.sim import draw_errors, test_function

rng = np.random.default_rng(7)
x = np.arange(1, 61) / 60
truth = test_function("f1", x)
y = truth + 0.5 * draw_errors("mixture", x.size, rng)

# %%
# Each fit picks its own smoothing parameter by weighted GCV. The scale used
# to standardise residuals is an M-scale of consecutive differences, so it
# ignores the trend and most of the outliers.
fits = {}
for loss in (least_squares(), huber(), tukey()):
    fits[loss.kind] = fit(x, y, FitConfig(loss=loss))

print(f"{'loss':<8}{'lambda':>12}{'edf':>8}{'iters':>7}{'MSE vs truth':>14}")
for name, res in fits.items():
    err = np.mean((res.fitted - truth) ** 2)
    print(f"{name:<8}{res.lam:>12.3g}{res.edf:>8.2f}{res.iterations:>7}{err:>14.4f}")

# %%
# Tukey's weights drop to exactly zero for the points it treats as outliers,
# so it reports which observations it ignored.
w = fits["tukey"].weights
print("\nobservations with zero Tukey weight:", np.flatnonzero(w == 0).tolist())
print("largest absolute errors in the sample:", np.argsort(-np.abs(y - truth))[:6].tolist())

# %%
# A coarse text plot: least squares (L) and Tukey (T) against the truth (.).
rows = np.linspace(-1.5, 1.5, 13)[::-1]
for level in rows:
    line = []
    for i in range(0, 60, 2):
        mark = " "
        if abs(truth[i] - level) < 0.125:
            mark = "."
        if abs(fits["ls"].fitted[i] - level) < 0.125:
            mark = "L"
        if abs(fits["tukey"].fitted[i] - level) < 0.125:
            mark = "T"
        line.append(mark)
    print(f"{level:6.2f} |" + "".join(line))
