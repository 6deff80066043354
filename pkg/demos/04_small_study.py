"""
A small Monte-Carlo comparison
==============================

Mean and median MSE of the three estimators over repeated samples from
three test functions and three error laws. Forty replications keep the run
short; the command ``robpspline simulate`` runs the full grid.
"""

# %%
import numpy as np

from robpspline.sim import Scenario, run_study

scenarios = [Scenario(f, d) for f in ("f1", "f2", "f3") for d in ("gaussian", "mixture", "t3")]
report = run_study(scenarios, reps=40, seed=2024)
print(report.to_text())

# %%
# The raw per-replication MSEs are kept, which makes it easy to look past
# the means. Under the mixture, least squares occasionally chases a cluster
# of wide errors; the robust fits rarely do.
for est in ("ls", "huber", "tukey"):
    m = report.mses[("f1", "mixture", est)]
    print(f"f1/mixture {est:<6} 90% quantile {np.quantile(m, 0.9):.4f}   worst {m.max():.4f}")

# %%
# Results are a deterministic function of the seed.
again = run_study(scenarios[:1], reps=3, seed=2024)
print("\nrerun of the first scenario identical:",
      again.to_csv() == run_study(scenarios[:1], reps=3, seed=2024).to_csv())
