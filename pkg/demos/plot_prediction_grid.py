"""
Mapping the latent field
========================

Kriging predictions on a regular grid at three time slices, from the 30
nearest observations of each node.  The full-data predictor is used as a
reference on the same grid.
"""

import numpy as np

from stvecchia import CovarianceParams, FitResult, VecchiaConfig, make_grid, predict_exact, predict_vecchia
from stvecchia import random_waypoint_layout, simulate

prm = CovarianceParams(sigma2=1.0, theta1=2000.0, theta2=900.0, tau2=0.1, gamma=0.0, kappa=16.0)
ds = random_waypoint_layout(n=1000, sensors=8, seed=3)
ds = ds.with_values(simulate(ds, prm, seed=3))
fit = FitResult(prm, np.array([0.0]), float("nan"), 0, True, VecchiaConfig(M=30, kappa=prm.kappa))

grid = make_grid((ds.x.min(), ds.x.max(), ds.y.min(), ds.y.max()), nx=40, ny=40, times=[0.0, 3600.0, 7200.0])
near = predict_vecchia(ds, fit, grid, M_pred=30)
full = predict_exact(ds, fit, grid)

###############################################################################
# Agreement with the full-data predictor, slice by slice
for i, t in enumerate((0.0, 3600.0, 7200.0)):
    sl = slice(i * 1600, (i + 1) * 1600)
    gap = np.abs(near.mean[sl] - full.mean[sl])
    print(f"t={t:6.0f}s  max |diff| {gap.max():.3f}  mean sd {np.sqrt(full.variance[sl]).mean():.3f}")

###############################################################################
# A coarse text rendering of the first slice
m = near.mean[:1600].reshape(40, 40)[::4, ::4]
levels = " .:-=+*#%@"
scaled = np.clip((m - m.min()) / np.ptp(m) * (len(levels) - 1), 0, len(levels) - 1).astype(int)
print("\n".join("".join(levels[v] * 2 for v in row) for row in scaled[::-1]))
