"""
Choosing the space-time scaling
===============================

The metric distance treats one second of time lag like sqrt(kappa) meters.
A leave-one-out inverse-distance-weighting score picks kappa from a grid.
"""

from stvecchia import CovarianceParams, estimate_kappa, random_waypoint_layout, simulate
from stvecchia.neighbors import idw_loo_rmse

# ranges chosen so the correlation-equivalent scaling is (3000 / 300)^2 = 100
prm = CovarianceParams(sigma2=1.0, theta1=3000.0, theta2=300.0, tau2=0.01, gamma=0.0, kappa=100.0)
ds = random_waypoint_layout(n=800, sensors=8, seed=6)
ds = ds.with_values(simulate(ds, prm, seed=6))

for k in (1.0, 10.0, 100.0, 1000.0):
    rmse = idw_loo_rmse(ds, ds.value, k)
    print(f"kappa={k:7.1f}  LOO RMSE {rmse:.4f}")

print("selected:", estimate_kappa(ds, subsample_size=500, seed=0))
