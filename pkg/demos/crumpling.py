"""Crumpling a Brownian path with a fast periodic rotation.

Theta_t = int_0^t M(ns) dB_s is again a Brownian motion for every n, yet as n
grows it decouples from B: (T_n B_1, B) approaches (W_1, B) with W an
independent copy. The covariance with B_1 is int_0^1 M(ns) ds, which is zero
for the maps used here.
"""

import numpy as np

from afpwiener import RngStream, TimeGrid, sample_brownian
from afpwiener import isometry
from afpwiener.isometry import PeriodicOrthogonalMap

M = PeriodicOrthogonalMap("rotation2d")
grid = M.default_grid(64)
path = sample_brownian(RngStream(7), grid, M.dim, 5)
bent = isometry.crumple_path(path, M, 64)
gap = np.abs(np.linalg.norm(path.increments, axis=-2) - np.linalg.norm(bent.increments, axis=-2))
print(f"increment norms preserved up to {gap.max():.1e} on a grid of {grid.steps} steps")

for name in ("sign1d", "rotation2d"):
    M = PeriodicOrthogonalMap(name)
    res = isometry.stable_convergence_experiment(isometry.terminal_value(), M, [1, 4, 16, 64],
                                                 50_000, RngStream(7).named(name))
    print(f"\n{name}: joint ECF of (T_n B_1, B_1/2, B_1) against (W_1, B_1/2, B_1)")
    for r in res:
        q = r.covariance.shape[0]
        cov = r.covariance[:, -q:]
        print(f"  n = {r.n:3d}   max|z| = {r.max_abs_z:6.2f}   "
              f"Cov(T_n B_1, B_1) = {np.array2string(cov.ravel(), precision=3)}")

# the same map with n = 1 on a tiny grid: sign1d reflects the second half
M = PeriodicOrthogonalMap("sign1d")
p = sample_brownian(RngStream(1), TimeGrid(2), 1)
print("\nsign1d, n = 1:", p.increments.ravel(), "->",
      isometry.crumple_path(p, M, 1).increments.ravel())
