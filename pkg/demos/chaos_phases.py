"""Small random phases on Wiener chaos.

R_n multiplies each dB_s in an iterated integral by exp(i theta(ns) / n).
It is an isometry, and n (R_n X - X) has second moment 2 E[X], where
E[X] = sum_k (k/2) ||f_k||^2 is the Dirichlet energy. In law, -i n (R_n X - X)
together with B converges to the sharp operator X^# = int D_s X dW_s with W
independent of B.
"""

import math

from afpwiener import RngStream, TimeGrid, chaos

grid = TimeGrid(4096)
theta = chaos.PeriodicScalarTheta("cosine")
X = chaos.first_chaos(math.sqrt(3.0) * grid.left_points, grid)
Y = chaos.constant_kernel_element(2, math.sqrt(2.0), grid)

for name, el in (("I1(sqrt(3) t)", X), ("I2(sqrt(2))", Y)):
    print(f"{name}: ||X||^2 = {el.norm2():.5f}, energy = {chaos.dirichlet_energy(el):.5f}")
    for n in (8, 32, 128):
        iso = chaos.apply_Rn(el, theta, n).norm2()
        m2 = chaos.second_moment_exact(el, theta, n)
        print(f"  n = {n:4d}   ||R_n X||^2 = {iso:.12f}   n^2 E|R_n X - X|^2 = {m2:.5f}")

rows = chaos.bias_form_experiment(X, X, theta, [16, 64, 256])
print("\nbias forms for X = Y = I1(sqrt(3) t), target <AX, X> =", f"{rows[0].target.real:.5f}")
for r in rows:
    print(f"  n = {r.n:4d}   theoretical {r.theoretical.real:+.5f}   practical {r.practical.real:+.5f}")

print("\nMonte Carlo at n = 32 on a coarser grid (20 000 paths)")
g = TimeGrid(1024)
Xs = chaos.first_chaos(math.sqrt(3.0) * g.left_points, g)
res = chaos.fluctuation_experiment(Xs, theta, [32], 20_000, RngStream(11))[0]
print(f"  max|z| vs (X^#, B) = {res.max_abs_z:.2f}   MC second moment "
      f"{res.mc_second_moment:.4f} +- {res.mc_se:.4f}, exact {res.exact_second_moment:.4f}")
