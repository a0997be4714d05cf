"""Fractional parts of nX forget X.

For X with a density, {nX} becomes uniform on [0, 1) and independent of X as
n grows. A point mass keeps no such memory loss: {nX} stays degenerate.
The rescaled rounding error n^2 (phi(X_n) - phi(X))^2 settles on
E[phi'(X)^2] / 3 for the floor grid X_n = [nX] / n.
"""

import math

import numpy as np

from afpwiener import RngStream, afp

SAMPLES = 100_000
stream = RngStream(2024)

print("KS p-value of {nX} against Uniform[0,1], X ~ N(0,1)")
for n, rep in zip([1, 4, 64, 1024],
                  afp.uniformity_experiment(afp.normal(), [1, 4, 64, 1024], SAMPLES, stream)):
    print(f"  n = {n:5d}   D = {rep.D:.4f}   p = {rep.p_value:.3g}")

# a single p-value is one draw; across seeds the p-values are themselves uniform
ps = [afp.uniformity_experiment(afp.normal(), [1024], SAMPLES, stream.spawn(s))[0].p_value
      for s in range(50)]
print(f"over 50 seeds at n = 1024: {np.mean(np.array(ps) < 0.01):.0%} of p-values below 0.01, "
      f"median p = {np.median(ps):.2f}")

rep = afp.uniformity_experiment(afp.point_mass(0.5), [1024], SAMPLES, stream)[0]
print(f"X = 0.5 (no density), n = 1024: D = {rep.D:.3f}, p = {rep.p_value:.3g}")

print("\nJoint law of ({nX}, X) against (U, X), max |z| over 9 probes")
for n, r in zip([1, 16, 1024], afp.joint_independence_experiment(
        afp.normal(), lambda x, rng: x, [1, 16, 1024], SAMPLES, stream.named("joint"))):
    print(f"  n = {n:5d}   max|z| = {r.max_abs_z:6.2f}")

print("\nn^2 E[(sin X_n - sin X)^2] against E[cos^2 X]/3 = "
      f"{(1 + math.exp(-2)) / 6:.5f}")
for row in afp.bias_experiment(afp.sine_function(), afp.normal(), [4, 32, 256], 10**6,
                               stream.named("bias")):
    print(f"  n = {row.n:4d}   estimate = {row.estimate:.5f} +- {row.stderr:.5f}   z = {row.z:+.2f}")

ind = lambda x: ((x >= -0.5) & (x <= 0.0)).astype(float)
for label, tilt in (("plain", None), ("tilted", afp.normal_quadratic_tilt())):
    r = afp.psi_experiment(ind, afp.normal(), 1024, SAMPLES, stream.named(label), tilt=tilt)
    print(f"P(-{{nX}} in [-1/2, 0]) {label:7s}: {r.estimate:.4f} +- {r.se:.4f} (ESS {r.ess:.0f})")
