"""Euler error for block-triangular SDEs.

When the diffusion coefficient only sees components driven by dt integrals,
the explicit Euler scheme gains half an order: its error decays like 1/n
instead of 1/sqrt(n). Both systems below share the same Brownian paths; the
reference is Euler on the fine grid.
"""

from afpwiener import RngStream, euler

ns = [16, 32, 64, 128, 256]
stream = RngStream(99)
for name in ("special", "generic"):
    res = euler.rate_experiment(euler.system_by_name(name), ns, 5000, 2**14, stream)
    print(f"{name}: slope {res.fit.slope:+.3f} +- {res.fit.slope_stderr:.3f} (r^2 {res.fit.r_squared:.4f})")
    for r in res.rows:
        print(f"  n = {r.n:4d}   E|X^n - X| = {r.strong_err:.3e} +- {r.stderr:.1e}   "
              f"weak {r.weak_err:.2e}")
    print("  Var(n err) by n:", ", ".join(f"{v[0]:.3g}" for v in res.scaled_variance.values()))
