"""Euler scheme error rates: block-triangular systems against generic SDEs.

For systems whose diffusion coefficient depends only on a block driven by
ordinary integrals,

    dX1 = f11(X2) dB + f12(X1, X2) dt
    dX2 = f22(X1, X2) dt,

the Euler error scales like 1/n, against the usual 1/sqrt(n). The rate
experiment solves each path on a coarse grid and on a fine reference grid
with the same Brownian increments (coupling) and fits the log-log slope of
the strong error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from afpwiener.core import BrownianPath, RngStream, TimeGrid, brownian_batches
from afpwiener.stattest import RateFit, batch_mean, ecf, ecf_compare, fit_rate

REFERENCE_FACTOR = 64
EULER_BATCH = 1000
ROUNDOFF_ERROR = 1e-12


@dataclass(frozen=True)
class SpecialSdeSystem:
    """Block-triangular system; ``f11`` only sees the drift-driven block ``X2``.

    Callables are vectorized over a leading batch axis: ``f11(x2) -> (S, k1, d)``,
    ``f12(x1, x2) -> (S, k1)``, ``f22(x1, x2) -> (S, k2)``.
    """

    k1: int
    k2: int
    d: int
    f11: Callable
    f12: Callable
    f22: Callable
    x0: tuple
    name: str = "special"

    @property
    def dim(self) -> int:
        return self.k1 + self.k2

    def step(self, x: np.ndarray, db: np.ndarray, h: float) -> np.ndarray:
        x1, x2 = x[:, : self.k1], x[:, self.k1 :]
        sig = self.f11(x2)
        new1 = x1 + np.einsum("sab,sb->sa", sig, db) + self.f12(x1, x2) * h
        new2 = x2 + self.f22(x1, x2) * h
        return np.concatenate([new1, new2], axis=1)


@dataclass(frozen=True)
class GenericSdeSystem:
    """``dX = b(X) dt + sigma(X) dB`` with ``b -> (S, m)``, ``sigma -> (S, m, d)``."""

    m: int
    d: int
    drift: Callable
    diffusion: Callable
    x0: tuple
    name: str = "generic"

    @property
    def dim(self) -> int:
        return self.m

    def step(self, x: np.ndarray, db: np.ndarray, h: float) -> np.ndarray:
        return x + self.drift(x) * h + np.einsum("sab,sb->sa", self.diffusion(x), db)


def _zeros(cols):
    return lambda *a: np.zeros((a[0].shape[0], cols))


def special_example() -> SpecialSdeSystem:
    """``dX1 = sin(X2) dB``, ``dX2 = X1 dt``, ``X0 = (1, 0)``."""
    return SpecialSdeSystem(
        1, 1, 1,
        f11=lambda x2: np.sin(x2)[:, :, None],
        f12=_zeros(1),
        f22=lambda x1, x2: x1.copy(),
        x0=(1.0, 0.0),
        name="special",
    )


def generic_example() -> GenericSdeSystem:
    """``dX = sin(X) dB``, ``X0 = 1``."""
    return GenericSdeSystem(1, 1, _zeros(1), lambda x: np.sin(x)[:, :, None], (1.0,), "generic")


def special_pure_noise() -> SpecialSdeSystem:
    """``dX1 = dB``, ``dX2 = 0``; Euler is exact."""
    return SpecialSdeSystem(
        1, 1, 1,
        f11=lambda x2: np.ones((x2.shape[0], 1, 1)),
        f12=_zeros(1), f22=_zeros(1), x0=(0.0, 0.0), name="special_pure_noise",
    )


def generic_pure_noise() -> GenericSdeSystem:
    """``dX = dB``; Euler is exact."""
    return GenericSdeSystem(1, 1, _zeros(1), lambda x: np.ones((x.shape[0], 1, 1)), (0.0,),
                            "generic_pure_noise")


def linear_drift(a: float = 1.0) -> GenericSdeSystem:
    """Deterministic ``dX = a X dt``, ``X0 = 1``."""
    return GenericSdeSystem(1, 1, lambda x: a * x, lambda x: np.zeros((x.shape[0], 1, 1)), (1.0,),
                            f"linear_drift({a:g})")


SYSTEMS = {
    "special": special_example,
    "generic": generic_example,
    "special_pure_noise": special_pure_noise,
    "generic_pure_noise": generic_pure_noise,
    "linear_drift": linear_drift,
}


def system_by_name(name: str):
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None


def _coarse_increments(path: BrownianPath, n: int) -> np.ndarray:
    N = path.grid.steps
    if n < 1 or N % n:
        raise ValueError(f"path grid N={N} is not a multiple of coarse steps n={n}")
    inc = path.increments
    if inc.ndim == 2:
        inc = inc[None]
    S, d, _ = inc.shape
    return inc.reshape(S, d, n, N // n).sum(axis=-1)


def euler_solve(system, path: BrownianPath, n: int, terminal_only: bool = False) -> np.ndarray:
    """Explicit Euler with step ``1/n`` on Brownian increments aggregated from ``path``.

    Returns the trajectory ``(S, n + 1, m)`` (or ``(n + 1, m)`` for a single
    path), or only the terminal state when ``terminal_only``.

    Raises:
        FloatingPointError: the state became non-finite; the message names the step.
    """
    if path.dim != system.d:
        raise ValueError(f"path dimension {path.dim} != system noise dimension {system.d}")
    single = path.increments.ndim == 2
    db = _coarse_increments(path, n)
    S = db.shape[0]
    h = 1.0 / n
    x = np.tile(np.asarray(system.x0, dtype=float), (S, 1))
    traj = None if terminal_only else np.empty((S, n + 1, system.dim))
    if traj is not None:
        traj[:, 0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            x = system.step(x, db[:, :, j], h)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"Euler state blew up at step {j + 1} of {n}")
            if traj is not None:
                traj[:, j + 1] = x
    out = x if terminal_only else traj
    return out[0] if single else out


def reference_solve(system, path: BrownianPath, N_fine: int | None = None) -> np.ndarray:
    """Terminal state of Euler on the full path grid (proxy for the exact solution)."""
    N = path.grid.steps
    if N_fine is not None and N_fine != N:
        raise ValueError(f"N_fine={N_fine} must equal the path grid N={N}")
    return euler_solve(system, path, N, terminal_only=True)


@dataclass(frozen=True)
class RateRow:
    n: int
    strong_err: float
    stderr: float
    weak_err: float
    weak_se: float


@dataclass(frozen=True)
class RateResult:
    system: str
    rows: list
    fit: RateFit
    scaled_variance: dict = field(repr=False)   # n -> (Var(n err), Var(sqrt(n) err))
    stabilization: list = field(repr=False)     # EcfReports, n err at n vs 2n

    @property
    def ns(self) -> list[int]:
        return [r.n for r in self.rows]


def _check_dyadic(n_list: Sequence[int]) -> list[int]:
    ns = sorted(int(n) for n in n_list)
    if len(ns) < 3:
        raise ValueError(f"need at least 3 coarse step counts, got {len(ns)}")
    for n in ns:
        if n < 16 or n > 512 or n & (n - 1):
            raise ValueError(f"coarse steps must be powers of two in [16, 512], got {n}")
    return ns


def rate_experiment(system, n_list: Sequence[int], samples: int, N_fine: int, stream: RngStream,
                    g: Callable | None = None, batch: int = EULER_BATCH,
                    probes: Sequence[float] = (-2.0, -1.0, 1.0, 2.0)) -> RateResult:
    """Coupled strong and weak Euler errors per ``n`` and the fitted log-log slope.

    ``g`` maps terminal states ``(S, m)`` to reals (default: first coordinate
    squared). Strong error is ``E|X^n_1 - X^ref_1|`` (Euclidean norm).
    """
    ns = _check_dyadic(n_list)
    if N_fine % ns[-1] or N_fine < REFERENCE_FACTOR * ns[-1]:
        raise ValueError(
            f"N_fine={N_fine} must be a multiple of every n and at least "
            f"{REFERENCE_FACTOR} x {ns[-1]}"
        )
    g = (lambda x: x[:, 0] ** 2) if g is None else g
    grid = TimeGrid(N_fine)
    strong = {n: [] for n in ns}
    weak = {n: [] for n in ns}
    first = {n: [] for n in ns}
    for path in brownian_batches(stream, grid, samples, system.d, batch):
        ref = reference_solve(system, path)
        gref = g(ref)
        for n in ns:
            xn = euler_solve(system, path, n, terminal_only=True)
            e = xn - ref
            strong[n].append(np.sqrt(np.sum(e * e, axis=1)))
            weak[n].append(g(xn) - gref)
            first[n].append(e[:, 0])

    rows, scaled = [], {}
    for n in ns:
        s_mean, s_se = batch_mean(np.concatenate(strong[n]))
        w_mean, w_se = batch_mean(np.concatenate(weak[n]))
        e = np.concatenate(first[n])
        first[n] = e
        scaled[n] = (float(np.var(n * e)), float(np.var(math.sqrt(n) * e)))
        rows.append(RateRow(n, float(s_mean), s_se, abs(float(w_mean)), w_se))

    pr = np.asarray(probes, dtype=float)[:, None]
    stab = []
    for a, b in zip(ns[:-1], ns[1:]):
        rep = ecf_compare(ecf(a * first[a], pr, label=f"{system.name} n*err n={a}"),
                          ecf(b * first[b], pr))
        rep.meta.update(n=a, n_next=b, scaling="n")
        stab.append(rep)

    errs = [r.strong_err for r in rows]
    if max(errs) <= ROUNDOFF_ERROR:
        # exact schemes leave only summation-order rounding
        raise ValueError(f"degenerate errors: strong errors at roundoff level ({max(errs):.2g}), "
                         "no rate to fit")
    fit = fit_rate([r.n for r in rows], errs)
    return RateResult(system.name, rows, fit, scaled, stab)
