"""Fractional parts of ``nX`` and the grid-rounding approximation ``[nX]/n``.

For a real ``X`` with a density, ``{nX}`` becomes uniform on [0, 1) and
independent of any other variable ``Y`` built on the same probability space.
The experiments below turn that statement, and its consequences for
``X_n = [nX]/n``, into KS and ECF verdicts.

Samplers take ``(rng, size)``. Coupled samplers (``Y`` given ``X``, ``Z``
given ``X``) take ``(x, rng)`` and must return one row per entry of ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from afpwiener.core import RngStream
from afpwiener.stattest import (
    EcfReport,
    KsReport,
    batch_mean,
    effective_sample_size,
    default_probes,
    ecf,
    ecf_compare,
    ks_uniform,
    MIN_ESS,
)

Sampler = Callable[[np.random.Generator, int], np.ndarray]
Coupled = Callable[[np.ndarray, np.random.Generator], np.ndarray]

MIN_SAMPLES = 1000


@dataclass(frozen=True)
class ScalarDistribution:
    """Law of a real random variable, optionally reweighted.

    ``tilt`` is a nonnegative weight ``w(x)`` with ``E[w(X)] = 1``: the
    density of a changed measure with respect to the sampling law.
    """

    sampler: Sampler
    density_flag: bool = True
    tilt: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def sample(self, stream: RngStream, size: int) -> np.ndarray:
        return np.asarray(self.sampler(stream.generator(), size), dtype=float)

    def weights(self, x: np.ndarray) -> np.ndarray | None:
        return None if self.tilt is None else np.asarray(self.tilt(x), dtype=float)

    def with_tilt(self, tilt) -> "ScalarDistribution":
        return ScalarDistribution(self.sampler, self.density_flag, tilt, self.name + "+tilt")


def normal() -> ScalarDistribution:
    return ScalarDistribution(lambda rng, n: rng.standard_normal(n), True, None, "normal")


def uniform() -> ScalarDistribution:
    return ScalarDistribution(lambda rng, n: rng.random(n), True, None, "uniform")


def exponential(rate: float = 1.0) -> ScalarDistribution:
    return ScalarDistribution(
        lambda rng, n: rng.exponential(1.0 / rate, n), True, None, f"exponential({rate:g})"
    )


def point_mass(c: float) -> ScalarDistribution:
    """Degenerate law with no density; the uniform limit fails for it."""
    return ScalarDistribution(lambda rng, n: np.full(n, float(c)), False, None, f"point({c:g})")


def normal_quadratic_tilt(cap: float = 16.0) -> Callable[[np.ndarray], np.ndarray]:
    """Weight proportional to ``1 + min(x^2, cap)``, normalized under N(0, 1)."""
    c = math.sqrt(cap)
    # E[X^2; |X| <= c] and cap * P(|X| > c) in closed form
    inner = math.erf(c / math.sqrt(2)) - 2 * c * math.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
    tail = cap * math.erfc(c / math.sqrt(2))
    norm = 1.0 + inner + tail

    def tilt(x):
        x = np.asarray(x, dtype=float)
        return (1.0 + np.minimum(x * x, cap)) / norm

    return tilt


@dataclass(frozen=True)
class SmoothTestFunction:
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float
    name: str = ""

    def derivative_error(self, probes, h: float = 1e-4) -> float:
        """Max deviation of the central difference from ``dphi`` on ``probes``."""
        x = np.asarray(probes, dtype=float)
        fd = (self.phi(x + h) - self.phi(x - h)) / (2 * h)
        return float(np.max(np.abs(fd - self.dphi(x))))


def identity_function() -> SmoothTestFunction:
    return SmoothTestFunction(lambda x: np.asarray(x, dtype=float), np.ones_like, 1.0, "id")


def sine_function() -> SmoothTestFunction:
    return SmoothTestFunction(np.sin, np.cos, 1.0, "sin")


def constant_function(c: float = 1.0) -> SmoothTestFunction:
    return SmoothTestFunction(
        lambda x: np.full(np.shape(x), float(c)), lambda x: np.zeros(np.shape(x)), 0.0, "const"
    )


def grid_decompose(x, n: int):
    """Split ``x`` into ``([nx]/n, {nx})`` with the floor convention.

    ``x == rounded + frac / n`` and ``0 <= frac < 1``, also for negative ``x``.
    Accepts scalars or arrays.
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n}")
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("grid_decompose needs finite input")
    y = a * n
    k = np.floor(y)
    frac = y - k
    # y slightly below an integer can round frac up to exactly 1.0
    over = frac >= 1.0
    if np.any(over):
        k = np.where(over, k + 1.0, k)
        frac = np.where(over, 0.0, frac)
    rounded = k / n
    if np.ndim(x) == 0:
        return float(rounded), float(frac)
    return rounded, frac


def uniform_cf(u) -> np.ndarray:
    """Characteristic function ``(e^{iu} - 1) / (iu)`` of Uniform[0, 1]."""
    u = np.asarray(u, dtype=float)
    out = np.ones(u.shape, dtype=complex)
    nz = u != 0
    out[nz] = (np.exp(1j * u[nz]) - 1.0) / (1j * u[nz])
    return out


def _check_samples(samples: int) -> None:
    if samples < MIN_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_SAMPLES}, got {samples}")


def uniformity_experiment(dist: ScalarDistribution, n_list: Sequence[int], samples: int,
                          stream: RngStream) -> list[KsReport]:
    """KS test of ``{nX}`` against Uniform[0, 1] for each ``n`` (same X sample)."""
    _check_samples(samples)
    x = dist.sample(stream.named("x"), samples)
    return [ks_uniform(grid_decompose(x, n)[1]) for n in n_list]


def _as_columns(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def joint_independence_experiment(dist: ScalarDistribution, y_sampler: Coupled,
                                  n_list: Sequence[int], samples: int, stream: RngStream,
                                  probes=None) -> list[EcfReport]:
    """Joint ECF of ``({nX}, Y)`` against ``cf_U(u) * ecf_Y(v)``.

    The ``Y`` factor of the reference is estimated from an independent draw of
    ``(X', Y')``; the uniform factor is exact.
    """
    _check_samples(samples)
    x = dist.sample(stream.named("x"), samples)
    y = _as_columns(y_sampler(x, stream.named("y").generator()))
    x_ref = dist.sample(stream.named("x-ref"), samples)
    y_ref = _as_columns(y_sampler(x_ref, stream.named("y-ref").generator()))
    q = y.shape[1]
    if probes is None:
        probes = default_probes(([0], list(range(1, q + 1))), q + 1)
    probes = np.asarray(probes, dtype=float)
    if probes.size == 0:
        raise ValueError("empty probe set")

    ry = ecf(y_ref, probes[:, 1:])
    cu = uniform_cf(probes[:, 0])
    ref_vals = cu * ry.values
    ref_se = (np.abs(cu) * ry.se_re, np.abs(cu) * ry.se_im)

    reports = []
    for n in n_list:
        frac = grid_decompose(x, n)[1]
        emp = ecf(np.column_stack([frac, y]), probes, label=f"joint_independence n={n}")
        rep = ecf_compare(emp, ref_vals, ref_se)
        rep.meta["n"] = n
        reports.append(rep)
    return reports


@dataclass(frozen=True)
class BiasRow:
    n: int
    estimate: float
    stderr: float
    target: float

    @property
    def z(self) -> float:
        diff = self.estimate - self.target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.stderr


def bias_experiment(phi: SmoothTestFunction, dist: ScalarDistribution, n_list: Sequence[int],
                    samples: int, stream: RngStream, z_sampler: Coupled | None = None) -> list[BiasRow]:
    """Estimate ``n^2 E[(phi(X_n) - phi(X))^2 Z]`` and its limit ``E[phi'(X)^2 Z] / 3``.

    Both are averaged over the same draws; ``stderr`` is the batch-means SE of
    the per-draw difference, so ``z = (estimate - target) / stderr``.
    """
    _check_samples(samples)
    x = dist.sample(stream.named("x"), samples)
    zz = np.ones_like(x) if z_sampler is None else np.asarray(
        z_sampler(x, stream.named("z").generator()), dtype=float)
    tgt = phi.dphi(x) ** 2 * zz / 3.0
    rows = []
    for n in n_list:
        xn = grid_decompose(x, n)[0]
        est = float(n) ** 2 * (phi.phi(xn) - phi.phi(x)) ** 2 * zz
        _, se = batch_mean(est - tgt)
        rows.append(BiasRow(int(n), float(est.mean()), se, float(tgt.mean())))
    return rows


def first_order_limit_experiment(phi: SmoothTestFunction, dist: ScalarDistribution,
                                 y_sampler: Coupled, n: int, samples: int, stream: RngStream,
                                 probes=None) -> EcfReport:
    """ECF of ``(n(phi(X_n) - phi(X)), Y)`` against a simulation of ``(-U phi'(X), Y)``."""
    _check_samples(samples)
    x = dist.sample(stream.named("x"), samples)
    y = _as_columns(y_sampler(x, stream.named("y").generator()))
    xn = grid_decompose(x, n)[0]
    left = n * (phi.phi(xn) - phi.phi(x))

    x_ref = dist.sample(stream.named("x-ref"), samples)
    y_ref = _as_columns(y_sampler(x_ref, stream.named("y-ref").generator()))
    u = stream.named("u").generator().random(samples)
    right = -u * phi.dphi(x_ref)

    q = y.shape[1]
    if probes is None:
        probes = default_probes(([0], list(range(1, q + 1))), q + 1)
    emp = ecf(np.column_stack([left, y]), probes, label=f"first_order n={n}")
    rep = ecf_compare(emp, ecf(np.column_stack([right, y_ref]), probes))
    rep.meta["n"] = n
    return rep


@dataclass(frozen=True)
class PsiReport:
    n: int
    estimate: float
    se: float
    target: float
    target_se: float
    ess: float
    ecf: EcfReport = field(repr=False)

    @property
    def z(self) -> float:
        s = math.hypot(self.se, self.target_se)
        d = self.estimate - self.target
        return 0.0 if s == 0 and d == 0 else d / s


def psi_experiment(psi: Callable[[np.ndarray], np.ndarray], dist: ScalarDistribution, n: int,
                   samples: int, stream: RngStream, tilt=None,
                   probes: Sequence[float] = (-2.0, -1.0, 1.0, 2.0)) -> PsiReport:
    """Law of ``psi(n(X_n - X)) = psi(-{nX})`` against that of ``psi(-U)``.

    ``psi`` is defined on [-1, 0]. With a tilt (argument, else ``dist.tilt``)
    the left side is importance weighted, i.e. computed under the changed
    measure; the limit does not change.
    """
    _check_samples(samples)
    tilt = dist.tilt if tilt is None else tilt
    x = dist.sample(stream.named("x"), samples)
    v = np.asarray(psi(-grid_decompose(x, n)[1]), dtype=float)
    w = None if tilt is None else np.asarray(tilt(x), dtype=float)
    if w is not None:
        ess = effective_sample_size(w)
        if not ess >= MIN_ESS:
            raise ValueError(f"effective sample size {ess:.1f} below {MIN_ESS:.0f}; "
                             "tilt too concentrated for this sample size")
    else:
        ess = float(samples)
    est, se = batch_mean(v, w)

    u = stream.named("u").generator().random(samples)
    ref = np.asarray(psi(-u), dtype=float)
    tgt, tse = batch_mean(ref)
    pr = np.asarray(probes, dtype=float)[:, None]
    rep = ecf_compare(ecf(v, pr, w, label=f"psi n={n}"), ecf(ref, pr))
    rep.meta["n"] = n
    return PsiReport(int(n), float(est), se, float(tgt), tse, ess, rep)
