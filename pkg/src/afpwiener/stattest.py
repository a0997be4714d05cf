"""Statistical verdicts for weak and stable convergence statements.

Three tools cover every experiment in the package:

* ``ks_uniform``: one-sample Kolmogorov-Smirnov test against Uniform[0, 1]
  with the asymptotic Kolmogorov p-value.
* ``ecf`` / ``ecf_compare`` / ``ecf_product_compare``: (weighted) empirical
  characteristic functions with batch-means standard errors, compared with a
  reference realization of the limit law.
* ``fit_rate``: least-squares slope of ``log error`` against ``log n``.

The z-score of an ECF probe is ``|emp - ref| / sqrt(se_emp**2 + se_ref**2)``
where each ``se**2`` adds the real and imaginary variances. Under the null this
is stochastically smaller than a standard normal modulus, so ``max_abs_z <= 3``
is a conservative PASS threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BATCHES = 32
Z_THRESHOLD = 3.0
MIN_ESS = 100.0


@dataclass(frozen=True)
class KsReport:
    D: float
    sample_size: int
    p_value: float

    def passed(self, level: float = 0.01) -> bool:
        return self.p_value > level


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Survival function of the Kolmogorov distribution, ``P(K > lam)``."""
    if lam < 0.2:
        # the alternating series is ill-conditioned here; true value is 1 - O(1e-11)
        return 1.0
    j = np.arange(1, terms + 1)
    s = 2.0 * np.sum((-1.0) ** (j - 1) * np.exp(-2.0 * j * j * lam * lam))
    return float(min(1.0, max(0.0, s)))


def ks_uniform(samples) -> KsReport:
    """KS distance of the sample from Uniform[0, 1] and its asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise ValueError(f"ks_uniform needs at least 20 samples, got {n}")
    if x[0] < 0.0 or x[-1] >= 1.0 or not np.all(np.isfinite(x)):
        raise ValueError("samples must lie in [0, 1)")
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - x)), float(np.max(x - (i - 1) / n)))
    return KsReport(D=d, sample_size=n, p_value=kolmogorov_sf(math.sqrt(n) * d))


def _batch_slices(n: int, batches: int) -> list[slice]:
    edges = np.linspace(0, n, batches + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def batch_mean(values, weights=None, batches: int = BATCHES) -> tuple[float, float]:
    """(Weighted) mean and its batch-means standard error.

    Works for real or complex ``values``; for complex input the SE combines
    real and imaginary parts in quadrature.
    """
    v = np.asarray(values)
    w = None if weights is None else np.asarray(weights, dtype=float)
    sl = _batch_slices(v.shape[0], batches)
    if w is None:
        est = v.mean()
        bm = np.array([v[s].mean() for s in sl])
    else:
        est = np.sum(w * v) / np.sum(w)
        bm = np.array([np.sum(w[s] * v[s]) / np.sum(w[s]) for s in sl])
    if len(sl) < 2:
        return est, float("nan")
    se = np.sqrt(np.var(bm.real, ddof=1) + np.var(bm.imag, ddof=1)) / math.sqrt(len(sl))
    return est, float(se)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    s2 = np.sum(w * w)
    return 0.0 if s2 == 0 else float(np.sum(w) ** 2 / s2)


@dataclass(frozen=True, eq=False)
class EcfReport:
    """Empirical characteristic function values at a set of probes.

    ``reference`` is filled by ``ecf_compare``; until then ``z`` is undefined.
    """

    probes: np.ndarray
    values: np.ndarray
    se_re: np.ndarray
    se_im: np.ndarray
    sample_size: int
    ess: float
    reference: np.ndarray | None = None
    ref_se_re: np.ndarray | None = None
    ref_se_im: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        """Combined standard error of the difference (or of the values alone)."""
        s2 = self.se_re**2 + self.se_im**2
        if self.reference is not None:
            s2 = s2 + self.ref_se_re**2 + self.ref_se_im**2
        return np.sqrt(s2)

    @property
    def z(self) -> np.ndarray:
        if self.reference is None:
            raise ValueError("no reference attached; use ecf_compare")
        diff = np.abs(self.values - self.reference)
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
        return z

    @property
    def max_abs_z(self) -> float:
        return float(np.max(self.z))

    def passed(self, threshold: float = Z_THRESHOLD) -> bool:
        return self.max_abs_z <= threshold


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1-d or 2-d")
    return a


def ecf(samples, probes, weights=None, batches: int = BATCHES, label: str = "") -> EcfReport:
    """Empirical characteristic function ``sum w e^{i<u, x>} / sum w`` at each probe ``u``."""
    x = _as_matrix(samples, "samples")
    u = _as_matrix(probes, "probes")
    if u.shape[0] == 0:
        raise ValueError("empty probe set")
    if u.shape[1] != x.shape[1]:
        raise ValueError(f"probe dimension {u.shape[1]} != sample dimension {x.shape[1]}")
    n = x.shape[0]
    if weights is None:
        w = None
        ess = float(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite, nonnegative, one per sample")
        ess = effective_sample_size(w)
        if not ess >= MIN_ESS:
            raise ValueError(f"effective sample size {ess:.1f} below {MIN_ESS:.0f}")

    sl = _batch_slices(n, batches)
    num = np.zeros((len(sl), u.shape[0]), dtype=complex)
    den = np.zeros(len(sl))
    for b, s in enumerate(sl):
        ph = np.exp(1j * (x[s] @ u.T))
        if w is None:
            num[b] = ph.sum(axis=0)
            den[b] = ph.shape[0]
        else:
            num[b] = w[s] @ ph
            den[b] = w[s].sum()
    values = num.sum(axis=0) / den.sum()
    bm = num / den[:, None]
    k = len(sl)
    se_re = np.std(bm.real, axis=0, ddof=1) / math.sqrt(k)
    se_im = np.std(bm.imag, axis=0, ddof=1) / math.sqrt(k)
    zero = np.all(u == 0, axis=1)
    values[zero] = 1.0
    se_re[zero] = 0.0
    se_im[zero] = 0.0
    return EcfReport(u, values, se_re, se_im, n, ess, label=label)


def ecf_compare(emp: EcfReport, ref: EcfReport | np.ndarray, ref_se=None) -> EcfReport:
    """Attach a reference to ``emp``.

    ``ref`` is either another ``EcfReport`` on the same probes or an array of
    exact reference values (then ``ref_se`` may give their real/imag SEs).
    """
    if isinstance(ref, EcfReport):
        if not np.array_equal(ref.probes, emp.probes):
            raise ValueError("probe sets differ")
        vals, rre, rim = ref.values, ref.se_re, ref.se_im
    else:
        vals = np.asarray(ref, dtype=complex)
        if ref_se is None:
            rre = rim = np.zeros(vals.shape)
        else:
            rre, rim = (np.asarray(a, dtype=float) for a in ref_se)
    return EcfReport(
        emp.probes, emp.values, emp.se_re, emp.se_im, emp.sample_size, emp.ess,
        reference=vals, ref_se_re=rre, ref_se_im=rim, label=emp.label, meta=dict(emp.meta),
    )


def default_probes(split: Sequence[Sequence[int]], dim: int | None = None,
                   grid: Sequence[float] = (-2.0, 0.0, 2.0)) -> np.ndarray:
    """Probe frequencies on the grid ``{-2, 0, 2}`` for every cross-block coordinate pair.

    With two one-dimensional blocks this is the 9-point set ``{-2,0,2}^2``.
    """
    a, b = (list(s) for s in split)
    if dim is None:
        dim = max(a + b) + 1
    out = []
    seen = set()
    for i in a:
        for j in b:
            for gu in grid:
                for gv in grid:
                    p = np.zeros(dim)
                    p[i] += gu
                    p[j] += gv
                    key = tuple(p)
                    if key not in seen:
                        seen.add(key)
                        out.append(p)
    return np.array(out)


def ecf_product_compare(joint_samples, reference_samples, probes=None, split=None,
                        weights=None, reference_weights=None, label: str = "") -> EcfReport:
    """Compare the joint ECF of ``joint_samples`` with that of an independent
    realization of the limit pair, ``reference_samples``.

    Args:
        joint_samples: ``(S, p)`` draws of (statistic, conditioning variables).
        reference_samples: ``(S', p)`` draws of the limit, simulated on an
            independent stream.
        probes: ``(P, p)`` frequencies; defaults to ``default_probes(split)``.
        split: index partition ``(block_a, block_b)`` used for default probes.
    """
    x = _as_matrix(joint_samples, "joint_samples")
    if probes is None:
        if split is None:
            split = ([0], list(range(1, x.shape[1])))
        probes = default_probes(split, x.shape[1])
    emp = ecf(x, probes, weights, label=label)
    ref = ecf(reference_samples, probes, reference_weights)
    return ecf_compare(emp, ref)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float


def fit_rate(ns, errors) -> RateFit:
    """Least-squares fit of ``log(error) = intercept + slope * log(n)``."""
    n = np.asarray(ns, dtype=float)
    e = np.asarray(errors, dtype=float)
    if n.shape != e.shape or n.ndim != 1:
        raise ValueError("ns and errors must be matching 1-d sequences")
    if n.size < 3:
        raise ValueError(f"need at least 3 (n, error) pairs, got {n.size}")
    if np.all(e == 0):
        raise ValueError("degenerate errors: all errors are zero, no rate to fit")
    if np.any(e <= 0) or np.any(n <= 0):
        raise ValueError("errors and n must be positive")
    x, y = np.log(n), np.log(e)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_res <= 1e-30 * max(1.0, ss_tot) else max(0.0, 1.0 - ss_res / ss_tot)
    dof = n.size - 2
    se = math.sqrt(ss_res / dof / sxx) if dof > 0 else float("nan")
    return RateFit(slope, intercept, se, r2)
