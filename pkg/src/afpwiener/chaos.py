"""Discrete Wiener chaos on a uniform grid (one-dimensional Brownian motion).

An element of order ``k`` is an ordered iterated sum

    sum_{j_1 < ... < j_k} f(t_{j_1}, ..., t_{j_k}) dB_{j_1} ... dB_{j_k}

with a complex kernel ``f`` on the strict simplex of grid indices. Products of
distinct independent increments are orthogonal, so the discrete chaoses are
exactly orthogonal and ``E|X|^2`` equals the kernel norm
``sum |f|^2 dt^k`` with no discretization error.

Kernels are stored either as a sum of rank-one terms (``factors`` of shape
``(r, k, N)``, term ``a`` being ``prod_p factors[a, p, j_p]``) or densely as an
``N**k`` array that vanishes off the simplex. Rank-one sums are closed under
the phase operator, so large grids stay cheap; simplex sums use the prefix
recursion ``L_p(j) = a_p(j) sum_{i<j} L_{p-1}(i)``.

Conventions: the Ornstein-Uhlenbeck operator multiplies order ``k`` by
``-k/2``; inner products are Hermitian, ``<f, g> = sum f conj(g) dt^k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from afpwiener.core import BrownianPath, RngStream, TimeGrid, brownian_batches
from afpwiener.stattest import EcfReport, batch_mean, default_probes, ecf, ecf_compare

MAX_ORDER = 3
MAX_DENSE_ENTRIES = 1 << 22
CHAOS_BATCH = 1000


@dataclass(frozen=True)
class PeriodicScalarTheta:
    """Unit-period real function with mean 0 and mean square 1."""

    variant: str = "cosine"

    def __post_init__(self):
        if self.variant not in ("cosine", "sine", "rademacher"):
            raise ValueError(f"unknown theta variant {self.variant!r}")

    @property
    def sup_norm(self) -> float:
        return 1.0 if self.variant == "rademacher" else math.sqrt(2.0)

    @property
    def pieces(self) -> int:
        return 2 if self.variant == "rademacher" else 1

    def mean(self) -> float:
        return 0.0

    def mean_square(self) -> float:
        return 1.0

    def _at_fraction(self, s) -> np.ndarray:
        if self.variant == "cosine":
            return math.sqrt(2.0) * np.cos(2 * math.pi * s)
        if self.variant == "sine":
            return math.sqrt(2.0) * np.sin(2 * math.pi * s)
        return np.where(s < 0.5, 1.0, -1.0)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self._at_fraction(t - np.floor(t))

    def on_grid(self, grid: TimeGrid, n: int) -> np.ndarray:
        """``theta(n t_j)`` at left endpoints, reduced exactly mod 1."""
        grid.require_multiple(n * self.pieces, f"n={n} times {self.pieces} pieces of theta")
        N = grid.steps
        r = (n * np.arange(N)) % N
        if self.variant == "rademacher":
            return np.where(2 * r < N, 1.0, -1.0)
        return self._at_fraction(r / N)

    def phases(self, grid: TimeGrid, n: int) -> np.ndarray:
        """Per-slot phase ``exp(i theta(n t_j) / n)``."""
        return np.exp(1j * self.on_grid(grid, n) / n)


def _excl_cumsum(a: np.ndarray) -> np.ndarray:
    c = np.cumsum(a, axis=-1)
    out = np.empty_like(c)
    out[..., 0] = 0
    out[..., 1:] = c[..., :-1]
    return out


def _simplex_sum(a: np.ndarray) -> np.ndarray:
    """``sum_{j_1<...<j_k} prod_p a[..., p, j_p]`` for ``a`` of shape ``(..., k, N)``."""
    L = a[..., 0, :]
    for p in range(1, a.shape[-2]):
        L = a[..., p, :] * _excl_cumsum(L)
    return L.sum(axis=-1)


@numba.njit(cache=True)
def _rank_one_sums(factors, slots):  # pragma: no cover - compiled
    # factors (r, k, N) complex; slots (k, S, N) real -> (S,) complex
    r, k, N = factors.shape
    S = slots.shape[1]
    out = np.zeros(S, dtype=np.complex128)
    prefix = np.zeros(k, dtype=np.complex128)
    for a in range(r):
        for s in range(S):
            prefix[:] = 0
            for j in range(N):
                # high slots first, so slot p sees slot p-1 summed over i < j only
                for p in range(k - 1, 0, -1):
                    prefix[p] += factors[a, p, j] * slots[p, s, j] * prefix[p - 1]
                prefix[0] += factors[a, 0, j] * slots[0, s, j]
            out[s] += prefix[k - 1]
    return out


def _simplex_mask(k: int, N: int) -> np.ndarray:
    idx = np.indices((N,) * k)
    m = np.ones((N,) * k, dtype=bool)
    for p in range(k - 1):
        m &= idx[p] < idx[p + 1]
    return m


class OrderedKernel:
    """Kernel of an order-``k`` ordered iterated sum on ``grid``.

    Build with ``OrderedKernel.rank_one``, ``OrderedKernel.from_factors`` or
    ``OrderedKernel.dense``. Instances are immutable.
    """

    __slots__ = ("order", "grid", "factors", "values")

    def __init__(self, order: int, grid: TimeGrid, factors=None, values=None):
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in 1..{MAX_ORDER}, got {order}")
        if (factors is None) == (values is None):
            raise ValueError("give exactly one of factors or values")
        N = grid.steps
        if factors is not None:
            f = np.asarray(factors)
            if f.ndim == 2:
                f = f[None]
            if f.shape[1:] != (order, N):
                raise ValueError(f"factors must have shape (r, {order}, {N}), got {f.shape}")
            f = f.astype(np.result_type(f.dtype, float), copy=True)
            f.setflags(write=False)
            values = None
        else:
            if N**order > MAX_DENSE_ENTRIES:
                raise ValueError(
                    f"dense order-{order} kernel on N={N} exceeds {MAX_DENSE_ENTRIES} entries; "
                    "use a rank-one representation"
                )
            v = np.asarray(values)
            if v.shape != (N,) * order:
                raise ValueError(f"dense values must have shape {(N,) * order}")
            v = np.where(_simplex_mask(order, N), v, 0).astype(np.result_type(v.dtype, float))
            v.setflags(write=False)
            values, f = v, None
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "factors", f)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("OrderedKernel is immutable")

    # constructors

    @classmethod
    def rank_one(cls, vectors: Sequence, grid: TimeGrid) -> "OrderedKernel":
        """Product kernel ``prod_p g_p(t_{j_p})``; each ``g_p`` a length-N array or scalar."""
        N = grid.steps
        f = np.stack([np.broadcast_to(np.asarray(g), (N,)) for g in vectors])
        return cls(len(vectors), grid, factors=f[None])

    @classmethod
    def from_factors(cls, factors, grid: TimeGrid) -> "OrderedKernel":
        f = np.asarray(factors)
        return cls(f.shape[-2], grid, factors=f)

    @classmethod
    def dense(cls, values, grid: TimeGrid) -> "OrderedKernel":
        v = np.asarray(values)
        return cls(v.ndim, grid, values=v)

    @classmethod
    def from_function(cls, func, order: int, grid: TimeGrid) -> "OrderedKernel":
        """Dense kernel ``func(t_{j_1}, ..., t_{j_k})`` at left endpoints."""
        t = grid.left_points
        mesh = np.meshgrid(*([t] * order), indexing="ij")
        return cls.dense(np.asarray(func(*mesh)), grid)

    # structure

    @property
    def is_dense(self) -> bool:
        return self.values is not None

    @property
    def is_complex(self) -> bool:
        a = self.values if self.is_dense else self.factors
        return np.iscomplexobj(a)

    def to_dense(self) -> np.ndarray:
        if self.is_dense:
            return self.values
        N, k = self.grid.steps, self.order
        if N**k > MAX_DENSE_ENTRIES:
            raise ValueError(f"cannot densify order-{k} kernel on N={N}")
        out = np.zeros((N,) * k, dtype=self.factors.dtype)
        for term in self.factors:
            t = term[0]
            for p in range(1, k):
                t = np.multiply.outer(t, term[p])
            out = out + t
        return np.where(_simplex_mask(k, N), out, 0)

    def _compatible(self, other: "OrderedKernel") -> None:
        if other.grid != self.grid:
            raise ValueError("kernels live on different grids")
        if other.order != self.order:
            raise ValueError("kernels have different orders")

    # linear structure

    def scaled(self, c) -> "OrderedKernel":
        if self.is_dense:
            return OrderedKernel(self.order, self.grid, values=self.values * c)
        f = np.array(self.factors, dtype=np.result_type(self.factors.dtype, np.asarray(c).dtype))
        f[:, 0, :] *= c
        return OrderedKernel(self.order, self.grid, factors=f)

    def __add__(self, other: "OrderedKernel") -> "OrderedKernel":
        self._compatible(other)
        if not self.is_dense and not other.is_dense:
            dt = np.result_type(self.factors.dtype, other.factors.dtype)
            f = np.concatenate([self.factors.astype(dt), other.factors.astype(dt)])
            return OrderedKernel(self.order, self.grid, factors=f)
        return OrderedKernel(self.order, self.grid, values=self.to_dense() + other.to_dense())

    def __neg__(self) -> "OrderedKernel":
        return self.scaled(-1.0)

    def __sub__(self, other: "OrderedKernel") -> "OrderedKernel":
        return self + (-other)

    def slot_multiplied(self, phi) -> "OrderedKernel":
        """Kernel ``f(j) * prod_p phi(j_p)``: every slot multiplied by ``phi``."""
        phi = np.asarray(phi)
        if self.is_dense:
            t = phi
            for _ in range(1, self.order):
                t = np.multiply.outer(t, phi)
            return OrderedKernel(self.order, self.grid, values=self.values * t)
        return OrderedKernel(self.order, self.grid, factors=self.factors * phi)

    # Hilbert structure

    def inner(self, other: "OrderedKernel") -> complex:
        """Hermitian ``sum_{simplex} f conj(g) dt^k``."""
        self._compatible(other)
        scale = self.grid.dt**self.order
        if self.is_dense or other.is_dense:
            return complex(np.sum(self.to_dense() * np.conj(other.to_dense())) * scale)
        prod = self.factors[:, None] * np.conj(other.factors)[None, :]
        return complex(np.sum(_simplex_sum(prod)) * scale)

    def norm2(self) -> float:
        return float(self.inner(self).real)

    # evaluation

    def evaluate(self, slot_increments: Sequence[np.ndarray]) -> np.ndarray:
        """Iterated sum with slot ``p`` driven by ``slot_increments[p]`` (arrays ``(S, N)``)."""
        k = self.order
        if len(slot_increments) != k:
            raise ValueError("one increment array per slot")
        if self.is_dense:
            S = slot_increments[0].shape[0]
            N = self.grid.steps
            t = slot_increments[0] @ self.values.reshape(N, -1)
            for p in range(1, k):
                t = np.einsum("sjr,sj->sr", t.reshape(S, N, -1), slot_increments[p])
            return t.reshape(S)
        slots = np.stack([np.asarray(x, dtype=float) for x in slot_increments])
        return _rank_one_sums(self.factors.astype(complex), slots)

    def evaluate_numpy(self, slot_increments: Sequence[np.ndarray]) -> np.ndarray:
        """Vectorized-numpy twin of ``evaluate`` for rank-one sums (cross-check)."""
        if self.is_dense:
            return self.evaluate(slot_increments)
        total = 0
        for term in self.factors:
            L = term[0] * slot_increments[0]
            for p in range(1, self.order):
                L = term[p] * slot_increments[p] * _excl_cumsum(L)
            total = total + L.sum(axis=-1)
        return total

    def frozen_at(self, m: int) -> "OrderedKernel | complex":
        """Derivative kernel at grid index ``m``: insert ``m`` in its ordered slot.

        Returns an order ``k-1`` kernel, or a scalar when ``k = 1``.
        """
        k, N = self.order, self.grid.steps
        if k == 1:
            if self.is_dense:
                return complex(self.values[m])
            return complex(np.sum(self.factors[:, 0, m]))
        idx = np.arange(N)
        below, above = idx < m, idx > m
        if self.is_dense:
            out = 0
            for p in range(k):
                s = np.take(self.values, m, axis=p)
                mask = np.ones((N,) * (k - 1), dtype=bool)
                for q in range(k - 1):
                    shape = [1] * (k - 1)
                    shape[q] = N
                    mask = mask & (below if q < p else above).reshape(shape)
                out = out + np.where(mask, s, 0)
            return OrderedKernel(k - 1, self.grid, values=out)
        terms = []
        for term in self.factors:
            for p in range(k):
                rest = [term[q] * (below if q < p else above) for q in range(k) if q != p]
                rest[0] = rest[0] * term[p, m]
                terms.append(np.stack(rest))
        return OrderedKernel(k - 1, self.grid, factors=np.stack(terms))

    def __repr__(self) -> str:
        form = "dense" if self.is_dense else f"rank-{self.factors.shape[0]}"
        return f"OrderedKernel(order={self.order}, N={self.grid.steps}, {form})"


@dataclass(frozen=True, eq=False)
class ChaosElement:
    """Finite chaos expansion ``c + sum_k I_k(f_k)`` with ``k <= 3``."""

    grid: TimeGrid
    constant: complex = 0.0
    kernels: dict = field(default_factory=dict)

    def __post_init__(self):
        ks = {}
        for k, ker in dict(self.kernels).items():
            if ker is None:
                continue
            if ker.order != k or ker.grid != self.grid:
                raise ValueError(f"kernel at key {k} has order {ker.order} / wrong grid")
            ks[k] = ker
        object.__setattr__(self, "kernels", ks)

    @classmethod
    def const(cls, c, grid: TimeGrid) -> "ChaosElement":
        return cls(grid, c)

    @classmethod
    def of(cls, *kernels: OrderedKernel, constant=0.0) -> "ChaosElement":
        if not kernels:
            raise ValueError("need a kernel; use ChaosElement.const for constants")
        grid = kernels[0].grid
        out = cls(grid, constant)
        for k in kernels:
            out = out + cls(grid, 0.0, {k.order: k})
        return out

    @property
    def orders(self) -> list[int]:
        return sorted(self.kernels)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.constant) or any(k.is_complex for k in self.kernels.values())

    def _map(self, fn, constant) -> "ChaosElement":
        return ChaosElement(self.grid, constant, {k: fn(k, v) for k, v in self.kernels.items()})

    def __add__(self, other: "ChaosElement") -> "ChaosElement":
        if other.grid != self.grid:
            raise ValueError("elements live on different grids")
        ks = dict(self.kernels)
        for k, v in other.kernels.items():
            ks[k] = ks[k] + v if k in ks else v
        return ChaosElement(self.grid, self.constant + other.constant, ks)

    def scaled(self, c) -> "ChaosElement":
        return self._map(lambda k, v: v.scaled(c), self.constant * c)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def part(self, k: int) -> "ChaosElement":
        """Projection on chaos ``k`` (``k = 0`` gives the constant)."""
        if k == 0:
            return ChaosElement(self.grid, self.constant)
        return ChaosElement(self.grid, 0.0, {k: self.kernels[k]} if k in self.kernels else {})

    def inner(self, other: "ChaosElement") -> complex:
        """``E[X conj(Y)]`` computed from the kernels."""
        s = complex(self.constant * np.conj(other.constant))
        for k, v in self.kernels.items():
            if k in other.kernels:
                s += v.inner(other.kernels[k])
        return s

    def norm2(self) -> float:
        return float(self.inner(self).real)

    def __repr__(self) -> str:
        return f"ChaosElement(N={self.grid.steps}, c={self.constant}, orders={self.orders})"


# constructors used throughout tests and experiments

def first_chaos(h, grid: TimeGrid) -> ChaosElement:
    """``I_1(h)`` for a grid function or constant ``h``."""
    return ChaosElement.of(OrderedKernel.rank_one([h], grid))


def constant_kernel_element(order: int, value, grid: TimeGrid) -> ChaosElement:
    """``I_k(value)`` with a constant kernel on the simplex."""
    vecs = [value] + [1.0] * (order - 1)
    return ChaosElement.of(OrderedKernel.rank_one(vecs, grid))


def _increments_1d(path: BrownianPath) -> np.ndarray:
    if path.dim != 1:
        raise ValueError("chaos expansions use one-dimensional Brownian motion")
    inc = path.increments[..., 0, :]
    return inc[None] if inc.ndim == 1 else inc


def _check_grid(X: ChaosElement, path: BrownianPath) -> None:
    if path.grid != X.grid:
        raise ValueError(f"path grid N={path.grid.steps} != kernel grid N={X.grid.steps}")


def eval_chaos(X: ChaosElement, path: BrownianPath):
    """Value of ``X`` on each path (scalar for a single path)."""
    _check_grid(X, path)
    inc = _increments_1d(path)
    out = np.full(inc.shape[0], X.constant, dtype=complex)
    for k, ker in X.kernels.items():
        out += ker.evaluate([inc] * k)
    return out[0] if path.increments.ndim == 2 else out


def sharp_sample(X: ChaosElement, path_b: BrownianPath, path_w: BrownianPath):
    """``X^# = int D_s X dW_s``: for each slot, the iterated sum with that slot driven by W."""
    _check_grid(X, path_b)
    _check_grid(X, path_w)
    b, w = _increments_1d(path_b), _increments_1d(path_w)
    if b.shape != w.shape:
        raise ValueError("B and W batches differ in shape")
    out = np.zeros(b.shape[0], dtype=complex)
    for k, ker in X.kernels.items():
        for p in range(k):
            slots = [b] * k
            slots[p] = w
            out += ker.evaluate(slots)
    return out[0] if path_b.increments.ndim == 2 else out


def apply_Rn(X: ChaosElement, theta: PeriodicScalarTheta, n: int) -> ChaosElement:
    """Phase operator: each ``dB_{j}`` picks up ``exp(i theta(n t_j) / n)``. An isometry."""
    phi = theta.phases(X.grid, n)
    return X._map(lambda k, v: v.slot_multiplied(phi), X.constant)


def phase_difference(X: ChaosElement, theta: PeriodicScalarTheta, n: int) -> ChaosElement:
    """``R_n X - X``. Dense kernels use ``expm1`` of the summed phase (no cancellation)."""
    g = theta.on_grid(X.grid, n) / n
    phi = np.exp(1j * g)

    def diff(k, v):
        if v.is_dense:
            s = g
            for _ in range(1, k):
                s = np.add.outer(s, g)
            return OrderedKernel(k, X.grid, values=v.values * np.expm1(1j * s))
        return v.slot_multiplied(phi) - v

    return X._map(diff, 0.0)


def apply_A(X: ChaosElement) -> ChaosElement:
    """Ornstein-Uhlenbeck operator: order ``k`` times ``-k/2``; constants to 0."""
    return X._map(lambda k, v: v.scaled(-k / 2.0), 0.0)


def dirichlet_energy(X: ChaosElement) -> float:
    """``E[X] = sum_k (k/2) ||f_k||^2 = <-A X, X>``."""
    return float(sum(0.5 * k * v.norm2() for k, v in X.kernels.items()))


def malliavin_derivative(X: ChaosElement, t: float) -> ChaosElement:
    """``D_t X`` at a grid point ``t < 1`` (derivative in the increment starting at ``t``)."""
    N = X.grid.steps
    m_float = t * N
    m = int(round(m_float))
    if abs(m_float - m) > 1e-9 or not 0 <= m < N:
        raise ValueError(f"t={t} is not a left grid point of N={N}")
    const = 0.0
    ks = {}
    for k, v in X.kernels.items():
        d = v.frozen_at(m)
        if k == 1:
            const += d
        else:
            ks[k - 1] = d
    return ChaosElement(X.grid, const, ks)


def second_moment_exact(X: ChaosElement, theta: PeriodicScalarTheta, n: int) -> float:
    """``n^2 E|R_n X - X|^2`` from the kernels."""
    return float(n) ** 2 * phase_difference(X, theta, n).norm2()


@dataclass(frozen=True)
class FluctuationResult:
    n: int
    ecf: EcfReport
    exact_second_moment: float
    target: float                 # 2 * dirichlet_energy
    mc_second_moment: float
    mc_se: float
    imag_rms: float               # rms of Im(-in(R_n X - X)) when X is real

    @property
    def max_abs_z(self) -> float:
        return self.ecf.max_abs_z

    @property
    def relative_error(self) -> float:
        return abs(self.exact_second_moment - self.target) / self.target if self.target else 0.0

    @property
    def mc_z(self) -> float:
        d = self.mc_second_moment - self.exact_second_moment
        return 0.0 if self.mc_se == 0 and d == 0 else d / self.mc_se


def _coords(v: np.ndarray, complex_limit: bool) -> np.ndarray:
    return np.column_stack([v.real, v.imag]) if complex_limit else v.real[:, None]


def fluctuation_experiment(X: ChaosElement, theta: PeriodicScalarTheta, n_list: Sequence[int],
                           samples: int, stream: RngStream,
                           probe_times: Sequence[float] = (0.5, 1.0), probes=None,
                           batch: int = CHAOS_BATCH) -> list[FluctuationResult]:
    """Joint law of ``(-in(R_n X - X), B(probe_times))`` against ``(X^#, B)``.

    The reference uses fresh ``B'`` and an independent ``W``. For real kernels
    the limit is real and only the real part of the statistic is compared; the
    imaginary part is O(1/n) and reported as ``imag_rms``.
    """
    grid = X.grid
    n_list = [int(n) for n in n_list]
    diffs = {n: phase_difference(X, theta, n) for n in n_list}
    idx = [grid.index_of(t) for t in probe_times]
    complex_limit = X.is_complex

    stat = {n: [] for n in n_list}
    sq = {n: [] for n in n_list}
    bprobe, ref, rprobe = [], [], []
    streams = [stream.named(s) for s in ("B", "Bref", "Wref")]
    gens = [brownian_batches(s, grid, samples, 1, batch) for s in streams]
    for pb, pb2, pw in zip(*gens):
        vb = pb.values()[:, 0, :]
        bprobe.append(vb[:, idx])
        for n in n_list:
            d = eval_chaos(diffs[n], pb)
            stat[n].append(-1j * n * d)
            sq[n].append(n * n * np.abs(d) ** 2)
        ref.append(sharp_sample(X, pb2, pw))
        rprobe.append(pb2.values()[:, 0, idx])

    bprobe = np.concatenate(bprobe)
    ref_x = np.hstack([_coords(np.concatenate(ref), complex_limit), np.concatenate(rprobe)])
    q = 2 if complex_limit else 1
    if probes is None:
        probes = default_probes((list(range(q)), list(range(q, q + len(idx)))))
    ref_rep = ecf(ref_x, probes)
    target = 2.0 * dirichlet_energy(X)

    out = []
    for n in n_list:
        s = np.concatenate(stat[n])
        emp = ecf(np.hstack([_coords(s, complex_limit), bprobe]), probes, label=f"fluctuation n={n}")
        rep = ecf_compare(emp, ref_rep)
        rep.meta["n"] = n
        m, se = batch_mean(np.concatenate(sq[n]))
        imag_rms = 0.0 if complex_limit else float(np.sqrt(np.mean(s.imag**2)))
        out.append(FluctuationResult(n, rep, second_moment_exact(X, theta, n), target,
                                     float(m), se, imag_rms))
    return out


@dataclass(frozen=True, eq=False)
class ExponentialVector:
    """Normalized exponential ``exp(int xi dB - 1/2 int xi^2)`` for a grid function ``xi``."""

    xi: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        x = np.array(np.broadcast_to(np.asarray(self.xi, dtype=float), (self.grid.steps,)))
        x.setflags(write=False)
        object.__setattr__(self, "xi", x)

    def norm2_xi(self) -> float:
        return float(np.sum(self.xi**2) * self.grid.dt)

    def tail(self, K: int) -> float:
        """``||E(xi)||^2 - sum_{k<=K} ||xi||^{2k} / k!``."""
        a = self.norm2_xi()
        return math.exp(a) - sum(a**k / math.factorial(k) for k in range(K + 1))

    def pathwise(self, path: BrownianPath) -> np.ndarray:
        inc = _increments_1d(path)
        return np.exp(inc @ self.xi - 0.5 * self.norm2_xi())

    def wick(self, path: BrownianPath) -> np.ndarray:
        """Discrete exponential ``prod_j (1 + xi_j dB_j)``; its chaos expansion is
        exactly the ordered sums of ``xi^{(x)k}``."""
        inc = _increments_1d(path)
        return np.prod(1.0 + inc * self.xi, axis=-1)


def expand_exponential(v: ExponentialVector, K: int = 3, max_tail_fraction: float = 0.1) -> ChaosElement:
    """Chaos expansion of ``E(xi)`` truncated at order ``K``.

    On the ordered simplex the kernel of order ``k`` is ``xi(t_1)...xi(t_k)``:
    the ``1/k!`` of the symmetric expansion cancels against the ``k!`` orderings.
    """
    if not 0 <= K <= MAX_ORDER:
        raise ValueError(f"truncation order must be in 0..{MAX_ORDER}")
    total = math.exp(v.norm2_xi())
    if v.tail(K) > max_tail_fraction * total:
        raise ValueError(
            f"truncation tail {v.tail(K):.3g} exceeds {max_tail_fraction:.0%} of "
            f"||E(xi)||^2 = {total:.3g}; reduce ||xi|| or raise K"
        )
    ks = {k: OrderedKernel.rank_one([v.xi] * k, v.grid) for k in range(1, K + 1)}
    return ChaosElement(v.grid, 1.0, ks)


@dataclass(frozen=True)
class BiasFormRow:
    n: int
    theoretical: complex   # n^2 E[(R_n X - X) conj Y]
    practical: complex     # n^2 E[(X - R_n X) conj(R_n Y)]
    target: complex        # <A X, Y>


def bias_form_experiment(X: ChaosElement, Y: ChaosElement, theta: PeriodicScalarTheta,
                         n_list: Sequence[int]) -> list[BiasFormRow]:
    """Exact bias forms from per-order kernel inner products (no Monte Carlo)."""
    target = apply_A(X).inner(Y)
    rows = []
    for n in n_list:
        d = phase_difference(X, theta, n)
        ry = apply_Rn(Y, theta, n)
        th = n * n * d.inner(Y)
        pr = -(n * n) * d.inner(ry)
        rows.append(BiasFormRow(int(n), complex(th), complex(pr), complex(target)))
    return rows
