"""Crumpling the Brownian measure with a periodic orthogonal map.

A unit-period map ``M`` into orthogonal ``d x d`` matrices with zero mean over
a period defines ``T_n``: replace ``dB_s`` by ``M(ns) dB_s``. On a grid the
map is evaluated at left endpoints and the grid must resolve every piece of
``M(n .)`` exactly, so each increment is rotated by an exactly orthogonal
matrix and increment norms are preserved path by path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from afpwiener.core import DEFAULT_BATCH, BrownianPath, RngStream, TimeGrid, brownian_batches
from afpwiener.stattest import EcfReport, batch_mean, default_probes, ecf, ecf_compare

PathFunctional = Callable[[BrownianPath], np.ndarray]

OVERSAMPLING = 16


@dataclass(frozen=True, eq=False)
class PeriodicOrthogonalMap:
    """Unit-period orthogonal-matrix valued map.

    Variants:
        ``rotation2d``: planar rotation by angle ``2 pi t``.
        ``sign1d``: ``+1`` on [0, 1/2), ``-1`` on [1/2, 1).
        ``piecewise_constant``: ``matrices[i]`` on ``[i/P, (i+1)/P)``.
    """

    variant: str
    matrices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant == "piecewise_constant":
            m = np.asarray(self.matrices, dtype=float)
            if m.ndim != 3 or m.shape[1] != m.shape[2]:
                raise ValueError("matrices must have shape (pieces, d, d)")
            eye = np.eye(m.shape[1])
            err = np.max(np.abs(np.einsum("pji,pjk->pik", m, m) - eye))
            if err > 1e-12:
                raise ValueError(f"matrices are not orthogonal (max error {err:.2e})")
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, "matrices", m)
        elif self.variant not in ("rotation2d", "sign1d"):
            raise ValueError(f"unknown map variant {self.variant!r}")

    @classmethod
    def rotation2d(cls) -> "PeriodicOrthogonalMap":
        return cls("rotation2d")

    @classmethod
    def sign1d(cls) -> "PeriodicOrthogonalMap":
        return cls("sign1d")

    @classmethod
    def piecewise(cls, matrices) -> "PeriodicOrthogonalMap":
        return cls("piecewise_constant", np.asarray(matrices, dtype=float))

    @classmethod
    def identity(cls, d: int = 1) -> "PeriodicOrthogonalMap":
        """Constant identity. Not mean-zero; useful only as a plumbing check."""
        return cls.piecewise(np.eye(d)[None])

    @property
    def dim(self) -> int:
        if self.variant == "rotation2d":
            return 2
        if self.variant == "sign1d":
            return 1
        return self.matrices.shape[1]

    @property
    def pieces(self) -> int:
        """Constancy pieces per period the grid has to resolve."""
        if self.variant == "rotation2d":
            return 1
        if self.variant == "sign1d":
            return 2
        return self.matrices.shape[0]

    def __call__(self, t) -> np.ndarray:
        """``M(t)`` for scalar or array ``t``; shape ``t.shape + (d, d)``."""
        t = np.asarray(t, dtype=float)
        s = t - np.floor(t)
        if self.variant == "rotation2d":
            return _rotation(2 * math.pi * s)
        if self.variant == "sign1d":
            return np.where(s < 0.5, 1.0, -1.0)[..., None, None]
        idx = np.minimum((s * self.pieces).astype(int), self.pieces - 1)
        return self.matrices[idx]

    def on_grid(self, grid: TimeGrid, n: int) -> np.ndarray:
        """Left-endpoint values ``M(n t_j)``, ``j < N``, shape ``(N, d, d)``.

        Phases are reduced with integer arithmetic, so the values are exact
        orthogonal matrices.
        """
        grid.require_multiple(n * self.pieces, f"n={n} times {self.pieces} pieces of M")
        N = grid.steps
        r = (n * np.arange(N)) % N  # M(n t_j) = M(r / N)
        if self.variant == "rotation2d":
            return _rotation(2 * math.pi * r / N)
        idx = (r * self.pieces) // N
        if self.variant == "sign1d":
            return np.where(idx == 0, 1.0, -1.0)[:, None, None]
        return self.matrices[idx]

    def default_grid(self, n_max: int) -> TimeGrid:
        return TimeGrid(OVERSAMPLING * n_max * self.pieces)


def _rotation(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(np.shape(angle) + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def mean_matrix_integral(M: PeriodicOrthogonalMap, n: int) -> np.ndarray:
    """``int_0^1 M(ns) ds`` in closed form (integer ``n`` covers whole periods)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if M.variant in ("rotation2d", "sign1d"):
        return np.zeros((M.dim, M.dim))
    return M.matrices.mean(axis=0)


def crumple_path(path: BrownianPath, M: PeriodicOrthogonalMap, n: int) -> BrownianPath:
    """Path with increments ``M(n t_j) dB_j`` (left endpoints)."""
    if path.dim != M.dim:
        raise ValueError(f"path dimension {path.dim} != map dimension {M.dim}")
    mg = M.on_grid(path.grid, n)
    if M.dim == 1:
        inc = path.increments * mg[:, 0, 0]
    elif M.dim == 2:
        x, y = path.increments[..., 0, :], path.increments[..., 1, :]
        inc = np.empty_like(path.increments)
        inc[..., 0, :] = mg[:, 0, 0] * x + mg[:, 0, 1] * y
        inc[..., 1, :] = mg[:, 1, 0] * x + mg[:, 1, 1] * y
    else:
        inc = np.einsum("jab,...bj->...aj", mg, path.increments)
    return BrownianPath(path.grid, inc)


# Path functionals. Each maps a (batched) path to an array with one row per path.

def terminal_value(coord: int | None = None) -> PathFunctional:
    """``B_1`` (all coordinates, or one)."""
    def f(path: BrownianPath) -> np.ndarray:
        v = path.terminal()
        return v if coord is None else v[..., coord]
    return f


def value_at(t: float, coord: int | None = None) -> PathFunctional:
    def f(path: BrownianPath) -> np.ndarray:
        j = path.grid.index_of(t)
        v = path.increments[..., :j].sum(axis=-1)
        return v if coord is None else v[..., coord]
    return f


def exponential_functional(xi) -> PathFunctional:
    """``exp(i int xi . dB + 1/2 int |xi|^2)`` for a constant vector or a
    ``(d, N)`` grid function ``xi``."""
    def f(path: BrownianPath) -> np.ndarray:
        d, N = path.dim, path.grid.steps
        x = np.broadcast_to(np.asarray(xi, dtype=float).reshape(d, -1), (d, N))
        stoch = np.einsum("an,...an->...", x, path.increments)
        return np.exp(1j * stoch + 0.5 * np.sum(x * x) * path.grid.dt)
    return f


def _evaluate(X: PathFunctional, path: BrownianPath) -> np.ndarray:
    v = np.asarray(X(path))
    return v.reshape(v.shape[0], -1) if v.ndim != 1 else v


def transform_rv(X: PathFunctional, M: PeriodicOrthogonalMap, n: int, stream: RngStream,
                 samples: int, grid: TimeGrid | None = None, batch: int = DEFAULT_BATCH) -> np.ndarray:
    """Draws of ``T_n(X) = X(crumpled B)``."""
    grid = M.default_grid(n) if grid is None else grid
    out = [_evaluate(X, crumple_path(p, M, n))
           for p in brownian_batches(stream, grid, samples, M.dim, batch)]
    return np.concatenate(out)


@dataclass(frozen=True)
class StableResult:
    """Verdict for one crumpling frequency."""

    n: int
    ecf: EcfReport
    covariance: np.ndarray      # E[T_n X (x) B(probe)], rows: stat coords
    covariance_se: np.ndarray
    mean_integral: np.ndarray
    ess: float

    @property
    def max_abs_z(self) -> float:
        return self.ecf.max_abs_z


def _columns(v: np.ndarray) -> np.ndarray:
    return v[:, None] if v.ndim == 1 else v


def stable_convergence_experiment(X: PathFunctional, M: PeriodicOrthogonalMap, n_list: Sequence[int],
                                  samples: int, stream: RngStream,
                                  probe_times: Sequence[float] = (0.5, 1.0), probes=None,
                                  tilt: PathFunctional | None = None, grid: TimeGrid | None = None,
                                  batch: int = DEFAULT_BATCH) -> list[StableResult]:
    """Compare ``(T_n X, B(probe_times))`` with ``(X(W), B(probe_times))``, W independent.

    The same Brownian sample ``B`` drives every ``n`` and the reference. The
    independent copy ``W`` for row ``i`` is the path of row ``i + 1`` of the
    same batch (cyclically), so no second set of paths is drawn; each
    reference pair still has the exact product law. ``X`` must be real
    valued. With ``tilt`` (a nonnegative functional of ``B`` with mean one)
    all averages are taken under the reweighted measure.
    """
    n_list = [int(n) for n in n_list]
    grid = M.default_grid(max(n_list)) if grid is None else grid
    for n in n_list:
        grid.require_multiple(n * M.pieces, f"n={n} times {M.pieces} pieces of M")
    idx = [grid.index_of(t) for t in probe_times]
    if batch < 2:
        raise ValueError("batch must hold at least two paths")

    stats = {n: [] for n in n_list}
    ref, bprobe, wts = [], [], []
    for pb in brownian_batches(stream.named("B"), grid, samples, M.dim, batch):
        if pb.batch_shape[0] < 2:
            raise ValueError("the last batch must hold at least two paths")
        bprobe.append(np.concatenate([pb.value_at_index(j) for j in idx], axis=-1))
        for n in n_list:
            stats[n].append(_columns(_evaluate(X, crumple_path(pb, M, n))))
        pw = BrownianPath(grid, np.roll(pb.increments, -1, axis=0))
        ref.append(_columns(_evaluate(X, pw)))
        if tilt is not None:
            wts.append(np.asarray(tilt(pb), dtype=float))

    bprobe = np.concatenate(bprobe)
    ref = np.concatenate(ref)
    w = np.concatenate(wts) if tilt is not None else None
    if np.iscomplexobj(ref):
        raise TypeError("stable_convergence_experiment needs a real functional")
    q = ref.shape[1]
    if probes is None:
        probes = default_probes((list(range(q)), list(range(q, q + bprobe.shape[1]))))
    ref_rep = ecf(np.hstack([ref, bprobe]), probes, w)

    results = []
    for n in n_list:
        s = np.concatenate(stats[n])
        emp = ecf(np.hstack([s, bprobe]), probes, w, label=f"stable n={n}")
        rep = ecf_compare(emp, ref_rep)
        rep.meta["n"] = n
        cov = np.empty((q, bprobe.shape[1]))
        cse = np.empty_like(cov)
        for a in range(q):
            for b in range(bprobe.shape[1]):
                cov[a, b], cse[a, b] = batch_mean(s[:, a] * bprobe[:, b], w)
        results.append(StableResult(n, rep, cov, cse, mean_matrix_integral(M, n), rep.ess))
    return results
