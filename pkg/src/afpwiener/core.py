"""Time grids, reproducible random streams and Brownian paths on [0, 1].

Every experiment in the package draws its randomness from an ``RngStream``.
A stream is identified by ``(master_seed, stream_index)``; child streams are
derived by hashing the index, so batches of paths can be handed out by
number without any coordination between workers.

Paths carry their increments in an array of shape ``(..., d, N)``: a single
path is ``(d, N)``, a batch of ``S`` paths is ``(S, d, N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

_MASK64 = (1 << 64) - 1

#: Paths per batch when experiments generate large samples chunk by chunk.
DEFAULT_BATCH = 2000


def _mix64(a: int, b: int) -> int:
    # splitmix64 finalizer over the pair; bijective in each argument
    z = (a * 0x9E3779B97F4A7C15 + b + 0x632BE59BD9B4E019) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j / steps`` on [0, 1]."""

    steps: int

    def __post_init__(self):
        if isinstance(self.steps, bool) or int(self.steps) != self.steps:
            raise TypeError(f"steps must be an integer, got {self.steps!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.steps + 1) / self.steps

    @property
    def left_points(self) -> np.ndarray:
        """Left endpoints ``t_0, ..., t_{N-1}`` of the subintervals."""
        return np.arange(self.steps) / self.steps

    def index_of(self, t: float) -> int:
        """Grid index ``floor(t N)``, tolerant to rounding at grid points."""
        t = float(t)
        if not (0.0 <= t <= 1.0) or math.isnan(t):
            raise ValueError(f"time {t} outside [0, 1]")
        x = t * self.steps
        r = round(x)
        if abs(x - r) < 1e-9:
            return int(r)
        return int(math.floor(x))

    def require_multiple(self, m: int, what: str = "frequency") -> None:
        """Raise unless the number of steps is a multiple of ``m``."""
        if m < 1 or self.steps % m:
            raise ValueError(
                f"grid steps N={self.steps} is not a multiple of {m} ({what}); "
                "choose N divisible by it"
            )


@dataclass(frozen=True)
class RngStream:
    """Counter-addressed random stream.

    Identical ``(master_seed, stream_index)`` always reproduce the same
    draws. The generator is Philox keyed through ``numpy.random.SeedSequence``
    with the stream index as spawn key.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_index", int(self.stream_index) & _MASK64)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_index,)
        )
        return np.random.Generator(np.random.Philox(seq))

    def spawn(self, key: int) -> "RngStream":
        """Child stream number ``key``; distinct keys give distinct streams."""
        return RngStream(self.master_seed, _mix64(self.stream_index, int(key) & _MASK64))

    def named(self, label: str) -> "RngStream":
        """Child stream addressed by a short text label."""
        key = int.from_bytes(label.encode("utf-8")[:8].ljust(8, b"\0"), "little")
        return self.spawn(key ^ len(label))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Brownian path(s) on a uniform grid.

    Attributes:
        grid: the time grid.
        increments: array ``(..., d, N)``; leading axes index independent paths.
    """

    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments)
        if inc.ndim < 2:
            raise ValueError("increments must have shape (..., d, N)")
        if inc.shape[-1] != self.grid.steps:
            raise ValueError(
                f"increments have {inc.shape[-1]} steps, grid has {self.grid.steps}"
            )
        # read-only view; the caller's array keeps its own flags
        inc = inc.view()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def dim(self) -> int:
        return self.increments.shape[-2]

    @property
    def batch_shape(self) -> tuple:
        return self.increments.shape[:-2]

    def values(self) -> np.ndarray:
        """Cumulative values at ``t_0..t_N``, shape ``(..., d, N + 1)``."""
        out = np.zeros(self.increments.shape[:-1] + (self.grid.steps + 1,))
        np.cumsum(self.increments, axis=-1, out=out[..., 1:])
        return out

    def value_at_index(self, j: int) -> np.ndarray:
        if not 0 <= j <= self.grid.steps:
            raise IndexError(j)
        return self.increments[..., :j].sum(axis=-1)

    def terminal(self) -> np.ndarray:
        return self.increments.sum(axis=-1)


def sample_brownian(
    stream: RngStream, grid: TimeGrid, d: int = 1, samples: int | None = None
) -> BrownianPath:
    """Draw a Brownian path (or ``samples`` independent paths) from ``stream``.

    The increments are i.i.d. ``N(0, dt)`` per coordinate. The result is a
    pure function of ``(stream, grid, d, samples)``.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    shape = (d, grid.steps) if samples is None else (int(samples), d, grid.steps)
    rng = stream.generator()
    inc = rng.standard_normal(shape)
    inc *= math.sqrt(grid.dt)
    return BrownianPath(grid, inc)


def path_value(path: BrownianPath, t: float) -> np.ndarray:
    """Value of the path at the grid point ``floor(t N) / N`` (left lookup)."""
    return path.value_at_index(path.grid.index_of(t))


def batch_sizes(total: int, batch: int = DEFAULT_BATCH) -> list[int]:
    if total < 1:
        raise ValueError("need at least one sample")
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def brownian_batches(
    stream: RngStream,
    grid: TimeGrid,
    samples: int,
    d: int = 1,
    batch: int = DEFAULT_BATCH,
) -> Iterator[BrownianPath]:
    """Yield ``samples`` paths in chunks, chunk ``i`` drawn from ``stream.spawn(i)``."""
    for i, size in enumerate(batch_sizes(samples, batch)):
        yield sample_brownian(stream.spawn(i), grid, d, size)
