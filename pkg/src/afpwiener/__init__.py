"""Arbitrary functions principle on the Wiener space.

Monte Carlo and exact-kernel tools for fractional-part limit laws, periodic
crumpling of the Brownian measure, chaos phase operators and the Euler
error-rate contrast.
"""

from afpwiener.core import (
    BrownianPath,
    RngStream,
    TimeGrid,
    path_value,
    sample_brownian,
)

__all__ = [
    "BrownianPath",
    "RngStream",
    "TimeGrid",
    "path_value",
    "sample_brownian",
]

__version__ = "0.1.0"
