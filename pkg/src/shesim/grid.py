from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np

# Counter rows are padded so that a grid refined up to 2**MAX_REFINE times
# can lay its aggregated cells over this grid's counters without overlap.
MAX_REFINE = 4
ROW_PAD = 2**MAX_REFINE


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Truncated space-time lattice on [center - X, center + X] x [0, n_steps dt].

    The explicit scheme for (1/2) u'' is stable for dt <= dx^2; construction
    refuses anything else.
    """

    halfwidth: float
    dx: float
    dt: float
    n_steps: int
    center: float = 0.0

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0 or self.halfwidth <= 0:
            raise GridError("halfwidth, dx and dt must be positive")
        if self.n_steps < 1:
            raise GridError("n_steps must be at least 1")
        if self.dt > self.dx**2 * (1 + 1e-12):
            raise GridError("stability: dt <= dx^2")
        if self.half_cells < 1:
            raise GridError("halfwidth must span at least one cell")

    @classmethod
    def for_time(cls, T: float, dx: float, halfwidth: float, center: float = 0.0,
                 dt_ratio: float = 0.5) -> Grid:
        """Grid reaching exactly time T with dt <= dt_ratio * dx^2."""
        if T <= 0:
            raise GridError("final time must be positive")
        n = int(math.ceil(T / (dt_ratio * dx * dx) - 1e-9))
        return cls(halfwidth=halfwidth, dx=dx, dt=T / n, n_steps=n, center=center)

    @classmethod
    def for_times(cls, times, dx: float, halfwidth: float, center: float = 0.0,
                  dt_ratio: float = 0.5) -> Grid:
        """Grid whose time steps hit every value in ``times`` exactly."""
        fr = [Fraction(t).limit_denominator(10**6) for t in times]
        if not fr or min(fr) <= 0:
            raise GridError("times must be positive")
        num = reduce(math.gcd, [f.numerator for f in fr])
        den = reduce(lambda a, b: a * b // math.gcd(a, b), [f.denominator for f in fr])
        g = num / den
        m = int(math.ceil(g / (dt_ratio * dx * dx) - 1e-9))
        dt = g / m
        return cls(halfwidth=halfwidth, dx=dx, dt=dt, n_steps=int(round(max(fr) / g)) * m,
                   center=center)

    @property
    def half_cells(self) -> int:
        return int(math.floor(self.halfwidth / self.dx + 1e-9))

    @property
    def cells(self) -> int:
        return 2 * self.half_cells + 1

    @property
    def row_stride(self) -> int:
        return self.cells + ROW_PAD

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def x(self) -> np.ndarray:
        return self.center + self.dx * np.arange(-self.half_cells, self.half_cells + 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def diffusion_ratio(self) -> float:
        """dt / (2 dx^2), the stencil weight of each neighbour."""
        return self.dt / (2.0 * self.dx * self.dx)

    def index_of(self, x: float) -> int:
        """Nearest cell to x; raises if x lies outside the grid."""
        i = int(round((x - self.center) / self.dx)) + self.half_cells
        if not 0 <= i < self.cells:
            raise GridError(f"x={x} outside grid [{self.x[0]}, {self.x[-1]}]")
        return i

    def step_of(self, t: float) -> int:
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > 1e-9 * max(1.0, t) or not 0 <= n <= self.n_steps:
            raise GridError(f"t={t} is not a step of this grid (dt={self.dt})")
        return n

    def refine(self, k: int = 1) -> Grid:
        """Grid with dx / 2^k and dt / 4^k over the same window and horizon."""
        if not 0 <= k <= MAX_REFINE:
            raise GridError(f"refinement level must be in [0, {MAX_REFINE}]")
        f = 2**k
        return Grid(halfwidth=self.half_cells * self.dx, dx=self.dx / f, dt=self.dt / f**2,
                    n_steps=self.n_steps * f**2, center=self.center)

    def contains(self, lo: float, hi: float) -> bool:
        return lo >= self.x[0] - 1e-9 and hi <= self.x[-1] + 1e-9
