"""Discretized space-time white noise.

Cell (n, j) of a grid carries the integral of the noise over
[n dt, (n+1) dt) x [cell j], an independent N(0, dt dx) variable. Values come
from a counter-based stream keyed by (seed, replica_id), so any time slice
can be regenerated on demand and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from ._rng import replica_key
from .grid import Grid

DEFAULT_MAX_BYTES = 1 << 30


class NoiseCapacityError(MemoryError):
    """A full noise field would not fit; generate it slice by slice instead."""


@dataclass(frozen=True)
class NoiseSpec:
    """Everything that determines a noise realization.

    ``refine = k`` draws the field on ``grid.refine(k)`` and aggregates it, so
    runs at several resolutions can share one Brownian sheet.
    """

    seed: int
    replica_id: int
    grid: Grid
    refine: int = 0

    def __post_init__(self):
        if self.replica_id < 0:
            raise ValueError("replica_id must be nonnegative")

    @property
    def key(self) -> np.uint64:
        return replica_key(self.seed, self.replica_id)

    @property
    def stride(self) -> int:
        return self.grid.refine(self.refine).row_stride


@dataclass(frozen=True)
class NoiseField:
    increments: np.ndarray  # (n_steps, cells)
    cell_variance: float


def _standard_normals(spec: NoiseSpec, n0: int, n1: int) -> np.ndarray:
    out = np.empty((n1 - n0, spec.grid.cells))
    _engine.noise_block(spec.key, n0, n1, spec.grid.cells, spec.stride, spec.refine, out)
    return out


def sample_noise(spec: NoiseSpec, max_bytes: int = DEFAULT_MAX_BYTES) -> NoiseField:
    g = spec.grid
    need = 8 * g.n_steps * g.cells
    if need > max_bytes:
        raise NoiseCapacityError(
            f"noise field needs {need} bytes > {max_bytes}; use noise_slice() per time step"
        )
    var = g.dt * g.dx
    return NoiseField(np.sqrt(var) * _standard_normals(spec, 0, g.n_steps), var)


def noise_slice(spec: NoiseSpec, n: int) -> np.ndarray:
    """Increments of time step n only (streaming access)."""
    if not 0 <= n < spec.grid.n_steps:
        raise IndexError(f"time step {n} outside [0, {spec.grid.n_steps})")
    return np.sqrt(spec.grid.dt * spec.grid.dx) * _standard_normals(spec, n, n + 1)[0]


def sheet_value(field: NoiseField, grid: Grid, t: float, x: float) -> float:
    """Brownian sheet B(t, x): noise mass of [0, t] x [0, x] (or [x, 0] for x < 0).

    Cells are attributed to the side of the origin their centre lies on. The
    cell centred at the origin is left out, which keeps B(t, x) and B(t, -x)
    independent and makes the covered length exactly |x| on grid points.
    """
    n = grid.step_of(t) if t > 0 else 0
    if n == 0 or x == 0:
        return 0.0
    xs = grid.x - grid.center
    if x > 0:
        mask = (xs > 0) & (xs <= x + 1e-12)
    else:
        mask = (xs < 0) & (xs >= x - 1e-12)
    return float(field.increments[:n, mask].sum())


def brownian_sheet_check(fields, grid: Grid, s: float, t: float, x: float, y: float):
    """Ensemble covariance of B(s, x) and B(t, y) against min(s,t) min(|x|,|y|) 1{xy > 0}.

    Returns (estimate, standard_error, expected).
    """
    a = np.array([sheet_value(f, grid, s, x) for f in fields])
    b = np.array([sheet_value(f, grid, t, y) for f in fields])
    expected = min(s, t) * min(abs(x), abs(y)) * (1.0 if x * y > 0 else 0.0)
    if s == 0 or t == 0:
        return 0.0, 0.0, 0.0
    prod = (a - a.mean()) * (b - b.mean())
    n = len(fields)
    est = float(prod.sum() / (n - 1))
    se = float(prod.std(ddof=1) / np.sqrt(n))
    return est, se, expected
