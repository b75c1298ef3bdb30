"""Explicit finite differences for du = (1/2) u'' dt + sigma(u) dW on a window.

The update on interior cells is

    u[j] += dt/(2 dx^2) (u[j+1] - 2 u[j] + u[j-1]) + sigma(u[j]) W[n, j] / dx,

with W[n, j] ~ N(0, dt dx). The two edge cells are pinned to the
deterministic heat flow (p_t * u0)(+-X): far from the observation window the
solution barely feels the noise inside it.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _engine
from ._rng import replica_key
from .grid import Grid, GridError
from .kernel import QuadratureSpec, semigroup_apply
from .noise import NoiseSpec

CHUNK = 16

# min over w of sin(w)/w, attained at the first positive root of tan w = w
_SINC_MIN = -0.21723362821122166

_KIND_CODES = {
    "zero": _engine.SIGMA_ZERO,
    "linear": _engine.SIGMA_LINEAR,
    "wobble": _engine.SIGMA_WOBBLE,
    "table": _engine.SIGMA_TABLE,
}


class ReplicaAbort(FloatingPointError):
    """A replica produced a non-finite value."""


@dataclass(frozen=True)
class SigmaFn:
    """Noise coefficient sigma with sigma(0) = 0.

    linear: lam * u.  wobble: lam * (u + sin(u)/2), a nonlinear member of the
    class with Lipschitz constant 1.5 lam and inf |sigma(w)/w| > lam/2.
    table: piecewise linear through (w, sigma(w)) knots, extended by the end
    slopes. zero: sigma = 0, the deterministic audit case.
    """

    kind: str
    lam: float = 1.0
    knots_w: tuple = ()
    knots_s: tuple = ()
    lip: float = field(init=False, compare=False)
    ell_lower: float = field(init=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown sigma kind {self.kind!r}")
        if self.kind in ("linear", "wobble") and self.lam <= 0:
            raise ValueError("sigma coefficient must be positive")
        if self.kind == "table":
            w = np.asarray(self.knots_w, dtype=float)
            if w.size < 2 or np.any(np.diff(w) <= 0) or len(self.knots_s) != w.size:
                raise ValueError("table sigma needs >= 2 increasing knots with matching values")
        lip, ell = self._constants()
        object.__setattr__(self, "lip", lip)
        object.__setattr__(self, "ell_lower", ell)

    @classmethod
    def linear(cls, lam: float = 1.0) -> SigmaFn:
        return cls("linear", lam=lam)

    @classmethod
    def wobble(cls, lam: float = 1.0) -> SigmaFn:
        return cls("wobble", lam=lam)

    @classmethod
    def zero(cls) -> SigmaFn:
        return cls("zero", lam=0.0)

    @classmethod
    def table(cls, w: Sequence[float], s: Sequence[float]) -> SigmaFn:
        return cls("table", knots_w=tuple(map(float, w)), knots_s=tuple(map(float, s)))

    def _constants(self):
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "linear":
            return self.lam, self.lam
        if self.kind == "wobble":
            return 1.5 * self.lam, self.lam * (1.0 + 0.5 * _SINC_MIN)
        w = np.asarray(self.knots_w)
        s = np.asarray(self.knots_s)
        slopes = np.diff(s) / np.diff(w)
        lip = float(np.max(np.abs(slopes)))
        # sigma(w)/w is monotone on each linear piece, so its extremes sit at
        # knots, at 0 (the adjacent slopes) and at +-infinity (the end slopes)
        cands = [abs(slopes[0]), abs(slopes[-1])]
        nz = w != 0
        cands += list(np.abs(s[nz] / w[nz]))
        for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
            if a < 0 < b:
                cands.append(abs(slopes[i]))
            if a >= 0 or b <= 0:
                sa, sb = s[i], s[i + 1]
                if sa * sb < 0 or (sa == 0 and a != 0) or (sb == 0 and b != 0):
                    cands.append(0.0)
        return lip, float(min(cands))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            return self.lam * u
        if self.kind == "wobble":
            return self.lam * (u + 0.5 * np.sin(u))
        if self.kind == "table":
            w, s = np.asarray(self.knots_w), np.asarray(self.knots_s)
            return np.vectorize(lambda v: _engine._table_eval(w, s, float(v)))(u)
        return np.zeros_like(u)

    def engine_args(self):
        if self.kind == "table":
            tx, ty = np.asarray(self.knots_w), np.asarray(self.knots_s)
        else:
            tx = ty = np.zeros(2)
        return _KIND_CODES[self.kind], float(self.lam), tx, ty

    def audit(self, w_max: float = 50.0, n: int = 20_001) -> list:
        """Sampled check of sigma(0)=0, the Lipschitz bound and the linear lower bound."""
        w = np.linspace(-w_max, w_max, n)
        s = self(w)
        problems = []
        if abs(float(self(0.0))) > 1e-14:
            problems.append("sigma(0) != 0")
        if np.any(np.abs(np.diff(s)) > self.lip * np.diff(w) * (1 + 1e-9) + 1e-14):
            problems.append(f"Lipschitz bound {self.lip} violated")
        nz = w != 0
        if self.ell_lower <= 0:
            problems.append("inf |sigma(w)/w| is not positive")
        elif np.any(np.abs(s[nz] / w[nz]) < self.ell_lower * (1 - 1e-9)):
            problems.append(f"lower bound |sigma(w)/w| >= {self.ell_lower} violated")
        return problems

    def describe(self) -> dict:
        d = {"kind": self.kind, "lam": self.lam}
        if self.kind == "table":
            d.update(knots_w=list(self.knots_w), knots_s=list(self.knots_s))
        return d


def sigma_from_dict(d: dict) -> SigmaFn:
    kind = d.get("kind", "linear")
    if kind == "table":
        return SigmaFn.table(d["knots_w"], d["knots_s"])
    if kind == "zero":
        return SigmaFn.zero()
    return SigmaFn(kind, lam=float(d.get("lam", 1.0)))


class _Difference:
    """v0 - u0 as a profile-like callable."""

    def __init__(self, u0, v0):
        self.u0, self.v0 = u0, v0
        self.breakpoints = tuple(sorted(set(getattr(u0, "breakpoints", ())) |
                                        set(getattr(v0, "breakpoints", ()))))

    def __call__(self, x):
        return np.asarray(self.v0(x), dtype=float) - np.asarray(self.u0(x), dtype=float)


def _edge_quadrature(T: float) -> QuadratureSpec:
    return QuadratureSpec(spatial_step=0.25, spatial_halfwidth=max(12.0, 8.0 * math.sqrt(T)))


def _boundary_values(profile, grid: Grid):
    x_lo, x_hi = grid.x[0], grid.x[-1]
    lo = np.empty(grid.n_steps + 1)
    hi = np.empty(grid.n_steps + 1)
    lo[0] = float(profile(x_lo))
    hi[0] = float(profile(x_hi))
    if getattr(profile, "kind", None) == "constant":
        lo[:] = hi[:] = profile.level
        return lo, hi
    q = _edge_quadrature(grid.T)
    for n in range(1, grid.n_steps + 1):
        v = semigroup_apply(profile, n * grid.dt, np.array([x_lo, x_hi]), q)
        lo[n], hi[n] = v
    return lo, hi


@lru_cache(maxsize=64)
def boundary_values(profile, grid: Grid):
    """Deterministic heat flow of the profile at the two edge cells, every step."""
    lo, hi = _boundary_values(profile, grid)
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def _pair_boundary(u0, v0, grid: Grid):
    return _boundary_values(_Difference(u0, v0), grid)


def step_explicit(state, noise_row, sigma: SigmaFn, grid: Grid, bc=None) -> np.ndarray:
    """One explicit step; edge cells take ``bc`` = (lo, hi) or keep their values."""
    u = np.asarray(state, dtype=float)
    w = np.asarray(noise_row, dtype=float)
    nxt = u.copy()
    r = grid.diffusion_ratio
    nxt[1:-1] = u[1:-1] + r * (u[2:] - 2.0 * u[1:-1] + u[:-2]) + sigma(u[1:-1]) * w[1:-1] / grid.dx
    if bc is not None:
        nxt[0], nxt[-1] = bc
    if not np.all(np.isfinite(nxt)):
        raise ReplicaAbort("non-finite value after explicit step")
    return nxt


@dataclass
class SolutionField:
    values: np.ndarray  # (n_steps + 1, cells)
    grid: Grid
    profile: object
    sigma: SigmaFn
    noise_spec: Optional[NoiseSpec]
    negativity_fraction: float
    aborted_at: Optional[int] = None

    def header(self) -> dict:
        g = self.grid
        return {
            "grid": {"halfwidth": g.halfwidth, "dx": g.dx, "dt": g.dt, "n_steps": g.n_steps,
                     "center": g.center, "cells": g.cells},
            "shape": list(self.values.shape),
            "dtype": "<f8",
            "order": "row-major (time, cell)",
            "profile": self.profile.describe() if hasattr(self.profile, "describe") else repr(self.profile),
            "sigma": self.sigma.describe(),
            "seed": None if self.noise_spec is None else self.noise_spec.seed,
            "replica_id": None if self.noise_spec is None else self.noise_spec.replica_id,
            "negativity_fraction": self.negativity_fraction,
            "aborted_at": self.aborted_at,
        }

    def to_csv(self, path, every: int = 1):
        """Long-format (t, x, value) rows, floats at 17 significant digits."""
        g = self.grid
        xs, ts = g.x, g.times
        with open(path, "w") as fh:
            fh.write("t,x,value\n")
            for n in range(0, g.n_steps + 1, every):
                for j in range(g.cells):
                    fh.write(f"{ts[n]:.17g},{xs[j]:.17g},{self.values[n, j]:.17g}\n")

    def to_binary(self, path):
        """JSON header line, then the little-endian float64 array in row-major order."""
        head = json.dumps(self.header()).encode()
        with open(path, "wb") as fh:
            fh.write(b"SHEFIELD1\n")
            fh.write(len(head).to_bytes(8, "little"))
            fh.write(head)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())


def read_binary(path):
    """Inverse of SolutionField.to_binary: returns (header, values)."""
    with open(path, "rb") as fh:
        if fh.readline() != b"SHEFIELD1\n":
            raise ValueError(f"{path} is not a solution dump")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n))
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(header["shape"])
    return header, values


@dataclass
class EnsembleRun:
    rows: np.ndarray  # (n_reps, n_record, cells)
    record_steps: np.ndarray
    abort_step: np.ndarray  # -1 where the replica finished
    neg_count: np.ndarray
    grid: Grid

    @property
    def aborted(self) -> np.ndarray:
        return self.abort_step >= 0

    @property
    def negativity_fraction(self) -> float:
        cells = self.grid.n_steps * (self.grid.cells - 2) * len(self.neg_count)
        return float(self.neg_count.sum()) / cells


def _keys(seed: int, first: int, n: int) -> np.ndarray:
    return np.array([replica_key(seed, first + i) for i in range(n)], dtype=np.uint64)


def _dispatch(fn, n_reps: int, parallelism: int):
    """Run fn(lo, hi) over fixed-size replica chunks; chunking never depends on parallelism."""
    bounds = [(lo, min(lo + CHUNK, n_reps)) for lo in range(0, n_reps, CHUNK)]
    if parallelism <= 1 or len(bounds) == 1:
        for lo, hi in bounds:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in bounds]:
            fut.result()


def _record_steps(grid: Grid, record_steps) -> np.ndarray:
    if record_steps is None:
        return np.array([grid.n_steps], dtype=np.int64)
    steps = np.unique(np.asarray(record_steps, dtype=np.int64))
    if steps.size == 0 or steps[0] < 0 or steps[-1] > grid.n_steps:
        raise GridError("record steps outside [0, n_steps]")
    return steps


def run_ensemble(profile, sigma: SigmaFn, grid: Grid, seed: int, n_reps: int,
                 record_steps=None, *, first_replica: int = 0, refine: int = 0,
                 clamp: bool = False, parallelism: int = 1) -> EnsembleRun:
    """Independent replicas first_replica .. first_replica + n_reps - 1 of the scheme."""
    steps = _record_steps(grid, record_steps)
    keys = _keys(seed, first_replica, n_reps)
    u0 = np.ascontiguousarray(profile(grid.x), dtype=float)
    lo, hi = boundary_values(profile, grid)
    stride = grid.refine(refine).row_stride
    kind, lam, tx, ty = sigma.engine_args()
    r = grid.diffusion_ratio
    c = math.sqrt(grid.dt / grid.dx)
    out = np.empty((n_reps, steps.size, grid.cells))
    abort = np.empty(n_reps, dtype=np.int64)
    negs = np.empty(n_reps, dtype=np.int64)

    def work(a, b):
        _engine.run_batch(keys[a:b], u0, lo, hi, grid.n_steps, stride, refine, r, c,
                          kind, lam, tx, ty, clamp, steps, out[a:b], abort[a:b], negs[a:b])

    _dispatch(work, n_reps, parallelism)
    return EnsembleRun(out, steps, abort, negs, grid)


def run_pair_ensemble(u0, v0, sigma: SigmaFn, grid: Grid, seed: int, n_reps: int,
                      record_steps=None, *, first_replica: int = 0, refine: int = 0,
                      parallelism: int = 1):
    """Coupled difference v - u of two solutions sharing every noise cell.

    Returns (d_rows, abort_step) with d_rows shaped (n_reps, n_record, cells).
    """
    steps = _record_steps(grid, record_steps)
    keys = _keys(seed, first_replica, n_reps)
    ug = np.ascontiguousarray(u0(grid.x), dtype=float)
    dg = np.ascontiguousarray(np.asarray(v0(grid.x), dtype=float) - ug)
    lo, hi = boundary_values(u0, grid)
    dlo, dhi = _pair_boundary(u0, v0, grid)
    stride = grid.refine(refine).row_stride
    kind, lam, tx, ty = sigma.engine_args()
    r = grid.diffusion_ratio
    c = math.sqrt(grid.dt / grid.dx)
    out = np.empty((n_reps, steps.size, grid.cells))
    abort = np.empty(n_reps, dtype=np.int64)

    def work(a, b):
        _engine.run_pair_batch(keys[a:b], ug, dg, lo, hi, dlo, dhi, grid.n_steps, stride,
                               refine, r, c, kind, lam, tx, ty, steps, out[a:b], abort[a:b])

    _dispatch(work, n_reps, parallelism)
    return out, abort


def solve(profile, sigma: SigmaFn, T: float, grid: Grid, noise_spec: NoiseSpec,
          clamp: bool = False) -> SolutionField:
    """Full trajectory of one replica."""
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise GridError(f"grid reaches T={grid.T}, not {T}")
    if noise_spec.grid != grid:
        raise GridError("noise spec was drawn for a different grid")
    run = run_ensemble(profile, sigma, grid, noise_spec.seed, 1, np.arange(grid.n_steps + 1),
                       first_replica=noise_spec.replica_id, refine=noise_spec.refine, clamp=clamp)
    aborted = int(run.abort_step[0])
    if aborted >= 0:
        raise ReplicaAbort(f"replica {noise_spec.replica_id} went non-finite at step {aborted}")
    return SolutionField(run.rows[0], grid, profile, sigma, noise_spec,
                         run.negativity_fraction, None)


def picard_iterate(profile, sigma: SigmaFn, t: float, grid: Grid, noise_spec: NoiseSpec,
                   n_iters: int) -> list:
    """Picard iterates u^(0), ..., u^(n_iters) as (n_steps + 1, cells) arrays.

    u^(0) is the initial profile at every time. Each later iterate is the
    lattice mild form driven by sigma of the previous iterate, with the
    noise cell of each step evaluated at its left (predictable) end. The
    iterates converge to the output of ``solve`` for the same noise.
    """
    if abs(grid.T - t) > 1e-12 * max(1.0, t):
        raise GridError(f"grid reaches T={grid.T}, not {t}")
    if n_iters < 0:
        raise ValueError("n_iters must be nonnegative")
    u0 = np.ascontiguousarray(profile(grid.x), dtype=float)
    lo, hi = boundary_values(profile, grid)
    kind, lam, tx, ty = sigma.engine_args()
    out = np.empty((n_iters + 1, grid.n_steps + 1, grid.cells))
    _engine.picard_full(noise_spec.key, u0, lo, hi, grid.n_steps, noise_spec.stride,
                        noise_spec.refine, grid.diffusion_ratio, math.sqrt(grid.dt / grid.dx),
                        kind, lam, tx, ty, n_iters, out)
    return list(out)


def picard_ensemble(profile, sigma: SigmaFn, grid: Grid, seed: int, n_reps: int, n_iters: int,
                    *, parallelism: int = 1) -> np.ndarray:
    """Final-time rows of every Picard iterate: (n_reps, n_iters + 1, cells)."""
    u0 = np.ascontiguousarray(profile(grid.x), dtype=float)
    lo, hi = boundary_values(profile, grid)
    kind, lam, tx, ty = sigma.engine_args()
    keys = _keys(seed, 0, n_reps)
    out = np.empty((n_reps, n_iters + 1, grid.cells))

    def work(a, b):
        _engine.picard_batch(keys[a:b], u0, lo, hi, grid.n_steps, grid.row_stride, 0,
                             grid.diffusion_ratio, math.sqrt(grid.dt / grid.dx),
                             kind, lam, tx, ty, n_iters, out[a:b])

    _dispatch(work, n_reps, parallelism)
    return out


@lru_cache(maxsize=16)
def heat_flow(profile, grid: Grid) -> np.ndarray:
    """Lattice heat flow of the profile (the scheme with sigma = 0), every step."""
    run = run_ensemble(profile, SigmaFn.zero(), grid, 0, 1, np.arange(grid.n_steps + 1))
    rows = run.rows[0]
    rows.setflags(write=False)
    return rows


@lru_cache(maxsize=8)
def _lattice_kernel(r: float, n_steps: int) -> np.ndarray:
    return _engine.lattice_kernel(r, n_steps)


def localized_windows(grid: Grid, n: int) -> np.ndarray:
    """Cells per side of the window [x - sqrt(n s), x + sqrt(n s)) at each step s."""
    s = grid.dt * np.arange(grid.n_steps + 1)
    w = np.ceil(np.sqrt(n * s) / grid.dx - 1e-9).astype(np.int64) - 1
    return np.maximum(w, 0)


@dataclass
class LocalizedResult:
    value: float
    levels: np.ndarray  # u^(n, j) at the target for j = 0..n
    read_mask: np.ndarray  # (n_steps, cells) noise cells the computation touched


def localized_picard(profile, sigma: SigmaFn, t: float, x: float, n: int,
                     noise_spec: NoiseSpec) -> LocalizedResult:
    """u^(n,n)_t(x): n Picard levels whose stochastic integrals see only a window around x.

    Level j + 1 at (s, y) integrates the lattice kernel against
    sigma(level j) over cells within sqrt(n s) of y, so the value at x reads
    noise within n sqrt(n t) of x and nothing else.
    """
    grid = noise_spec.grid
    if n < 1:
        raise ValueError("n must be >= 1")
    if abs(grid.T - t) > 1e-12 * max(1.0, t):
        raise GridError(f"grid reaches T={grid.T}, not {t}")
    i0 = grid.index_of(x)
    windows = localized_windows(grid, n)
    reach = n * int(windows[-1])
    if i0 - reach < 1 or i0 + reach > grid.cells - 2:
        need = abs(x - grid.center) + (reach + 1) * grid.dx
        raise GridError(f"localized window around x={x} leaves the grid; halfwidth >= {need:.6g} required")
    J = np.ascontiguousarray(heat_flow(profile, grid))
    G = _lattice_kernel(grid.diffusion_ratio, grid.n_steps)
    kind, lam, tx, ty = sigma.engine_args()
    mask = np.zeros((grid.n_steps, grid.cells), dtype=np.bool_)
    levels = np.empty(n + 1)
    val = _engine.localized_one(noise_spec.key, J, i0, n, windows, G, noise_spec.stride,
                                noise_spec.refine, math.sqrt(grid.dt / grid.dx),
                                kind, lam, tx, ty, mask, levels)
    return LocalizedResult(float(val), levels, mask)


def localized_ensemble(profile, sigma: SigmaFn, grid: Grid, points: Sequence[float], n: int,
                       seed: int, n_reps: int, *, parallelism: int = 1):
    """u^(n,n) at each point for every replica; returns (values (n_reps, k), read masks)."""
    masks = []
    for x in points:
        res = localized_picard(profile, sigma, grid.T, x, n, NoiseSpec(seed, 0, grid))
        masks.append(res.read_mask)
    J = np.ascontiguousarray(heat_flow(profile, grid))
    G = _lattice_kernel(grid.diffusion_ratio, grid.n_steps)
    windows = localized_windows(grid, n)
    kind, lam, tx, ty = sigma.engine_args()
    idx = [grid.index_of(x) for x in points]
    keys = _keys(seed, 0, n_reps)
    c = math.sqrt(grid.dt / grid.dx)
    out = np.empty((n_reps, len(points)))

    def work(a, b):
        mask = np.zeros((grid.n_steps, grid.cells), dtype=np.bool_)
        levels = np.empty(n + 1)
        for rep in range(a, b):
            for p, i0 in enumerate(idx):
                out[rep, p] = _engine.localized_one(keys[rep], J, i0, n, windows, G,
                                                    grid.row_stride, 0, c, kind, lam, tx, ty,
                                                    mask, levels)

    _dispatch(work, n_reps, parallelism)
    return out, masks
