"""Monte-Carlo experiments on ensembles of coupled or independent replicas.

Every statistic here is a deterministic function of its inputs and seed:
replicas are indexed, stored by index and reduced with math.fsum, so the
order in which worker threads finish never reaches the output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from ._rng import derive_seed
from .bounds import pam_second_moment, suscept_bound
from .grid import Grid
from .kernel import semigroup_apply
from .profiles import INFINITE_INDEX, make_bump, make_constant, make_lambda
from .solver import (SigmaFn, heat_flow, localized_ensemble, localized_windows, picard_ensemble,
                     run_ensemble, run_pair_ensemble)

Z95 = 1.96
MIN_TAIL_REPS = 100
MIN_EFFECTIVE_SAMPLES = 30


class EstimatorError(RuntimeError):
    pass


class AllAbortedError(EstimatorError):
    def __init__(self, n_aborted: int):
        super().__init__(f"all {n_aborted} replicas aborted with non-finite values")
        self.n_aborted = n_aborted


class ReliabilityError(EstimatorError):
    """Too few effective samples for a trustworthy moment estimate."""


class SlopeUndefinedError(EstimatorError):
    pass


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------- statistics

def _mean(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x) / x.size


def _var(x, mean: Optional[float] = None) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        return 0.0
    m = _mean(x) if mean is None else mean
    return math.fsum((x - m) ** 2) / (x.size - 1)


def wilson_interval(k: int, n: int, confidence: float = 0.95):
    """Wilson score interval for k successes out of n."""
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n > 0")
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class EnsembleStat:
    n: int
    mean: float
    variance: float
    ci_halfwidth: float
    wilson: Optional[tuple] = None
    n_aborted: int = 0

    @classmethod
    def from_samples(cls, samples, n_aborted: int = 0, indicator: bool = False) -> EnsembleStat:
        x = np.asarray(samples, dtype=float).ravel()
        if x.size == 0:
            raise AllAbortedError(n_aborted)
        m = _mean(x)
        v = max(_var(x, m), 0.0)
        w = None
        if indicator:
            w = wilson_interval(int(round(math.fsum(x))), x.size)
        return cls(int(x.size), m, v, Z95 * math.sqrt(v / x.size), w, n_aborted)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wilson"] = list(self.wilson) if self.wilson else None
        return d


def _ols(a, b):
    """Slope and intercept of b on a."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0 = a - _mean(a)
    sxx = math.fsum(a0 * a0)
    slope = math.fsum(a0 * (b - _mean(b))) / sxx
    return slope, _mean(b) - slope * _mean(a), a0 / sxx


def _resolve_parallelism(p) -> int:
    if p in (None, "auto"):
        import os
        return os.cpu_count() or 1
    return max(1, int(p))


# ---------------------------------------------------------------- grids

def observation_grid(t: float, x: float, dx: float = 0.05, halfwidth: Optional[float] = None) -> Grid:
    """Grid centred on the observation point, wide enough that the pinned
    edges are ~8 diffusion lengths away."""
    h = halfwidth if halfwidth is not None else max(4.0, 8.0 * math.sqrt(t))
    return Grid.for_time(t, dx, h, center=x)


def _values_at(profile, sigma, grid: Grid, seed: int, n_reps: int, x: float, *,
               clamp: bool = False, parallelism=1):
    run = run_ensemble(profile, sigma, grid, seed, n_reps, clamp=clamp,
                       parallelism=_resolve_parallelism(parallelism))
    vals = run.rows[:, -1, grid.index_of(x)]
    ok = ~run.aborted
    n_ab = int(np.count_nonzero(~ok))
    if not ok.any():
        raise AllAbortedError(n_ab)
    return vals[ok], n_ab, run


# ---------------------------------------------------------------- tails

def mc_tail(profile, sigma: SigmaFn, t: float, x: float, epsilon: float, n_reps: int, seed: int,
            *, dx: float = 0.05, halfwidth: Optional[float] = None, grid: Optional[Grid] = None,
            clamp: bool = False, parallelism=1) -> EnsembleStat:
    """P{u_t(x) > epsilon} with a Wilson interval."""
    if n_reps < MIN_TAIL_REPS:
        raise ValueError(f"n_reps must be >= {MIN_TAIL_REPS}")
    g = grid if grid is not None else observation_grid(t, x, dx, halfwidth)
    g.step_of(t)
    vals, n_ab, _ = _values_at(profile, sigma, g, seed, n_reps, x, clamp=clamp,
                               parallelism=parallelism)
    return EnsembleStat.from_samples(vals > epsilon, n_ab, indicator=True)


@dataclass
class TailCurve:
    epsilon: float
    t: float
    points: list  # (x, p_hat, wilson_low, wilson_high), sorted by x
    slope: float
    slope_stderr: float
    n_reps: int = 0

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "t": self.t, "n_reps": self.n_reps,
                "points": [list(p) for p in self.points],
                "slope": self.slope, "slope_stderr": self.slope_stderr}


def fit_tail_slope(xs, p_hats, n: int):
    """Least-squares slope of log p_hat on log x over points with p_hat > 0.

    The standard error propagates the binomial delta-method variance
    (1 - p) / (n p) of each log p_hat through the least-squares weights;
    the points come from independent ensembles.
    """
    xs = np.asarray(xs, dtype=float)
    p = np.asarray(p_hats, dtype=float)
    keep = p > 0
    if np.count_nonzero(keep) < 3:
        raise SlopeUndefinedError(
            f"only {int(np.count_nonzero(keep))} tail points have p_hat > 0; need 3")
    a = np.log(xs[keep])
    b = np.log(p[keep])
    slope, _, w = _ols(a, b)
    var_b = (1.0 - p[keep]) / (n * p[keep])
    return slope, math.sqrt(math.fsum(w * w * var_b))


def _check_log_spaced(x_list):
    xs = np.asarray(x_list, dtype=float)
    if xs.size < 4:
        raise ValueError("tail_exponent needs at least 4 x values")
    if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
        raise ValueError("x values must be positive and increasing")
    ratios = np.diff(np.log(xs))
    if np.max(np.abs(ratios - ratios.mean())) > 1e-6 * abs(ratios.mean()):
        raise ValueError("x values must be log-spaced")


def tail_exponent(profile, sigma: SigmaFn, t: float, epsilon: float, x_list: Sequence[float],
                  n_reps: int, seed: int, *, dx: float = 0.05, halfwidth: Optional[float] = None,
                  parallelism=1) -> TailCurve:
    """Tail probabilities at log-spaced x and the slope of log p against log x.

    Each x gets its own grid centred on it and its own derived seed, so the
    points are independent.
    """
    _check_log_spaced(x_list)
    pts = []
    for i, x in enumerate(sorted(float(v) for v in x_list)):
        st = mc_tail(profile, sigma, t, x, epsilon, n_reps, derive_seed(seed, f"tail/{i}"),
                     dx=dx, halfwidth=halfwidth, parallelism=parallelism)
        pts.append((x, st.mean, st.wilson[0], st.wilson[1]))
    slope, se = fit_tail_slope([p[0] for p in pts], [p[1] for p in pts], n_reps)
    return TailCurve(epsilon, t, pts, slope, se, n_reps)


# ---------------------------------------------------------------- moments

def _moment_stat(vals, k: int, n_ab: int) -> EnsembleStat:
    y = np.asarray(vals, dtype=float) ** k
    if not np.all(np.isfinite(y)):
        raise ReliabilityError(f"u^{k} overflowed in {int(np.count_nonzero(~np.isfinite(y)))} replicas")
    ay = np.abs(y)
    s2 = math.fsum(ay * ay)
    ess = math.fsum(ay) ** 2 / s2 if s2 > 0 else float(y.size)
    if ess < MIN_EFFECTIVE_SAMPLES:
        raise ReliabilityError(
            f"only {ess:.1f} effective samples for k={k}; the estimate is dominated by a few replicas")
    return EnsembleStat.from_samples(y, n_ab)


def mc_moment(profile, sigma: SigmaFn, t: float, x: float, k: int, n_reps: int, seed: int, *,
              dx: float = 0.05, halfwidth: Optional[float] = None, grid: Optional[Grid] = None,
              parallelism=1) -> EnsembleStat:
    """E u_t(x)^k for k in 1..4."""
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be 1, 2, 3 or 4")
    g = grid if grid is not None else observation_grid(t, x, dx, halfwidth)
    g.step_of(t)
    vals, n_ab, _ = _values_at(profile, sigma, g, seed, n_reps, x, parallelism=parallelism)
    return _moment_stat(vals, k, n_ab)


def moment_growth(profile, sigma: SigmaFn, t_list: Sequence[float], x: float, ks: Sequence[int],
                  n_reps: int, seed: int, *, dx: float = 0.05, halfwidth: Optional[float] = None,
                  parallelism=1) -> dict:
    """E u_t(x)^k for every (t, k) from one ensemble recorded at all t."""
    h = halfwidth if halfwidth is not None else max(4.0, 8.0 * math.sqrt(max(t_list)))
    g = Grid.for_times(t_list, dx, h, center=x)
    steps = [g.step_of(t) for t in t_list]
    run = run_ensemble(profile, sigma, g, seed, n_reps, steps,
                       parallelism=_resolve_parallelism(parallelism))
    ok = ~run.aborted
    i = g.index_of(x)
    out = {}
    for t, s in zip(t_list, steps):
        row = int(np.searchsorted(run.record_steps, s))
        vals = run.rows[ok, row, i]
        out[t] = {k: _moment_stat(vals, k, int(np.count_nonzero(~ok))) for k in ks}
    return out


def mean_identity(profile, sigma: SigmaFn, t: float, x_list: Sequence[float], n_reps: int,
                  seed: int, *, dx: float = 0.05, halfwidth: float = 4.0, parallelism=1) -> list:
    """MC mean of u_t(x) against the heat flow (p_t * u0)(x), in standard errors."""
    lo, hi = min(x_list), max(x_list)
    g = Grid.for_time(t, dx, halfwidth + (hi - lo) / 2, center=(lo + hi) / 2)
    run = run_ensemble(profile, sigma, g, seed, n_reps,
                       parallelism=_resolve_parallelism(parallelism))
    ok = ~run.aborted
    exact = semigroup_apply(profile, t, np.asarray(x_list, dtype=float))
    rows = []
    for x, e in zip(x_list, np.atleast_1d(exact)):
        st = EnsembleStat.from_samples(run.rows[ok, -1, g.index_of(x)], int(np.count_nonzero(~ok)))
        z = (st.mean - e) / st.stderr if st.stderr > 0 else 0.0
        rows.append({"x": float(x), "mc_mean": st.mean, "stderr": st.stderr,
                     "exact": float(e), "z": z})
    return rows


def scheme_second_moment(lam: float, T: float, dx: float, dt: Optional[float] = None) -> float:
    """E u_T(x)^2 of the explicit scheme itself for sigma = lam u and u0 = 1.

    On the unbounded lattice the covariance C_n(k) = E u_n(j) u_n(j + k)
    obeys the closed recursion C_{n+1} = (w * w~) * C_n + lam^2 (dt/dx) C_n(0) 1{k=0},
    w = (r, 1 - 2r, r), so the scheme's second moment needs no sampling.
    """
    if dt is None:
        n = int(math.ceil(T / (0.5 * dx * dx) - 1e-9))
        dt = T / n
    n = int(round(T / dt))
    r = dt / (2 * dx * dx)
    w = np.array([r, 1 - 2 * r, r])
    ww = np.convolve(w, w)
    kmax = 2 * n + 6
    C = np.ones(2 * kmax + 1)
    c2 = lam * lam * dt / dx
    for s in range(n):
        # entries farther than 2 (n - s) from the centre can no longer reach it
        reach = 2 * (n - s) + 2
        lo, hi = kmax - reach, kmax + reach + 1
        inner = np.convolve(C[lo - 2:hi + 2], ww, mode="valid")
        d = C[kmax]
        C[lo:hi] = inner
        C[kmax] += c2 * d
    return float(C[kmax])


@dataclass
class SecondMomentStudy:
    T: float
    lam: float
    exact: float
    rows: list  # one dict per dx, finest last
    differences: list  # coupled differences between consecutive dx

    def to_dict(self) -> dict:
        return asdict(self)


def second_moment_study(lam: float, T: float, dx_list: Sequence[float], n_reps: int, seed: int, *,
                        halfwidth: float = 3.0, average_halfwidth: float = 1.0,
                        parallelism=1) -> SecondMomentStudy:
    """Second moment of u_T for u0 = 1 and sigma = lam u at several dx, on one Brownian sheet.

    ``dx_list`` must be a coarsest dx halved repeatedly. Every resolution is
    driven by the finest grid's noise aggregated onto its cells, so the
    differences between resolutions carry little sampling noise. Besides the
    point estimate at x = 0, the flat data make u_T stationary in x, so the
    mean of u_T(x)^2 over |x| <= average_halfwidth estimates the same number;
    the spatial mean of u_T, whose expectation is exactly 1, serves as a
    control variate.
    """
    dxs = sorted(float(d) for d in dx_list)[::-1]
    levels = [round(math.log2(dxs[0] / d)) for d in dxs]
    if any(abs(dxs[0] / 2**k - d) > 1e-12 for k, d in zip(levels, dxs)):
        raise ValueError("dx values must be a coarsest dx divided by powers of 2")
    base = Grid.for_time(T, dxs[0], halfwidth)
    kmax = levels[-1]
    profile = make_constant(1.0)
    sigma = SigmaFn.linear(lam)
    exact = pam_second_moment(lam, T)
    par = _resolve_parallelism(parallelism)
    rows, cv_samples = [], []
    for k, dx in zip(levels, dxs):
        g = base.refine(k)
        run = run_ensemble(profile, sigma, g, seed, n_reps, refine=kmax - k, parallelism=par)
        if run.aborted.any():
            raise AllAbortedError(int(np.count_nonzero(run.aborted)))
        u = run.rows[:, -1, :]
        point = EnsembleStat.from_samples(u[:, g.index_of(0.0)] ** 2)
        win = np.abs(g.x) <= average_halfwidth + 1e-12
        y = np.array([_mean(row) for row in u[:, win] ** 2])
        m1 = np.array([_mean(row) for row in u[:, win]])
        beta = (math.fsum((y - _mean(y)) * (m1 - _mean(m1))) / math.fsum((m1 - _mean(m1)) ** 2))
        ycv = y - beta * (m1 - 1.0)
        cv = EnsembleStat.from_samples(ycv)
        cv_samples.append(ycv)
        scheme = scheme_second_moment(lam, T, g.dx, g.dt)
        rows.append({
            "dx": g.dx, "dt": g.dt, "point": point.to_dict(), "estimate": cv.to_dict(),
            "rel_error_point": abs(point.mean - exact) / exact,
            "rel_error_estimate": abs(cv.mean - exact) / exact,
            "scheme_moment": scheme, "scheme_rel_error": abs(scheme - exact) / exact,
        })
    diffs = []
    for i in range(1, len(rows)):
        d = EnsembleStat.from_samples(cv_samples[i - 1] - cv_samples[i])
        diffs.append({"coarse_dx": rows[i - 1]["dx"], "fine_dx": rows[i]["dx"],
                      "mc_difference": d.to_dict(),
                      "scheme_difference": rows[i - 1]["scheme_moment"] - rows[i]["scheme_moment"]})
    return SecondMomentStudy(T, lam, exact, rows, diffs)


# ---------------------------------------------------------------- suprema

@dataclass
class SupSeries:
    t_values: list
    M: list
    window: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def _window_mask(grid: Grid, window) -> np.ndarray:
    lo, hi = window
    if lo > hi or not grid.contains(lo, hi):
        raise ValueError(f"window {window} not inside grid [{grid.x[0]}, {grid.x[-1]}]")
    return (grid.x >= lo - 1e-9) & (grid.x <= hi + 1e-9)


def window_max(rows: np.ndarray, grid: Grid, window) -> np.ndarray:
    """Maximum over the window's cells along the last axis."""
    return np.asarray(rows)[..., _window_mask(grid, window)].max(axis=-1)


def sup_field(trajectory, window=None) -> SupSeries:
    """Per-time-step maximum M(t) of a trajectory over a spatial window."""
    g = trajectory.grid
    window = tuple(window) if window is not None else (float(g.x[0]), float(g.x[-1]))
    M = window_max(trajectory.values, g, window)
    return SupSeries(g.times[: M.size].tolist(), M.tolist(), window)


def first_exceedance(trajectory, level: float, window=None) -> Optional[float]:
    """First time the window maximum reaches ``level``; None when it never does."""
    s = sup_field(trajectory, window)
    hits = np.nonzero(np.asarray(s.M) >= level)[0]
    return float(s.t_values[hits[0]]) if hits.size else None


# ---------------------------------------------------------------- susceptibility

@dataclass
class SusceptibilityResult:
    a: float
    r: float
    t_values: list
    estimates: list
    ci_halfwidths: list
    bounds: list
    b_norm: float
    lip: float
    n_reps: int
    slope: Optional[float]
    slope_threshold: float

    @property
    def within_bound(self) -> list:
        return [e <= b + 2 * c for e, b, c in zip(self.estimates, self.bounds, self.ci_halfwidths)]

    @property
    def slope_ok(self) -> bool:
        return self.slope is not None and self.slope <= self.slope_threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(within_bound=self.within_bound, slope_ok=self.slope_ok)
        return d


def sup_difference(u0, v0, lo: float, hi: float, n: int = 200_001) -> float:
    xs = np.linspace(lo, hi, n)
    cuts = set(getattr(u0, "breakpoints", ())) | set(getattr(v0, "breakpoints", ()))
    xs = np.concatenate([xs, [c for c in cuts if lo <= c <= hi]])
    return float(np.max(np.abs(np.asarray(v0(xs)) - np.asarray(u0(xs)))))


def susceptibility_experiment(u0, v0, sigma: SigmaFn, a: float, r: float, t_list: Sequence[float],
                              n_reps: int, seed: int, *, dx: float = 0.025,
                              halfwidth: Optional[float] = None, b_norm: Optional[float] = None,
                              parallelism=1) -> SusceptibilityResult:
    """sup_{|x-a|<=r/4} E|u_t(x) - v_t(x)|^2 under shared noise, next to the analytic bound.

    The difference is evolved directly, so values far below the size of u
    keep their relative accuracy. ``b_norm`` defaults to a sampled
    sup |u0 - v0| over a range much wider than the grid.
    """
    if sup_difference(u0, v0, a - r, a + r, 8001) > 0:
        raise PreconditionError(f"u0 and v0 differ on [{a - r}, {a + r}]")
    if b_norm is None:
        reach = max(50.0, 20.0 * r)
        b_norm = sup_difference(u0, v0, a - reach, a + reach)
    h = halfwidth if halfwidth is not None else 1.5 * r
    g = Grid.for_times(t_list, dx, h, center=a)
    steps = [g.step_of(t) for t in t_list]
    d_rows, abort = run_pair_ensemble(u0, v0, sigma, g, seed, n_reps, steps,
                                      parallelism=_resolve_parallelism(parallelism))
    ok = abort < 0
    if not ok.any():
        raise AllAbortedError(n_reps)
    win = np.abs(g.x - a) <= r / 4 + 1e-9
    ests, cis, bnds = [], [], []
    for t, s in zip(t_list, steps):
        row = int(np.searchsorted(np.unique(steps), s))
        sq = d_rows[ok, row][:, win] ** 2
        best = None
        for j in range(sq.shape[1]):
            st = EnsembleStat.from_samples(sq[:, j])
            if best is None or st.mean > best.mean:
                best = st
        ests.append(best.mean)
        cis.append(best.ci_halfwidth)
        bnds.append(suscept_bound(sigma.lip, r, t, b_norm) if b_norm > 0 else 0.0)
    slope = None
    if len(t_list) >= 2 and all(e > 0 for e in ests):
        slope = _ols(1.0 / np.asarray(t_list, dtype=float), np.log(ests))[0]
    return SusceptibilityResult(a, r, list(map(float, t_list)), ests, cis, bnds, float(b_norm),
                                sigma.lip, n_reps, slope, -r * r / 32.0)


# ---------------------------------------------------------------- comparison

def comparison_experiment(u0, v0, sigma: SigmaFn, t: float, dx_list: Sequence[float], n_reps: int,
                          seed: int, *, halfwidth: float = 4.0, window=None,
                          parallelism=1) -> list:
    """Mean positive part of u - v for ordered data u0 <= v0 under shared noise.

    For each dx: the largest over window cells of E max(0, u_t(x) - v_t(x)),
    the fraction of replicas with any violation in the window, and sup v0.
    """
    lo, hi = (-halfwidth / 2, halfwidth / 2) if window is None else window
    xs = np.linspace(-halfwidth, halfwidth, 8001)
    if np.any(np.asarray(u0(xs)) > np.asarray(v0(xs))):
        raise PreconditionError("comparison needs u0 <= v0")
    sup_v0 = float(np.max(np.abs(v0(xs))))
    out = []
    for dx in dx_list:
        g = Grid.for_time(t, dx, halfwidth)
        d_rows, abort = run_pair_ensemble(u0, v0, sigma, g, seed, n_reps,
                                          parallelism=_resolve_parallelism(parallelism))
        ok = abort < 0
        viol = np.maximum(0.0, -d_rows[ok, -1][:, _window_mask(g, (lo, hi))])
        means = [_mean(viol[:, j]) for j in range(viol.shape[1])]
        out.append({"dx": dx, "violation": max(means), "sup_v0": sup_v0,
                    "replicas_with_violation": int(np.count_nonzero(viol.max(axis=1) > 0)),
                    "n_reps": int(np.count_nonzero(ok))})
    return out


# ---------------------------------------------------------------- Picard

def picard_contraction(profile, sigma: SigmaFn, t: float, x: float, n_iters: int, n_reps: int,
                       seed: int, *, dx: float = 0.05, halfwidth: Optional[float] = None,
                       parallelism=1) -> dict:
    """D_n = E (u^(n)_t(x) - u^(n-1)_t(x))^2 for n = 1..n_iters and the ratios D_{n+1}/D_n."""
    h = halfwidth if halfwidth is not None else max(3.0, 8.0 * math.sqrt(t))
    g = Grid.for_time(t, dx, h, center=x)
    it = picard_ensemble(profile, sigma, g, seed, n_reps, n_iters,
                         parallelism=_resolve_parallelism(parallelism))
    vals = it[:, :, g.index_of(x)]
    D = [EnsembleStat.from_samples((vals[:, n] - vals[:, n - 1]) ** 2) for n in range(1, n_iters + 1)]
    means = [d.mean for d in D]
    ratios = [means[i + 1] / means[i] if means[i] > 0 else float("nan")
              for i in range(len(means) - 1)]
    return {"t": t, "x": x, "D": [d.to_dict() for d in D], "ratios": ratios}


# ---------------------------------------------------------------- independence

@dataclass
class IndependenceResult:
    points: list
    correlation: list
    tolerance: float
    masks_disjoint: bool
    separation_required: float
    n_reps: int

    @property
    def max_offdiagonal(self) -> float:
        c = np.asarray(self.correlation)
        off = c[~np.eye(c.shape[0], dtype=bool)]
        return float(np.max(np.abs(off))) if off.size else 0.0

    @property
    def passed(self) -> bool:
        return self.masks_disjoint and self.max_offdiagonal <= self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(max_offdiagonal=self.max_offdiagonal, passed=self.passed)
        return d


def independence_threshold(n: int, t: float) -> float:
    return 2.0 * n**1.5 * math.sqrt(t)


def separation_violations(points: Sequence[float], n: int, t: float) -> list:
    need = independence_threshold(n, t)
    bad = []
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if abs(points[i] - points[j]) < need * (1 - 1e-12):
                bad.append(f"points {points[i]} and {points[j]} are "
                           f"{abs(points[i] - points[j]):.6g} apart; "
                           f"need 2 n^1.5 sqrt(t) = {need:.6g}")
    return bad


def independence_experiment(profile, sigma: SigmaFn, t: float, n: int, points: Sequence[float],
                            n_reps: int, seed: int, *, dx: float = 0.1,
                            check_separation: bool = True, parallelism=1) -> IndependenceResult:
    """Correlations of the localized Picard values u^(n,n)_t at several points."""
    points = [float(p) for p in points]
    if check_separation:
        bad = separation_violations(points, n, t)
        if bad:
            raise PreconditionError("; ".join(bad))
    probe = Grid.for_time(t, dx, 1.0)
    reach = (n * int(localized_windows(probe, n)[-1]) + 2) * dx
    lo, hi = min(points), max(points)
    g = Grid.for_time(t, dx, (hi - lo) / 2 + reach + dx, center=(lo + hi) / 2)
    vals, masks = localized_ensemble(profile, sigma, g, points, n, seed, n_reps,
                                     parallelism=_resolve_parallelism(parallelism))
    k = len(points)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            a, b = vals[:, i], vals[:, j]
            ca, cb = a - _mean(a), b - _mean(b)
            den = math.sqrt(math.fsum(ca * ca) * math.fsum(cb * cb))
            corr[i, j] = corr[j, i] = math.fsum(ca * cb) / den if den > 0 else 1.0
    disjoint = all(not np.any(masks[i] & masks[j]) for i in range(k) for j in range(i + 1, k)
                   if points[i] != points[j])
    return IndependenceResult(points, corr.tolist(), 4.0 / math.sqrt(n_reps), disjoint,
                              independence_threshold(n, t), n_reps)


# ---------------------------------------------------------------- trichotomy

@dataclass
class TrichotomyMap:
    t_values: list
    windows: list
    entries: list  # dict(label, lambda, t, L, mean_max, ci, slope)
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _slope_vs_log23(Ls, means) -> float:
    a = np.log(np.asarray(Ls, dtype=float)) ** (2.0 / 3.0)
    return _ols(a, np.log(np.asarray(means, dtype=float)))[0]


def trichotomy_scan(lambda_list: Sequence[float], sigma: SigmaFn, t_list: Sequence[float],
                    window_schedule: Sequence[float], n_reps: int, seed: int, *, dx: float = 0.1,
                    bump_halfwidth: Optional[float] = None, flat_level: float = 1.0,
                    margin: Optional[float] = None, parallelism=1) -> TrichotomyMap:
    """E[max of u_t over [L, 2L]] against (log L)^(2/3) for the profile families.

    Rows: a bump (index infinity proxy), a constant (index 0) and the
    lambda family for each entry of ``lambda_list``. All profiles share the
    noise, which sharpens the comparisons between them. The default bump
    halfwidth 1.5 L_max keeps every window maximum positive while forcing
    it down as L grows.
    """
    Ls = sorted(float(L) for L in window_schedule)
    ts = sorted(float(t) for t in t_list)
    m = margin if margin is not None else max(5.0, 8.0 * math.sqrt(ts[-1]))
    lo, hi = Ls[0] - m, 2 * Ls[-1] + m
    g = Grid.for_times(ts, dx, (hi - lo) / 2, center=(lo + hi) / 2)
    steps = [g.step_of(t) for t in ts]
    bump_h = bump_halfwidth if bump_halfwidth is not None else 1.5 * Ls[-1]
    families = [("bump", INFINITE_INDEX, make_bump(1.0, bump_h)),
                ("flat", 0.0, make_constant(flat_level))]
    families += [(f"lambda={lam:g}", float(lam), make_lambda(lam)) for lam in sorted(lambda_list)]
    par = _resolve_parallelism(parallelism)
    entries = []
    for label, lam, prof in families:
        run = run_ensemble(prof, sigma, g, seed, n_reps, steps, parallelism=par)
        ok = ~run.aborted
        for t, s in zip(ts, steps):
            row = int(np.searchsorted(run.record_steps, s))
            means, cis = [], []
            for L in Ls:
                st = EnsembleStat.from_samples(window_max(run.rows[ok, row], g, (L, 2 * L)))
                means.append(st.mean)
                cis.append(st.ci_halfwidth)
            slope = _slope_vs_log23(Ls, means) if all(v > 0 for v in means) else None
            entries.append({"label": label,
                            "lambda": "infinite" if lam is INFINITE_INDEX else lam,
                            "t": t, "L": Ls, "mean_max": means, "ci": cis, "slope": slope})
    return TrichotomyMap(ts, Ls, entries, _trichotomy_checks(entries, ts))


def _trichotomy_checks(entries, ts) -> dict:
    by = {(e["label"], e["t"]): e for e in entries}
    checks = {}
    for t in ts:
        b = by[("bump", t)]["mean_max"]
        f = by[("flat", t)]["mean_max"]
        checks[f"bump_decreasing_in_L@t={t:g}"] = all(x > y for x, y in zip(b, b[1:]))
        checks[f"flat_increasing_in_L@t={t:g}"] = all(x < y for x, y in zip(f, f[1:]))
        fam = sorted([e for e in entries if e["t"] == t and e["label"] != "bump"],
                     key=lambda e: e["lambda"])
        sl = [e["slope"] for e in fam]
        checks[f"slope_decreasing_in_lambda@t={t:g}"] = (
            None not in sl and all(x > y for x, y in zip(sl, sl[1:])))
    for label in sorted({e["label"] for e in entries if e["label"].startswith("lambda=")}):
        sl = [by[(label, t)]["slope"] for t in ts]
        checks[f"slope_increasing_in_t@{label}"] = (
            None not in sl and all(x < y for x, y in zip(sl, sl[1:])))
    return checks
