"""Gaussian heat-kernel machinery on the line.

All functions broadcast over numpy arrays and are pure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import erfc, ndtr

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
# exp() overflows just above this argument
MAX_EXP_ARG = 709.0

# Gauss-Legendre rule reused by every composite quadrature here.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class KernelDomainError(ValueError):
    """A kernel was evaluated outside its domain (e.g. non-positive time)."""


class KernelOverflowError(OverflowError):
    """An exponential factor exceeds the double-precision range."""


class QuadratureWarning(UserWarning):
    """The quadrature window is too narrow for the requested time."""


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(~np.isfinite(t)):
        raise KernelDomainError(f"time must be positive and finite, got {t}")
    return t


def heat_kernel(t, x):
    """Density exp(-x^2/(2t)) / sqrt(2 pi t) of the semigroup generated by (1/2) d^2/dx^2."""
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return out if out.ndim else float(out)


def heat_kernel_squared(t, x):
    """Pointwise square of the heat kernel, using p_t(x)^2 = p_{t/2}(x) / (2 sqrt(pi t))."""
    t = _check_time(t)
    return heat_kernel(t / 2.0, x) / (2.0 * np.sqrt(np.pi * t))


def normal_cdf(x):
    x = np.asarray(x, dtype=float)
    out = ndtr(x)
    return out if out.ndim else float(out)


def normal_sf(x):
    """Upper tail 1 - Phi(x), computed directly so it keeps relative accuracy for large x."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / SQRT2)
    return out if out.ndim else float(out)


def gaussian_tail_mass(a, t):
    """Mass of p_t outside [-a, a], i.e. 2 (1 - Phi(a / sqrt t))."""
    t = _check_time(t)
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise KernelDomainError("tail radius must be nonnegative")
    out = erfc(a / np.sqrt(2.0 * t))
    return out if out.ndim else float(out)


def _growth_factor(alpha, t):
    arg = alpha**4 * t / 4.0
    if np.any(arg > MAX_EXP_ARG):
        raise KernelOverflowError(
            f"alpha^4 t / 4 = {np.max(arg):.6g} exceeds the exponent range"
        )
    return np.exp(arg) * ndtr(alpha**2 * np.sqrt(t / 2.0))


def kernel_K(alpha, t, x):
    """The renewal kernel K^(alpha)_t(x).

    (alpha^2/2) p_{t/2}(x) [1/sqrt(pi t) + alpha^2 exp(alpha^4 t/4) Phi(alpha^2 sqrt(t/2))]
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise KernelDomainError("alpha must be positive")
    t = _check_time(t)
    bracket = 1.0 / np.sqrt(np.pi * t) + alpha**2 * _growth_factor(alpha, t)
    out = 0.5 * alpha**2 * heat_kernel(t / 2.0, x) * bracket
    return out if np.ndim(out) else float(out)


def kernel_K_mass(alpha, t):
    """Closed-form spatial integral of K^(alpha)_t."""
    alpha = np.asarray(alpha, dtype=float)
    t = _check_time(t)
    out = 0.5 * alpha**2 * (1.0 / np.sqrt(np.pi * t) + alpha**2 * _growth_factor(alpha, t))
    return out if np.ndim(out) else float(out)


def renewal_growth(alpha, t):
    """2 exp(alpha^4 t/4) Phi(alpha^2 sqrt(t/2)); its t-derivative is the mass of K^(alpha)_t."""
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise KernelDomainError("time must be nonnegative")
    out = 2.0 * _growth_factor(alpha, t)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class QuadratureSpec:
    """Discretization of the spatial and temporal integrals.

    ``spatial_step`` is the width of one Gauss-Legendre panel. Panels are
    further shrunk to resolve the Gaussian scale of the integrand.
    """

    spatial_step: float = 0.25
    spatial_halfwidth: float = 12.0
    time_substeps: int = 16
    tail_correction: bool = True

    def __post_init__(self):
        if self.spatial_step <= 0 or self.spatial_halfwidth <= 0:
            raise ValueError("spatial_step and spatial_halfwidth must be positive")
        if self.time_substeps < 8:
            raise ValueError("time_substeps must be at least 8")

    def covers(self, t_max: float) -> bool:
        return self.spatial_halfwidth >= 6.0 * math.sqrt(t_max)


def _panels(lo: float, hi: float, width: float, cuts=()) -> np.ndarray:
    """Panel edges on [lo, hi] of at most ``width``, split at every cut inside."""
    inner = sorted(c for c in cuts if lo < c < hi)
    edges = [lo, *inner, hi]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(math.ceil((b - a) / width - 1e-12)))
        out.append(np.linspace(a, b, k + 1)[:-1])
    out.append(np.array([hi]))
    return np.concatenate(out)


def _gl_nodes(edges: np.ndarray):
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    nodes = a + 0.5 * h * (_GL_X[None, :] + 1.0)
    weights = 0.5 * h * _GL_W[None, :]
    return nodes.ravel(), weights.ravel()


def semigroup_apply(f, t: float, x, q: QuadratureSpec = QuadratureSpec()):
    """(p_t * f)(x) by composite Gauss-Legendre quadrature.

    ``f`` is any vectorized callable; if it exposes ``breakpoints``, panels
    are split there so kinks and jumps do not cost accuracy. Mass beyond the
    window is charged at the edge value of ``f`` when tail correction is on,
    which is exact for constants and an upper bound for monotone profiles.
    """
    t = float(_check_time(t))
    if not q.covers(t):
        warnings.warn(
            f"quadrature halfwidth {q.spatial_halfwidth} < 6 sqrt(t) for t={t}",
            QuadratureWarning,
            stacklevel=2,
        )
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    cuts = tuple(getattr(f, "breakpoints", ()))
    width = min(q.spatial_step, 0.5 * math.sqrt(t))
    H = q.spatial_halfwidth
    tail = normal_sf(H / math.sqrt(t))
    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        edges = _panels(xi - H, xi + H, width, cuts)
        y, w = _gl_nodes(edges)
        val = np.dot(w * heat_kernel(t, xi - y), np.asarray(f(y), dtype=float))
        if q.tail_correction:
            edge_vals = np.asarray(f(np.array([xi - H, xi + H])), dtype=float)
            val += tail * (edge_vals[0] + edge_vals[1])
        out[i] = val
    return out if np.ndim(x) else float(out[0])


@dataclass(frozen=True)
class SpaceTimeFn:
    """A space-time function (t, x) -> value, vectorized in x.

    ``scale(t)`` gives the spatial length on which the function varies at
    time t; ``local`` declares that the function is negligible beyond 12
    scales from the origin (kernel-like), which lets quadrature shrink the
    window instead of refining it everywhere.
    """

    fn: Callable[[float, np.ndarray], np.ndarray]
    scale: Optional[Callable[[float], float]] = None
    local: bool = False

    def __call__(self, t, x):
        return self.fn(t, x)


def kernel_fn(alpha: float) -> SpaceTimeFn:
    """K^(alpha) packaged for space-time convolution."""
    return SpaceTimeFn(
        lambda s, y: kernel_K(alpha, s, y), scale=lambda s: math.sqrt(s / 2.0), local=True
    )


def _graded_edges(lo: float, hi: float, levels: int = 8, interior: int = 4) -> np.ndarray:
    # geometric refinement (ratio 2) toward both ends of [lo, hi]
    L = hi - lo
    quarter = 0.25 * L
    left = [lo] + [lo + quarter / 2.0**k for k in range(levels, 0, -1)]
    mid = list(np.linspace(lo + quarter, hi - quarter, interior + 1))
    right = [hi - quarter / 2.0**k for k in range(1, levels + 1)] + [hi]
    return np.array(left + mid + right)


def _time_rule(t: float, q: QuadratureSpec):
    """Nodes/weights on (0, t) after s = t sin^2(theta).

    The substitution absorbs 1/sqrt(s) and 1/sqrt(t - s) endpoint singularities.
    """
    edges = _graded_edges(0.0, 0.5 * math.pi)
    gx, gw = np.polynomial.legendre.leggauss(q.time_substeps)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    theta = (a + 0.5 * h * (gx[None, :] + 1.0)).ravel()
    wt = (0.5 * h * gw[None, :]).ravel()
    s = t * np.sin(theta) ** 2
    ds = t * np.sin(2.0 * theta) * wt
    keep = (s > 0) & (s < t)
    return s[keep], ds[keep]


def space_time_convolve(f, g, t: float, x: float, q: QuadratureSpec = QuadratureSpec()) -> float:
    """(f ⊙ g)_t(x) = int_0^t ds int dy f_{t-s}(x - y) g_s(y)."""
    t = float(_check_time(t))
    f = f if isinstance(f, SpaceTimeFn) else SpaceTimeFn(f)
    g = g if isinstance(g, SpaceTimeFn) else SpaceTimeFn(g)
    s_nodes, s_w = _time_rule(t, q)
    total = 0.0
    H = q.spatial_halfwidth
    for s, ws in zip(s_nodes, s_w):
        lo, hi = x - H, x + H
        width = q.spatial_step
        if g.scale is not None:
            sg = g.scale(s)
            width = min(width, 0.5 * sg)
            if g.local:
                lo, hi = max(lo, -12.0 * sg), min(hi, 12.0 * sg)
        if f.scale is not None:
            sf = f.scale(t - s)
            width = min(width, 0.5 * sf)
            if f.local:
                lo, hi = max(lo, x - 12.0 * sf), min(hi, x + 12.0 * sf)
        if hi <= lo:
            continue
        width = max(width, (hi - lo) / 4096.0)
        y, wy = _gl_nodes(_panels(lo, hi, width))
        vals = np.asarray(f(t - s, x - y), dtype=float) * np.asarray(g(s, y), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise FloatingPointError(f"non-finite integrand at s={s!r}, y={y[bad]!r}")
        total += ws * float(np.dot(wy, vals))
    return total


def decay_bound(h_sup: float, r: float, t: float) -> float:
    """2 ||h|| exp(-r^2/(8t)): bound on |p_t * h| within r/2 of an interval where h vanishes."""
    return 2.0 * h_sup * math.exp(-(r * r) / (8.0 * t))
