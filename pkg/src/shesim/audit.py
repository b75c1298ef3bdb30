"""Self-checks of the kernel module, run by the ``kernel-audit`` experiment.

Each check compares a kernel-module quantity with a second, independent
route (adaptive scipy quadrature, finite differences, a closed form) and
returns a record {name, pass, detail}.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .kernel import (heat_kernel, kernel_K_mass, decay_bound, renewal_growth,
                     semigroup_apply)


class RandomOutsideFn:
    """Bounded h vanishing on [a - r, a + r]: random trigonometric sum outside."""

    def __init__(self, rng: np.random.Generator, a: float, r: float):
        self.a, self.r = a, r
        self.coef = rng.normal(size=4)
        self.freq = rng.uniform(0.1, 3.0, size=4)
        self.phase = rng.uniform(0, 2 * np.pi, size=4)
        self.breakpoints = (a - r, a + r)
        self.sup_bound = float(np.sum(np.abs(self.coef)))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        v = sum(c * np.cos(f * y + p) for c, f, p in zip(self.coef, self.freq, self.phase))
        return np.where(np.abs(y - self.a) <= self.r, 0.0, v)


class _Indicator:
    breakpoints = (-1.0, 1.0)

    def __call__(self, y):
        return (np.abs(np.asarray(y, dtype=float)) <= 1.0).astype(float)


def _record(name, ok, detail):
    return {"name": name, "pass": bool(ok), "detail": detail}


def check_normalization(times=(0.01, 0.1, 1.0, 10.0), tol: float = 1e-9):
    errs = []
    for t in times:
        s = math.sqrt(t)
        val = sum(quad(lambda y: heat_kernel(t, y), lo * s, hi * s, epsabs=1e-14, epsrel=1e-14)[0]
                  for lo, hi in ((-np.inf, -1), (-1, 1), (1, np.inf)))
        errs.append(abs(val - 1.0))
    return _record("heat kernel normalization", max(errs) <= tol,
                   f"max |int p_t - 1| = {max(errs):.3e} over t in {list(times)}")


def check_semigroup(s: float = 0.1, t: float = 0.2, xs=(-1.5, -0.3, 0.0, 0.7, 2.0),
                    tol: float = 1e-6):
    f = _Indicator()
    inner = lambda y: semigroup_apply(f, t, y)
    lhs = semigroup_apply(inner, s, np.asarray(xs))
    rhs = semigroup_apply(f, s + t, np.asarray(xs))
    err = float(np.max(np.abs(lhs - rhs)))
    return _record("semigroup p_s * p_t = p_{s+t}", err <= tol,
                   f"sup error {err:.3e} for the indicator of [-1, 1], s={s}, t={t}")


def check_decay_bound(n_random: int = 50, seed: int = 0, rs=(0.5, 1.0, 2.0, 4.0),
                      ts=(0.05, 0.5)):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_random):
        a = rng.uniform(-5, 5)
        for r in rs:
            h = RandomOutsideFn(rng, a, r)
            xs = a + np.linspace(-r / 2, r / 2, 9)
            for t in ts:
                vals = np.abs(semigroup_apply(h, t, xs))
                bound = decay_bound(h.sup_bound, r, t)
                worst = max(worst, float(np.max(vals)) / bound)
    return _record("decay bound |p_t * h| <= 2 |h| exp(-r^2/8t)", worst <= 1.0,
                   f"largest ratio value/bound = {worst:.3e} over {n_random} random h")


def check_growth_derivative(alpha: float = 1.0, t: float = 1.0, h: float = 1e-4,
                            tol: float = 1e-8):
    # fourth-order central difference of the closed form
    d = (-renewal_growth(alpha, t + 2 * h) + 8 * renewal_growth(alpha, t + h)
         - 8 * renewal_growth(alpha, t - h) + renewal_growth(alpha, t - 2 * h)) / (12 * h)
    m = kernel_K_mass(alpha, t)
    return _record("d/dt growth = int K", abs(d - m) <= tol,
                   f"finite difference {d:.15g} vs mass {m:.15g}")


def kernel_audit(n_random: int = 50, seed: int = 0) -> list:
    return [check_normalization(), check_semigroup(), check_decay_bound(n_random, seed),
            check_growth_derivative()]
