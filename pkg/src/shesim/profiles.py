"""Admissible initial data: bounded, nonnegative, even, nonincreasing in |x|.

The decay index of a profile is the limit of |log u0(x)| / (log|x|)^(2/3).
Compactly supported profiles have index infinity, which is carried as the
``INFINITE_INDEX`` marker and never as a float.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np

E = math.e


class _Infinite(Enum):
    INFINITE = "infinite"

    def __repr__(self):
        return "INFINITE_INDEX"


INFINITE_INDEX = _Infinite.INFINITE
DecayIndex = Union[float, _Infinite]


class ProfileError(ValueError):
    pass


def lambda_profile(lam: float, x):
    """exp(-lam (log max(|x|, e))^(2/3)): flat on [-e, e], decay index exactly lam."""
    if lam < 0:
        raise ProfileError("decay index must be nonnegative")
    ax = np.maximum(np.abs(np.asarray(x, dtype=float)), E)
    out = np.exp(-lam * np.log(ax) ** (2.0 / 3.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class InitialProfile:
    kind: str
    lam: float = 0.0
    level: float = 1.0
    peak: float = 1.0
    support_halfwidth: float = 1.0
    knots_x: tuple = ()
    knots_v: tuple = ()
    label: str = field(default="", compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        if self.kind == "lambda_family":
            out = lambda_profile(self.lam, ax)
        elif self.kind == "constant":
            out = np.full_like(ax, self.level)
        elif self.kind == "bump":
            out = self.peak * np.maximum(0.0, 1.0 - ax / self.support_halfwidth)
        elif self.kind == "table":
            kx = np.asarray(self.knots_x)
            kv = np.asarray(self.knots_v)
            out = np.interp(ax, kx, kv, left=kv[0], right=kv[-1])
        else:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    @property
    def sup_norm(self) -> float:
        return float(self(0.0))

    @property
    def breakpoints(self) -> tuple:
        if self.kind == "lambda_family":
            return (-E, E)
        if self.kind == "bump":
            h = self.support_halfwidth
            return (-h, 0.0, h)
        if self.kind == "table":
            kx = [k for k in self.knots_x if k > 0]
            return tuple(sorted({-k for k in kx} | set(kx) | {0.0}))
        return ()

    @property
    def decay_index(self) -> DecayIndex:
        if self.kind == "lambda_family":
            return self.lam
        if self.kind == "constant":
            return 0.0
        if self.kind == "bump":
            return INFINITE_INDEX
        if self.knots_v and self.knots_v[-1] == 0.0:
            return INFINITE_INDEX
        # a table holds its last value forever, like a constant
        return 0.0

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "lambda_family":
            d["lambda"] = self.lam
        elif self.kind == "constant":
            d["level"] = self.level
        elif self.kind == "bump":
            d.update(peak=self.peak, halfwidth=self.support_halfwidth)
        else:
            d.update(knots_x=list(self.knots_x), knots_v=list(self.knots_v))
        return d


def make_lambda(lam: float) -> InitialProfile:
    if lam < 0:
        raise ProfileError("decay index must be nonnegative")
    return InitialProfile("lambda_family", lam=float(lam))


def make_constant(level: float) -> InitialProfile:
    if level <= 0:
        raise ProfileError("constant level must be positive")
    return InitialProfile("constant", level=float(level))


def make_bump(peak: float, halfwidth: float) -> InitialProfile:
    """Triangular bump peak * max(0, 1 - |x|/halfwidth); Lipschitz with constant peak/halfwidth."""
    if peak <= 0 or halfwidth <= 0:
        raise ProfileError("peak and halfwidth must be positive")
    return InitialProfile("bump", peak=float(peak), support_halfwidth=float(halfwidth))


def make_table(xs: Sequence[float], values: Sequence[float]) -> InitialProfile:
    """Piecewise-linear profile through (x >= 0, value) knots, mirrored to x < 0.

    Values are forced nonincreasing by a running minimum and clipped at 0 so
    that user data cannot break the profile invariants.
    """
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(values, dtype=float)
    if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
        raise ProfileError("table needs at least two (x, value) knots")
    order = np.argsort(xs)
    xs, vs = xs[order], vs[order]
    if xs[0] < 0:
        raise ProfileError("table knots must have x >= 0")
    if np.any(np.diff(xs) <= 0):
        raise ProfileError("table knots must be distinct")
    if not np.all(np.isfinite(vs)):
        raise ProfileError("table values must be finite")
    vs = np.minimum.accumulate(np.clip(vs, 0.0, None))
    if vs[0] <= 0:
        raise ProfileError("table profile must be positive at the origin")
    if xs[0] > 0:
        xs = np.concatenate([[0.0], xs])
        vs = np.concatenate([[vs[0]], vs])
    return InitialProfile("table", knots_x=tuple(xs.tolist()), knots_v=tuple(vs.tolist()))


def load_table_csv(path: Union[str, Path]) -> InitialProfile:
    """Two-column CSV (x >= 0, value), optional header row."""
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, v = float(row[0]), float(row[1])
            except ValueError:
                if xs:
                    raise ProfileError(f"bad row in {path}: {row}")
                continue  # header
            xs.append(x)
            vs.append(v)
    return make_table(xs, vs)


def profile_from_dict(d: dict) -> InitialProfile:
    kind = d.get("kind")
    if kind in ("lambda", "lambda_family"):
        return make_lambda(d["lambda"])
    if kind == "constant":
        return make_constant(d.get("level", 1.0))
    if kind == "bump":
        return make_bump(d.get("peak", 1.0), d.get("halfwidth", 1.0))
    if kind == "table":
        if "path" in d:
            return load_table_csv(d["path"])
        return make_table(d["knots_x"], d["knots_v"])
    raise ProfileError(f"unknown profile kind {kind!r}")


def estimate_lambda(p, x_samples: Sequence[float]) -> float:
    """Least-squares slope of |log u0(x)| against (log x)^(2/3)."""
    xs = np.asarray(x_samples, dtype=float)
    if xs.size < 2:
        raise ProfileError("need at least two samples")
    if np.any(xs < E**2 * (1 - 1e-12)):
        raise ProfileError("samples must be >= e^2")
    vals = np.asarray(p(xs), dtype=float)
    if np.any(vals <= 0):
        bad = xs[vals <= 0][0]
        raise ProfileError(f"profile vanishes at x={bad}; log undefined")
    a = np.log(xs) ** (2.0 / 3.0)
    b = np.abs(np.log(vals))
    a0 = a - a.mean()
    denom = float(np.dot(a0, a0))
    if denom == 0:
        raise ProfileError("samples must be distinct")
    return float(np.dot(a0, b - b.mean()) / denom)


def audit_profile(p, x_max: float = 1e3, n: int = 10_000) -> list:
    """Check symmetry, monotonicity and boundedness; return a list of violations."""
    xs = np.linspace(0.0, x_max, n)
    v = np.asarray(p(xs), dtype=float)
    vm = np.asarray(p(-xs), dtype=float)
    sup = getattr(p, "sup_norm", float(np.max(v)))
    problems = []
    if np.max(np.abs(v - vm)) > 1e-12:
        problems.append("symmetry: u0(x) != u0(-x)")
    if np.any(np.diff(v) > 1e-12):
        problems.append("monotonicity: u0 increases on [0, x_max]")
    if np.any(v < 0) or np.any(v > sup + 1e-12) or not np.isfinite(sup):
        problems.append("boundedness: 0 <= u0 <= sup_norm fails")
    return problems


@dataclass(frozen=True)
class SplicedProfile:
    """``inside`` on [lo, hi], ``outside`` elsewhere.

    Used to build a second initial condition that agrees with a first one
    only on an interval; it is not required to be symmetric or monotone.
    """

    inside: object
    outside: object
    lo: float
    hi: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        mask = (x >= self.lo) & (x <= self.hi)
        out = np.where(mask, self.inside(x), self.outside(x))
        return out if out.ndim else float(out)

    @property
    def breakpoints(self) -> tuple:
        cuts = set(getattr(self.inside, "breakpoints", ())) | set(getattr(self.outside, "breakpoints", ()))
        return tuple(sorted(cuts | {self.lo, self.hi}))

    @property
    def sup_norm(self) -> float:
        return max(getattr(self.inside, "sup_norm", 0.0), getattr(self.outside, "sup_norm", 0.0))

    def describe(self) -> dict:
        desc = lambda p: p.describe() if hasattr(p, "describe") else repr(p)
        return {"kind": "spliced", "inside": desc(self.inside), "outside": desc(self.outside),
                "lo": self.lo, "hi": self.hi}


class ZeroProfile:
    """u0 = 0; the trivial solution."""

    breakpoints = ()
    sup_norm = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        return out if out.ndim else 0.0

    def describe(self) -> dict:
        return {"kind": "zero"}
