"""Experiment configuration: YAML documents mapped onto dataclasses.

A config names one experiment and carries the grid, profile and sigma
descriptors plus experiment-specific ``params``. Missing params take the
documented defaults in ``DEFAULT_PARAMS``; ``to_dict`` writes the completed
config so an archived result reproduces its run exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .estimators import separation_violations
from .profiles import ProfileError, SplicedProfile, ZeroProfile, audit_profile, profile_from_dict
from .solver import sigma_from_dict

EXPERIMENTS = ("simulate", "tails", "moments", "suscept", "independence", "trichotomy",
               "bounds", "kernel-audit")
FORMATS = ("csv", "json", "both")

_E = math.e
DEFAULT_PARAMS = {
    "simulate": {"T": 0.5, "window": None, "every": 10, "binary": False},
    "tails": {"t": 0.5, "epsilon": 0.1,
              "x_list": [_E**2, _E ** (8 / 3), _E ** (10 / 3), _E**4]},
    "moments": {"t_list": [0.25, 0.5, 1.0], "x": 0.0, "ks": [1, 2, 3, 4]},
    "suscept": {"a": 8.0, "r": 4.0, "t_list": [0.05, 0.1, 0.2],
                "v0": {"kind": "splice", "lo": 4.0, "hi": 12.0, "outside": {"kind": "zero"}}},
    "independence": {"t": 0.25, "n": 3, "points": [0.0, 5.2, 10.4]},
    "trichotomy": {"lambda_list": [0.5, 1.0, 2.0], "t_list": [0.25, 1.0],
                   "windows": [25.0, 50.0, 100.0], "bump_halfwidth": None},
    "bounds": {"a_const": 2.001},
    "kernel-audit": {"n_random": 50},
}

DEFAULT_PROFILE = {"kind": "lambda", "lambda": 1.0}
DEFAULT_SIGMA = {"kind": "linear", "lam": 1.0}


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    dx: float = 0.05
    halfwidth: Optional[float] = None
    dt: Optional[float] = None  # default dt_ratio * dx^2
    dt_ratio: float = 0.5

    def to_dict(self) -> dict:
        return {"dx": self.dx, "halfwidth": self.halfwidth, "dt": self.dt, "dt_ratio": self.dt_ratio}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 20240601
    n_reps: int = 200
    parallelism: Union[int, str] = 1
    output_dir: str = "results"
    output_format: str = "both"
    grid: GridConfig = field(default_factory=GridConfig)
    profile: dict = field(default_factory=lambda: dict(DEFAULT_PROFILE))
    sigma: dict = field(default_factory=lambda: dict(DEFAULT_SIGMA))
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULT_PARAMS.get(self.experiment, {}))
        merged.update(self.params or {})
        self.params = merged

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict) or "experiment" not in d:
            raise ConfigError("config must be a mapping with an 'experiment' key")
        known = {"experiment", "seed", "n_reps", "parallelism", "output_dir", "output_format",
                 "grid", "profile", "sigma", "params"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        g = d.get("grid") or {}
        bad = set(g) - {"dx", "halfwidth", "dt", "dt_ratio"}
        if bad:
            raise ConfigError(f"unknown grid keys: {sorted(bad)}")
        kw = {k: d[k] for k in ("seed", "n_reps", "parallelism", "output_dir", "output_format")
              if k in d}
        return cls(experiment=str(d["experiment"]), grid=GridConfig(**g),
                   profile=dict(d.get("profile") or DEFAULT_PROFILE),
                   sigma=dict(d.get("sigma") or DEFAULT_SIGMA),
                   params=dict(d.get("params") or {}), **kw)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "n_reps": self.n_reps,
                "parallelism": self.parallelism, "output_dir": self.output_dir,
                "output_format": self.output_format, "grid": self.grid.to_dict(),
                "profile": dict(self.profile), "sigma": dict(self.sigma),
                "params": dict(self.params)}


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def build_profile(d):
    """Profile descriptors plus the 'zero' and 'splice' kinds used for second initial data."""
    if d == "zero" or (isinstance(d, dict) and d.get("kind") == "zero"):
        return ZeroProfile()
    if isinstance(d, dict) and d.get("kind") == "splice":
        inside = build_profile(d["inside"]) if "inside" in d else None
        return inside, build_profile(d.get("outside", "zero")), float(d["lo"]), float(d["hi"])
    return profile_from_dict(d)


def resolve_v0(u0, d):
    spec = build_profile(d)
    if isinstance(spec, tuple):
        inside, outside, lo, hi = spec
        return SplicedProfile(inside if inside is not None else u0, outside, lo, hi)
    return spec


def validate(cfg: ExperimentConfig) -> list:
    """Every violated precondition as 'field: constraint'; empty when the run can start."""
    out = []
    if cfg.experiment not in EXPERIMENTS:
        return [f"experiment: must be one of {', '.join(EXPERIMENTS)}"]
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        out.append("seed: must be a nonnegative integer")
    if not isinstance(cfg.n_reps, int) or cfg.n_reps < 1:
        out.append("n_reps: must be a positive integer")
    if cfg.parallelism != "auto" and not (isinstance(cfg.parallelism, int) and cfg.parallelism >= 1):
        out.append("parallelism: must be a positive integer or 'auto'")
    if cfg.output_format not in FORMATS:
        out.append(f"output_format: must be one of {', '.join(FORMATS)}")
    g = cfg.grid
    if not (isinstance(g.dx, (int, float)) and g.dx > 0):
        out.append("grid.dx: must be positive")
    else:
        dt = g.dt if g.dt is not None else g.dt_ratio * g.dx**2
        if not dt > 0:
            out.append("grid.dt: must be positive")
        elif dt > g.dx**2 * (1 + 1e-12):
            out.append("stability: dt <= dx^2")
    if g.halfwidth is not None and not g.halfwidth > 0:
        out.append("grid.halfwidth: must be positive")
    if cfg.experiment in ("bounds", "kernel-audit"):
        return out
    try:
        prof = profile_from_dict(cfg.profile)
        out += [f"profile: {v}" for v in audit_profile(prof)]
    except (ProfileError, KeyError, TypeError) as exc:
        out.append(f"profile: {exc}")
        prof = None
    try:
        out += [f"sigma: {v}" for v in sigma_from_dict(cfg.sigma).audit()]
    except (ValueError, KeyError, TypeError) as exc:
        out.append(f"sigma: {exc}")
    out += _validate_params(cfg, prof)
    return out


def _validate_params(cfg: ExperimentConfig, prof) -> list:
    p = cfg.params
    out = []
    e = cfg.experiment
    hw = cfg.grid.halfwidth
    if e == "simulate":
        if not p["T"] > 0:
            out.append("params.T: must be positive")
        if p.get("window") is not None and hw is not None:
            lo, hi = p["window"]
            if lo > hi or lo < -hw or hi > hw:
                out.append(f"params.window: {p['window']} must lie inside [-{hw}, {hw}]")
        if hw is None:
            out.append("grid.halfwidth: required for simulate")
    elif e == "tails":
        xs = sorted(p["x_list"])
        if len(xs) < 4:
            out.append("params.x_list: needs at least 4 log-spaced points")
        elif min(xs) <= 0:
            out.append("params.x_list: points must be positive")
        else:
            steps = [math.log(b / a) for a, b in zip(xs, xs[1:])]
            if max(steps) - min(steps) > 1e-6 * abs(sum(steps) / len(steps)):
                out.append("params.x_list: points must be log-spaced")
        if cfg.n_reps < 100:
            out.append("n_reps: tail estimates need n_reps >= 100")
        if not p["t"] > 0:
            out.append("params.t: must be positive")
    elif e == "moments":
        if any(k not in (1, 2, 3, 4) for k in p["ks"]):
            out.append("params.ks: moment orders must lie in {1, 2, 3, 4}")
        if not p["t_list"] or min(p["t_list"]) <= 0:
            out.append("params.t_list: times must be positive")
    elif e == "suscept":
        a, r = p["a"], p["r"]
        if not r > 0:
            out.append("params.r: must be positive")
        elif prof is not None:
            try:
                v0 = resolve_v0(prof, p["v0"])
                from .estimators import sup_difference
                if sup_difference(prof, v0, a - r, a + r, 8001) > 0:
                    out.append(f"params.v0: must equal the profile on [{a - r}, {a + r}]")
            except (ProfileError, KeyError, TypeError) as exc:
                out.append(f"params.v0: {exc}")
            if hw is not None and hw < r / 4:
                out.append(f"grid.halfwidth: window |x - a| <= r/4 = {r / 4} must fit inside")
        if not p["t_list"] or min(p["t_list"]) <= 0:
            out.append("params.t_list: times must be positive")
    elif e == "independence":
        if not (isinstance(p["n"], int) and p["n"] >= 1):
            out.append("params.n: must be an integer >= 1")
        elif p["t"] > 0:
            out += [f"params.points: {v}" for v in separation_violations(p["points"], p["n"], p["t"])]
        if not p["t"] > 0:
            out.append("params.t: must be positive")
    elif e == "trichotomy":
        if len(p["windows"]) < 2 or min(p["windows"]) <= 0:
            out.append("params.windows: need >= 2 positive window sizes")
        if not p["t_list"] or min(p["t_list"]) <= 0:
            out.append("params.t_list: times must be positive")
        if not p["lambda_list"] or min(p["lambda_list"]) < 0:
            out.append("params.lambda_list: needs nonnegative decay indices")
    return out
