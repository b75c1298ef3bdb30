"""Batch runner: ``she <experiment> --config FILE [flags]``.

Exit status: 0 success, 2 configuration error, 3 more than 1% of replicas
aborted, 4 an in-experiment assertion failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds as _bounds
from ._rng import derive_seed
from .audit import kernel_audit
from .config import (EXPERIMENTS, FORMATS, ConfigError, ExperimentConfig, load_config,
                     resolve_v0, validate)
from .estimators import (independence_experiment, moment_growth, sup_field, susceptibility_experiment,
                         tail_exponent, trichotomy_scan)
from .grid import Grid
from .kernel import semigroup_apply
from .noise import NoiseSpec
from .profiles import INFINITE_INDEX, profile_from_dict
from .solver import run_ensemble, sigma_from_dict, solve

EXIT_OK, EXIT_CONFIG, EXIT_ABORTS, EXIT_ASSERT = 0, 2, 3, 4
ABORT_QUORUM = 0.01


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if o is INFINITE_INDEX:
        return "infinite"
    return o


def _assert(name, ok, detail=""):
    return {"name": name, "pass": bool(ok), "detail": detail}


# ---------------------------------------------------------------- experiments
# each returns (statistics, assertions, csv_header, csv_rows, abort_fraction)

def _exp_simulate(cfg, seed, par):
    p = cfg.params
    prof = profile_from_dict(cfg.profile)
    sigma = sigma_from_dict(cfg.sigma)
    g = _grid(cfg, p["T"], cfg.grid.halfwidth)
    every = max(1, int(p["every"]))
    steps = np.arange(0, g.n_steps + 1, every)
    if steps[-1] != g.n_steps:
        steps = np.append(steps, g.n_steps)
    run = run_ensemble(prof, sigma, g, seed, cfg.n_reps, steps, parallelism=par)
    ok = ~run.aborted
    window = tuple(p["window"]) if p.get("window") else (float(g.x[0]), float(g.x[-1]))
    mask = (g.x >= window[0] - 1e-9) & (g.x <= window[1] + 1e-9)
    maxima = run.rows[ok][:, :, mask].max(axis=2)
    mean_M = [math.fsum(maxima[:, i]) / maxima.shape[0] for i in range(steps.size)] if ok.any() else []
    stats = {"grid": {"dx": g.dx, "dt": g.dt, "n_steps": g.n_steps, "cells": g.cells},
             "window": list(window), "times": (steps * g.dt).tolist(), "mean_window_max": mean_M,
             "negativity_fraction": run.negativity_fraction,
             "aborted": int(np.count_nonzero(~ok))}
    if p.get("binary"):
        field = solve(prof, sigma, g.T, g, NoiseSpec(seed, 0, g))
        out = Path(cfg.output_dir)
        field.to_binary(out / "simulate_replica0.bin")
        stats["binary"] = "simulate_replica0.bin"
    rows = []
    if ok[0]:
        for i, s in enumerate(steps):
            for x, v in zip(g.x, run.rows[0, i]):
                rows.append((float(s * g.dt), float(x), float(v)))
    asserts = [_assert("trajectories finite", ok.all(), f"{int(np.count_nonzero(~ok))} aborted")]
    return stats, asserts, ("t", "x", "value"), rows, 1.0 - ok.mean()


def _grid(cfg, T, halfwidth, center=0.0):
    gc = cfg.grid
    if gc.dt is not None:
        n = int(round(T / gc.dt))
        if abs(n * gc.dt - T) > 1e-12 * max(1.0, T):
            raise ConfigError(f"grid.dt={gc.dt} does not divide T={T}")
        return Grid(halfwidth, gc.dx, gc.dt, n, center)
    return Grid.for_time(T, gc.dx, halfwidth, center, gc.dt_ratio)


def _exp_tails(cfg, seed, par):
    p = cfg.params
    prof = profile_from_dict(cfg.profile)
    sigma = sigma_from_dict(cfg.sigma)
    curve = tail_exponent(prof, sigma, p["t"], p["epsilon"], p["x_list"], cfg.n_reps, seed,
                          dx=cfg.grid.dx, halfwidth=cfg.grid.halfwidth, parallelism=par)
    lam = prof.decay_index
    stats = curve.to_dict()
    stats["decay_index"] = lam
    if lam is not INFINITE_INDEX and lam > 0:
        stats["envelope_K1_L1"] = list(_bounds.tail_exponent_envelope(lam, p["t"]))
    asserts = [_assert("Wilson intervals contain p_hat",
                       all(lo <= ph <= hi for _, ph, lo, hi in curve.points))]
    if lam is not INFINITE_INDEX and lam > 0:
        asserts.append(_assert("tail slope negative", curve.slope < 0,
                               f"slope {curve.slope:.4g} +- {curve.slope_stderr:.2g}"))
    rows = [tuple(pt) for pt in curve.points]
    return stats, asserts, ("x", "p_hat", "wilson_low", "wilson_high"), rows, 0.0


def _exp_moments(cfg, seed, par):
    p = cfg.params
    prof = profile_from_dict(cfg.profile)
    sigma = sigma_from_dict(cfg.sigma)
    res = moment_growth(prof, sigma, p["t_list"], p["x"], p["ks"], cfg.n_reps, seed,
                        dx=cfg.grid.dx, halfwidth=cfg.grid.halfwidth, parallelism=par)
    stats, rows, asserts = {"moments": []}, [], []
    for t, by_k in res.items():
        for k, st in by_k.items():
            stats["moments"].append({"t": t, "k": k, **st.to_dict()})
            rows.append((t, k, st.mean, st.ci_halfwidth, st.n))
    if 1 in p["ks"] and sigma.kind in ("linear", "wobble", "table", "zero"):
        for t, by_k in res.items():
            exact = float(semigroup_apply(prof, t, p["x"]))
            st = by_k[1]
            asserts.append(_assert(f"mean identity t={t:g}",
                                   abs(st.mean - exact) <= 3 * st.stderr + 1e-12,
                                   f"mc {st.mean:.6g} vs heat flow {exact:.6g}"))
    if prof.kind == "constant" and sigma.kind == "linear" and 2 in p["ks"]:
        for t, by_k in res.items():
            exact = prof.level**2 * _bounds.pam_second_moment(sigma.lam, t)
            st = by_k[2]
            asserts.append(_assert(f"second moment within 10% t={t:g}",
                                   abs(st.mean - exact) <= 0.1 * exact,
                                   f"mc {st.mean:.6g} vs closed form {exact:.6g}"))
    if 1 in p["ks"] and 2 in p["ks"]:
        for t, by_k in res.items():
            m1, m2 = by_k[1].mean, by_k[2].mean
            ok = m1 > 0 and m2 > 0 and math.log(m2) > 2 * math.log(m1)
            asserts.append(_assert(f"intermittency gap log E u^2 > 2 log E u, t={t:g}", ok,
                                   f"E u = {m1:.6g}, E u^2 = {m2:.6g}"))
    return stats, asserts, ("t", "k", "mean", "ci_halfwidth", "n"), rows, 0.0


def _exp_suscept(cfg, seed, par):
    p = cfg.params
    u0 = profile_from_dict(cfg.profile)
    v0 = resolve_v0(u0, p["v0"])
    sigma = sigma_from_dict(cfg.sigma)
    res = susceptibility_experiment(u0, v0, sigma, p["a"], p["r"], p["t_list"], cfg.n_reps, seed,
                                    dx=cfg.grid.dx, halfwidth=cfg.grid.halfwidth, parallelism=par)
    asserts = [_assert(f"estimate <= bound + 2 CI at t={t:g}", ok, f"{e:.4g} vs {b:.4g}")
               for t, ok, e, b in zip(res.t_values, res.within_bound, res.estimates, res.bounds)]
    if res.slope is not None:
        asserts.append(_assert("log-estimate vs 1/t slope <= -r^2/32", res.slope_ok,
                               f"slope {res.slope:.4g}, threshold {res.slope_threshold:.4g}"))
    rows = list(zip(res.t_values, res.estimates, res.ci_halfwidths, res.bounds))
    return res.to_dict(), asserts, ("t", "estimate", "ci_halfwidth", "bound"), rows, 0.0


def _exp_independence(cfg, seed, par):
    p = cfg.params
    prof = profile_from_dict(cfg.profile)
    sigma = sigma_from_dict(cfg.sigma)
    res = independence_experiment(prof, sigma, p["t"], p["n"], p["points"], cfg.n_reps, seed,
                                  dx=cfg.grid.dx, parallelism=par)
    asserts = [_assert("noise windows disjoint", res.masks_disjoint),
               _assert("off-diagonal correlations within 4/sqrt(N)",
                       res.max_offdiagonal <= res.tolerance,
                       f"max {res.max_offdiagonal:.4g} vs {res.tolerance:.4g}")]
    k = len(res.points)
    rows = [(res.points[i], res.points[j], res.correlation[i][j])
            for i in range(k) for j in range(k)]
    return res.to_dict(), asserts, ("x_i", "x_j", "correlation"), rows, 0.0


def _exp_trichotomy(cfg, seed, par):
    p = cfg.params
    sigma = sigma_from_dict(cfg.sigma)
    m = trichotomy_scan(p["lambda_list"], sigma, p["t_list"], p["windows"], cfg.n_reps, seed,
                        dx=cfg.grid.dx, bump_halfwidth=p.get("bump_halfwidth"), parallelism=par)
    asserts = [_assert(name, ok) for name, ok in m.checks.items()]
    rows = [(e["label"], e["t"], L, v, c) for e in m.entries
            for L, v, c in zip(e["L"], e["mean_max"], e["ci"])]
    return m.to_dict(), asserts, ("profile", "t", "L", "mean_window_max", "ci_halfwidth"), rows, 0.0


def _exp_bounds(cfg, seed, par):
    table = _bounds.bounds_table(a_const=cfg.params["a_const"])
    rows = []
    for name, entries in table.items():
        for e in entries:
            val = e.get("value", e.get("upper"))
            params = ";".join(f"{k}={_fmt(v)}" for k, v in e.items()
                              if k not in ("value", "lower", "upper"))
            rows.append((name, params, e.get("lower", val), val))
    asserts = [_assert("moment lower <= upper",
                       all(e["lower"] <= e["upper"] for e in table["moment_bounds"]))]
    return table, asserts, ("bound", "parameters", "lower_or_value", "value"), rows, 0.0


def _exp_kernel_audit(cfg, seed, par):
    recs = kernel_audit(n_random=int(cfg.params["n_random"]), seed=seed % (2**32))
    rows = [(r["name"], r["pass"], r["detail"]) for r in recs]
    return {"checks": recs}, recs, ("check", "pass", "detail"), rows, 0.0


_RUNNERS = {
    "simulate": _exp_simulate, "tails": _exp_tails, "moments": _exp_moments,
    "suscept": _exp_suscept, "independence": _exp_independence,
    "trichotomy": _exp_trichotomy, "bounds": _exp_bounds, "kernel-audit": _exp_kernel_audit,
}


def run(cfg: ExperimentConfig, stream=sys.stderr):
    """Run one experiment; returns (exit_status, result_document)."""
    problems = validate(cfg)
    if problems:
        for p in problems:
            print(f"config: {p}", file=stream)
        return EXIT_CONFIG, None
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"config: output_dir: not writable ({exc})", file=stream)
        return EXIT_CONFIG, None
    par = (os.cpu_count() or 1) if cfg.parallelism == "auto" else int(cfg.parallelism)
    seed = derive_seed(cfg.seed, cfg.experiment)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        stats, asserts, header, rows, abort_frac = _RUNNERS[cfg.experiment](cfg, seed, par)
    except ConfigError as exc:
        print(f"config: {exc}", file=stream)
        return EXIT_CONFIG, None
    doc = _jsonable({"config": cfg.to_dict(), "seed": cfg.seed, "derived_seed": seed,
                     "started_at": started, "statistics": stats, "assertions": asserts})
    stem = cfg.experiment.replace("-", "_")
    if cfg.output_format in ("json", "both"):
        (out / f"{stem}.json").write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    if cfg.output_format in ("csv", "both"):
        write_csv(out / f"{stem}.csv", header, rows)
    for a in asserts:
        print(f"{'PASS' if a['pass'] else 'FAIL'} {a['name']} {a['detail']}".rstrip(), file=stream)
    if abort_frac > ABORT_QUORUM:
        return EXIT_ABORTS, doc
    if not all(a["pass"] for a in asserts):
        return EXIT_ASSERT, doc
    return EXIT_OK, doc


def _parallelism(s: str):
    if s == "auto":
        return s
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("parallelism must be >= 1 or 'auto'")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="she", description="Stochastic heat equation experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="YAML experiment config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--reps", type=int, dest="n_reps")
    ap.add_argument("--out", dest="output_dir")
    ap.add_argument("--format", choices=FORMATS, dest="output_format")
    ap.add_argument("--parallelism", type=_parallelism)
    ap.add_argument("--validate-only", action="store_true",
                    help="print config violations and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
            if cfg.experiment != args.experiment:
                raise ConfigError(f"config is for {cfg.experiment!r}, not {args.experiment!r}")
        else:
            cfg = ExperimentConfig(args.experiment)
    except (OSError, ConfigError, TypeError, ValueError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in ("seed", "n_reps", "output_dir", "output_format", "parallelism"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    if args.validate_only:
        problems = validate(cfg)
        for p in problems:
            print(p)
        return EXIT_CONFIG if problems else EXIT_OK
    status, _ = run(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
