import math

import numpy as np
import pytest

from shesim.grid import Grid, GridError
from shesim.kernel import semigroup_apply
from shesim.noise import NoiseSpec, sample_noise
from shesim.profiles import make_bump, make_constant, make_lambda
from shesim.solver import (SigmaFn, boundary_values, localized_picard, localized_windows,
                           picard_iterate, read_binary, run_ensemble, sigma_from_dict, solve,
                           step_explicit)


@pytest.fixture(scope="module")
def small_grid():
    return Grid.for_time(0.05, 0.1, 3.0)


def test_engine_matches_step_by_step(small_grid):
    g = small_grid
    prof, sig = make_lambda(1.0), SigmaFn.wobble(0.8)
    spec = NoiseSpec(7, 3, g)
    field = solve(prof, sig, g.T, g, spec)
    noise = sample_noise(spec).increments
    lo, hi = boundary_values(prof, g)
    u = prof(g.x)
    for n in range(g.n_steps):
        u = step_explicit(u, noise[n], sig, g, (lo[n + 1], hi[n + 1]))
        assert np.allclose(u, field.values[n + 1], rtol=1e-12, atol=1e-13)


def test_zero_sigma_tracks_heat_flow():
    g = Grid.for_time(0.5, 0.025, 6.0)
    prof = make_bump(1.0, 1.0)
    field = solve(prof, SigmaFn.zero(), 0.5, g, NoiseSpec(1, 0, g))
    exact = semigroup_apply(prof, 0.5, g.x)
    err = np.sqrt(np.sum((field.values[-1] - exact) ** 2) / np.sum(exact**2))
    assert err <= 0.01


def test_constant_profile_stays_constant():
    g = Grid.for_time(0.2, 0.1, 2.0)
    field = solve(make_constant(2.5), SigmaFn.zero(), 0.2, g, NoiseSpec(0, 0, g))
    assert np.allclose(field.values, 2.5, rtol=0, atol=1e-13)


def test_linear_sigma_is_linear_in_data(small_grid):
    from shesim.profiles import make_table
    g = small_grid
    spec = NoiseSpec(11, 0, g)
    xs = np.linspace(0.0, 3.0, 31)
    base = make_lambda(1.0)(xs)
    a = solve(make_table(xs, base), SigmaFn.linear(1.0), g.T, g, spec).values
    b = solve(make_table(xs, 2.5 * base), SigmaFn.linear(1.0), g.T, g, spec).values
    assert np.allclose(b, 2.5 * a, rtol=1e-10, atol=1e-12)
    c1 = solve(make_constant(1.0), SigmaFn.linear(1.0), g.T, g, spec).values
    c3 = solve(make_constant(3.0), SigmaFn.linear(1.0), g.T, g, spec).values
    assert np.allclose(c3, 3 * c1, rtol=1e-12, atol=1e-12)


def test_wobble_runs_and_counts_negativity(small_grid):
    g = small_grid
    f = solve(make_constant(1.0), SigmaFn.wobble(1.0), g.T, g,
              NoiseSpec(5, 0, g))
    assert np.all(np.isfinite(f.values))
    assert 0.0 <= f.negativity_fraction <= 1.0


def test_negativity_shrinks_with_refinement():
    fracs = []
    for dx in (0.2, 0.1, 0.05):
        g = Grid.for_time(0.25, dx, 2.0)
        run = run_ensemble(make_constant(1.0), SigmaFn.linear(1.0), g, 3, 32)
        fracs.append(run.negativity_fraction)
    assert fracs[0] > fracs[1] > fracs[2]


def test_solve_rejects_mismatches(small_grid):
    g = small_grid
    with pytest.raises(GridError):
        solve(make_constant(1.0), SigmaFn.linear(), 1.0, g, NoiseSpec(0, 0, g))
    other = Grid.for_time(0.05, 0.05, 3.0)
    with pytest.raises(GridError):
        solve(make_constant(1.0), SigmaFn.linear(), g.T, g, NoiseSpec(0, 0, other))


def test_picard_iterates(small_grid):
    g = small_grid
    prof, sig = make_lambda(1.0), SigmaFn.linear(1.0)
    spec = NoiseSpec(2, 1, g)
    its = picard_iterate(prof, sig, g.T, g, spec, 12)
    assert np.allclose(its[0], prof(g.x)[None, :])
    target = solve(prof, sig, g.T, g, spec).values
    d = [np.max(np.abs(it[-1] - target[-1])) for it in its]
    assert d[-1] < 1e-8 * max(1.0, np.max(np.abs(target)))
    assert d[-1] < d[3] < d[1]
    z = picard_iterate(prof, SigmaFn.zero(), g.T, g, spec, 3)
    heat = solve(prof, SigmaFn.zero(), g.T, g, spec).values
    assert np.allclose(z[1], heat, atol=1e-13) and np.allclose(z[3], heat, atol=1e-13)
    with pytest.raises(ValueError):
        picard_iterate(prof, sig, g.T, g, spec, -1)


def test_localized_picard_zero_sigma_is_heat_flow():
    g = Grid.for_time(0.25, 0.1, 8.0)
    prof = make_bump(1.0, 1.5)
    res = localized_picard(prof, SigmaFn.zero(), 0.25, 0.3, 2, NoiseSpec(0, 0, g))
    assert res.value == pytest.approx(float(semigroup_apply(prof, 0.25, 0.3)), rel=0.01)


def test_localized_masks_respect_reach():
    g = Grid.for_time(0.25, 0.1, 12.0)
    n = 3
    spec = NoiseSpec(4, 0, g)
    w = localized_windows(g, n)
    reach = n * int(w[-1]) * g.dx
    assert reach <= n * math.sqrt(n * 0.25) + 1e-9
    ra = localized_picard(make_constant(1.0), SigmaFn.linear(), 0.25, -5.0, n, spec).read_mask
    rb = localized_picard(make_constant(1.0), SigmaFn.linear(), 0.25, 5.0, n, spec).read_mask
    assert not np.any(ra & rb)
    cols = np.nonzero(ra.any(axis=0))[0]
    assert g.x[cols].min() >= -5.0 - reach - 1e-9 and g.x[cols].max() <= -5.0 + reach + 1e-9
    with pytest.raises(GridError, match="halfwidth"):
        localized_picard(make_constant(1.0), SigmaFn.linear(), 0.25, 11.5, n, spec)


def test_sigma_audit_and_constants():
    assert SigmaFn.linear(2.0).audit() == []
    w = SigmaFn.wobble(1.0)
    assert w.audit() == [] and w.lip == 1.5 and 0.5 < w.ell_lower < 1.0
    t = SigmaFn.table([-1, 0, 1], [-2, 0, 0.5])
    assert t.audit() == [] and t.lip == 2.0 and t.ell_lower == 0.5
    flat = SigmaFn.table([-1, 0, 1, 2], [-1, 0, 1, 1])
    assert flat.audit()  # slope 0 at infinity loses the linear lower bound
    with pytest.raises(ValueError):
        SigmaFn("cubic")
    with pytest.raises(ValueError):
        SigmaFn.table([0, 0], [0, 1])
    assert sigma_from_dict({"kind": "wobble", "lam": 0.5}) == SigmaFn.wobble(0.5)


def test_csv_and_binary_round_trip(tmp_path, small_grid):
    g = small_grid
    f = solve(make_lambda(1.0), SigmaFn.linear(), g.T, g, NoiseSpec(9, 0, g))
    f.to_binary(tmp_path / "u.bin")
    head, vals = read_binary(tmp_path / "u.bin")
    assert np.array_equal(vals, f.values) and head["seed"] == 9
    f.to_csv(tmp_path / "u.csv", every=2)
    data = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2], f.values[::2].ravel())
