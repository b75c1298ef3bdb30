import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from shesim.bounds import pam_second_moment
from shesim.estimators import (EnsembleStat, PreconditionError, ReliabilityError, SlopeUndefinedError,
                               comparison_experiment, first_exceedance, fit_tail_slope,
                               independence_experiment, mc_moment, mc_tail, mean_identity,
                               moment_growth, picard_contraction, scheme_second_moment,
                               sup_field, susceptibility_experiment, tail_exponent,
                               wilson_interval)
from shesim.grid import Grid
from shesim.noise import NoiseSpec
from shesim.profiles import SplicedProfile, ZeroProfile, make_bump, make_constant, make_lambda
from shesim.solver import SigmaFn, run_ensemble, solve


def test_wilson_coverage_is_close_to_nominal():
    # exact coverage from the binomial law, no sampling involved
    for p, n in ((0.05, 200), (0.3, 100), (0.5, 400)):
        ks = np.arange(n + 1)
        cover = sum(binom.pmf(k, n, p) for k in ks
                    if wilson_interval(int(k), n)[0] <= p <= wilson_interval(int(k), n)[1])
        assert 0.92 <= cover <= 0.98


def test_wilson_edges():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0 and lo > 0.95
    with pytest.raises(ValueError):
        wilson_interval(5, 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_ensemble_stat_invariants(xs):
    s = EnsembleStat.from_samples(xs)
    assert min(xs) - 1e-9 <= s.mean <= max(xs) + 1e-9
    assert s.variance >= 0
    assert s.ci_halfwidth == pytest.approx(1.96 * math.sqrt(s.variance / len(xs)))


def test_mc_tail_deterministic_cases():
    # sigma = 0: the indicator is deterministic, so p_hat is exactly 0 or 1
    one = mc_tail(make_constant(1.0), SigmaFn.zero(), 0.1, 0.0, 0.5, 100, 1, dx=0.1)
    zero = mc_tail(make_constant(1.0), SigmaFn.zero(), 0.1, 0.0, 1.5, 100, 1, dx=0.1)
    assert one.mean == 1.0 and zero.mean == 0.0
    assert zero.wilson[0] == 0.0 and zero.wilson[1] < 0.04
    with pytest.raises(ValueError):
        mc_tail(make_constant(1.0), SigmaFn.zero(), 0.1, 0.0, 0.5, 50, 1)


def test_fit_tail_slope_recovers_power_law():
    xs = np.exp(np.linspace(1, 4, 5))
    slope, se = fit_tail_slope(xs, 0.3 * xs**-0.7, 1000)
    assert slope == pytest.approx(-0.7, abs=1e-12) and se > 0
    with pytest.raises(SlopeUndefinedError):
        fit_tail_slope(xs, [0.1, 0.05, 0, 0, 0], 1000)


def test_tail_exponent_flat_profile_has_zero_slope():
    xs = [math.e ** k for k in (1, 1.5, 2, 2.5)]
    curve = tail_exponent(make_constant(1.0), SigmaFn.zero(), 0.1, 0.5, xs, 100, 3, dx=0.1)
    assert curve.slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError, match="log-spaced"):
        tail_exponent(make_constant(1.0), SigmaFn.zero(), 0.1, 0.5, [1, 2, 3, 5], 100, 3)


def _brute_second_moment(lam, T, dx):
    n = int(math.ceil(T / (0.5 * dx * dx) - 1e-9))
    dt = T / n
    r = dt / (2 * dx * dx)
    m = 2 * n + 5
    A = np.eye(m) * (1 - 2 * r) + np.eye(m, k=1) * r + np.eye(m, k=-1) * r
    M = np.ones((m, m))
    for _ in range(n):
        M = A @ M @ A.T + lam**2 * (dt / dx) * np.diag(np.diag(M))
    return M[m // 2, m // 2]


@pytest.mark.parametrize("dx,T", [(0.1, 0.25), (0.2, 1.0), (0.1, 0.5)])
def test_scheme_second_moment_matches_matrix_recursion(dx, T):
    assert scheme_second_moment(1.0, T, dx) == pytest.approx(_brute_second_moment(1.0, T, dx),
                                                             rel=1e-12)


def test_scheme_second_moment_converges_to_continuum():
    exact = pam_second_moment(1.0, 0.5)
    errs = [abs(scheme_second_moment(1.0, 0.5, dx) - exact) for dx in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / exact < 0.01


def test_mc_moments_match_exact_values():
    t = 0.25
    m1 = mc_moment(make_constant(1.0), SigmaFn.linear(), t, 0.0, 1, 400, 5, dx=0.1)
    assert abs(m1.mean - 1.0) <= 4 * m1.stderr
    m2 = mc_moment(make_constant(1.0), SigmaFn.linear(), t, 0.0, 2, 400, 6, dx=0.1)
    assert abs(m2.mean - scheme_second_moment(1.0, t, 0.1)) <= 4 * m2.stderr
    with pytest.raises(ValueError):
        mc_moment(make_constant(1.0), SigmaFn.linear(), t, 0.0, 5, 10, 1)


def test_moment_growth_shape():
    out = moment_growth(make_constant(1.0), SigmaFn.linear(), [0.1, 0.2], 0.0, [1, 2], 200, 1,
                        dx=0.1)
    assert set(out) == {0.1, 0.2} and set(out[0.1]) == {1, 2}
    assert out[0.2][2].mean > 0


def test_moment_reliability_guard():
    with pytest.raises(ReliabilityError, match="effective samples"):
        mc_moment(make_constant(1.0), SigmaFn.linear(), 0.2, 0.0, 4, 20, 1, dx=0.1)


def test_mean_identity_within_noise():
    rows = mean_identity(make_lambda(1.0), SigmaFn.linear(), 0.2, [0.0, 1.0], 200, 2, dx=0.1)
    assert all(abs(r["z"]) < 4 for r in rows)


def test_sup_field_and_first_exceedance():
    g = Grid.for_time(0.1, 0.1, 3.0)
    flat = solve(make_constant(2.0), SigmaFn.zero(), 0.1, g, NoiseSpec(0, 0, g))
    s = sup_field(flat)
    assert np.allclose(s.M, 2.0) and len(s.M) == g.n_steps + 1
    assert first_exceedance(flat, 2.0 - 1e-12) == 0.0
    assert first_exceedance(flat, 3.0) is None
    bump = solve(make_bump(1.0, 1.0), SigmaFn.zero(), 0.1, g, NoiseSpec(0, 0, g))
    M = sup_field(bump, (-1.0, 1.0)).M
    assert all(a >= b for a, b in zip(M, M[1:]))
    with pytest.raises(ValueError):
        sup_field(bump, (-5.0, 1.0))


def test_susceptibility_identical_data_gives_zero():
    u0 = make_constant(1.0)
    res = susceptibility_experiment(u0, u0, SigmaFn.linear(), 0.0, 2.0, [0.05, 0.1], 16, 1,
                                    dx=0.1)
    assert res.estimates == [0.0, 0.0] and res.bounds == [0.0, 0.0]
    v0 = SplicedProfile(u0, ZeroProfile(), -1.0, 1.0)
    with pytest.raises(PreconditionError):
        susceptibility_experiment(u0, v0, SigmaFn.linear(), 0.0, 2.0, [0.1], 16, 1)


def test_comparison_requires_order():
    with pytest.raises(PreconditionError):
        comparison_experiment(make_constant(2.0), make_constant(1.0), SigmaFn.linear(), 0.1,
                              [0.1], 8, 1)
    out = comparison_experiment(make_constant(1.0), make_constant(1.0), SigmaFn.linear(), 0.1,
                                [0.1], 8, 1)
    assert out[0]["violation"] == 0.0


def test_picard_contraction_quick():
    res = picard_contraction(make_constant(1.0), SigmaFn.linear(), 0.1, 0.0, 4, 64, 1, dx=0.1)
    assert len(res["D"]) == 4 and all(r < 1 for r in res["ratios"])


def test_independence_preconditions_and_self_correlation():
    with pytest.raises(PreconditionError, match="0.0 and 1.0"):
        independence_experiment(make_constant(1.0), SigmaFn.linear(), 0.25, 2, [0.0, 1.0], 8, 1)
    res = independence_experiment(make_constant(1.0), SigmaFn.linear(), 0.25, 2, [0.0, 0.0], 32,
                                  1, check_separation=False)
    assert res.correlation[0][1] == pytest.approx(1.0)


def test_parallelism_does_not_change_results():
    g = Grid.for_time(0.1, 0.1, 2.0)
    a = run_ensemble(make_lambda(1.0), SigmaFn.wobble(), g, 9, 40, parallelism=1)
    b = run_ensemble(make_lambda(1.0), SigmaFn.wobble(), g, 9, 40, parallelism=3)
    assert np.array_equal(a.rows, b.rows) and np.array_equal(a.neg_count, b.neg_count)
