import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shesim.bounds import (DEFAULT_A, bounds_table, chebyshev_tail_bound, derived_L,
                           moment_bounds, pam_second_moment, suscept_bound, suscept_constant,
                           tail_exponent_envelope)
from shesim.kernel import KernelOverflowError, kernel_K_mass
from shesim.profiles import INFINITE_INDEX

mp.mp.dps = 40


def test_suscept_example(oracles):
    v = suscept_bound(1.0, 4.0, 0.1, 1.0)
    assert v == pytest.approx(oracles["suscept_lip1_r4_t0.1"], rel=1e-12)
    assert v == pytest.approx(8.90e-3, rel=0.01)
    assert suscept_constant(1.0) == 192.0


def test_suscept_trivial_cases():
    assert suscept_bound(1.0, 4.0, 0.1, 0.0) == 0.0
    assert suscept_bound(1.0, 1e3, 0.1, 1.0) == 0.0  # exp underflows to 0
    with pytest.raises(ValueError):
        suscept_bound(0.0, 1.0, 0.1, 1.0)
    with pytest.raises(KernelOverflowError):
        suscept_bound(10.0, 1.0, 100.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.1, 10.0), st.floats(0.01, 2.0), st.floats(1.01, 2.0))
def test_suscept_monotone(lip, r, t, f):
    # decreasing in r; increasing in t (both exponents grow with t)
    assert suscept_bound(lip, r * f, t, 1.0) <= suscept_bound(lip, r, t, 1.0)
    assert suscept_bound(lip, r, t, 1.0) <= suscept_bound(lip, r, t * f, 1.0)


def test_moment_bounds_examples(oracles):
    lo, hi = moment_bounds(2, 0.0, 1.0, DEFAULT_A)
    assert (lo, hi) == pytest.approx(tuple(oracles["moment_bounds_k2_t0"]), rel=1e-14)
    assert lo == pytest.approx(0.2498, abs=1e-4) and hi == pytest.approx(4.0040, abs=1e-4)


def test_moment_bounds_ratio_and_scaling():
    ratios = [np.divide(*moment_bounds(k, 0.3, 1.0)) for k in (2, 3, 4, 5, 6)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    for k in (2, 3, 5):
        lo1, hi1 = moment_bounds(k, 0.2, 0.5)
        lo2, hi2 = moment_bounds(k, 0.2, 1.5)
        assert lo2 / lo1 == pytest.approx(3.0**k, rel=1e-12)
        assert hi2 / hi1 == pytest.approx(3.0**k, rel=1e-12)
    with pytest.raises(ValueError):
        moment_bounds(2, 0.1, 1.0, a_const=2.0)
    with pytest.raises(KernelOverflowError):
        moment_bounds(20, 100.0, 1.0)


def test_chebyshev_examples(oracles):
    A, t, u = DEFAULT_A, 0.5, 0.01
    assert chebyshev_tail_bound(0.1, t, u, A) == pytest.approx(
        oracles["chebyshev_A2.001_t0.5_u0.01_eps0.1"], rel=1e-12)
    eps = 2 * A * u * math.e
    assert chebyshev_tail_bound(eps, t, u, A) == pytest.approx(
        math.exp(-2 / (3 * math.sqrt(3 * A * t))), rel=1e-12)
    vals = [chebyshev_tail_bound(0.1, t, u0, A) for u0 in (1e-2, 1e-4, 1e-8, 1e-16)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-3
    with pytest.raises(ValueError):
        chebyshev_tail_bound(0.01, t, u, A)


def test_pam_second_moment(oracles):
    assert pam_second_moment(1.0, 0.0) == 1.0
    for t, v in oracles["pam_second_moment"].items():
        assert pam_second_moment(1.0, float(t)) == pytest.approx(v, rel=1e-13)
    ts = np.linspace(0, 3, 50)
    vals = [pam_second_moment(1.3, t) for t in ts]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_pam_derivative_identity():
    h = 1e-5
    d = (pam_second_moment(1.0, 1 + h) - pam_second_moment(1.0, 1 - h)) / (2 * h)
    assert d == pytest.approx(kernel_K_mass(1.0, 1.0), abs=1e-8)


def test_tail_envelope():
    assert tail_exponent_envelope(0.0, 1.0) == (0.0, 0.0)
    lo1, up1 = tail_exponent_envelope(1.0, 0.5, 0.5, 2.0)
    lo4, up4 = tail_exponent_envelope(1.0, 2.0, 0.5, 2.0)
    assert lo4 == pytest.approx(lo1 / 2) and up4 == pytest.approx(up1 / 2)
    lo8, up8 = tail_exponent_envelope(4.0, 0.5, 0.5, 2.0)
    assert lo8 == pytest.approx(8 * lo1) and up8 == pytest.approx(8 * up1)
    assert lo1 <= up1 <= 0
    with pytest.raises(ValueError):
        tail_exponent_envelope(INFINITE_INDEX, 1.0)
    with pytest.raises(ValueError):
        tail_exponent_envelope(1.0, 1.0, 2.0, 1.0)


def test_derived_L():
    assert derived_L(4.0) == pytest.approx(8 * 32 + 2)


def test_evaluators_match_extended_precision():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        lip, r, t, b = rng.uniform(0.3, 2), rng.uniform(0.5, 8), rng.uniform(0.01, 2), rng.uniform(0.1, 3)
        k, u0, A = int(rng.integers(2, 6)), rng.uniform(0.01, 2), rng.uniform(2.001, 4)
        tm = rng.uniform(0.0, 1.0)
        TM = mp.mpf(tm)
        eps = 2 * A * u0 * rng.uniform(1.1, 50)
        L, T, B, U, AA, E = map(mp.mpf, (lip, r, t, b, A, eps))
        U0 = mp.mpf(u0)
        ref_s = 96 * max(1, 1 / L**4) * (1 + L**4) * U**2 * mp.exp(-T**2 / (16 * B) + L**4 * B / 4)
        pairs = [(suscept_bound(lip, r, t, b), ref_s),
                 (moment_bounds(k, tm, u0, A)[0], AA**-k * U0**k * mp.exp(k**3 * TM / AA)),
                 (moment_bounds(k, tm, u0, A)[1], AA**k * U0**k * mp.exp(AA * k**3 * TM)),
                 (chebyshev_tail_bound(eps, t, u0, A),
                  mp.exp(-(2 / (3 * mp.sqrt(3 * AA * B))) * mp.log(E / (2 * AA * U0)) ** 1.5)),
                 (pam_second_moment(lip, t), 2 * mp.exp(L**4 * B / 4) * mp.ncdf(L**2 * mp.sqrt(B / 2)))]
        for got, ref in pairs:
            if ref != 0:
                worst = max(worst, float(abs((got - ref) / ref)))
    assert worst <= 1e-10


def test_bounds_table_shape():
    tab = bounds_table()
    assert set(tab) == {"suscept_bound", "moment_bounds", "chebyshev_tail_bound", "pam_second_moment"}
    assert all(m["lower"] <= m["upper"] for m in tab["moment_bounds"])
