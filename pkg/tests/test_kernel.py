import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shesim.audit import RandomOutsideFn
from shesim.kernel import (KernelDomainError, KernelOverflowError, QuadratureSpec,
                           QuadratureWarning, SpaceTimeFn, gaussian_tail_mass, heat_kernel,
                           heat_kernel_squared, kernel_K, kernel_K_mass, kernel_fn, decay_bound,
                           normal_cdf, normal_sf, renewal_growth, semigroup_apply,
                           space_time_convolve)
from shesim.profiles import make_bump, make_constant, make_lambda


class Indicator:
    breakpoints = (-1.0, 1.0)

    def __call__(self, y):
        return (np.abs(np.asarray(y)) <= 1.0).astype(float)


def test_heat_kernel_values(oracles):
    assert heat_kernel(1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert heat_kernel(2.0, 0.0) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-15)
    assert heat_kernel(0.5, 1.0) == pytest.approx(oracles["heat_kernel_0.5_1"], rel=1e-14)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(KernelDomainError):
        heat_kernel(0.0, 1.0)
    with pytest.raises(KernelDomainError):
        heat_kernel(-1.0, 1.0)


def test_heat_kernel_square_identity():
    x = np.linspace(-3, 3, 13)
    for t in (0.1, 1.0, 4.0):
        assert np.allclose(heat_kernel_squared(t, x), heat_kernel(t, x) ** 2, rtol=1e-13)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0, 10.0])
def test_normalization_by_semigroup(t):
    q = QuadratureSpec(spatial_halfwidth=max(12.0, 8 * math.sqrt(t)))
    assert abs(semigroup_apply(make_constant(1.0), t, 0.3, q) - 1.0) <= 1e-9


def test_normal_cdf(oracles):
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(40.0) - 1.0) <= 1e-15
    assert normal_cdf(1 / math.sqrt(2)) == pytest.approx(oracles["Phi_inv_sqrt2"], abs=1e-12)
    x = np.linspace(-8, 8, 101)
    assert np.allclose(normal_cdf(-x), 1 - normal_cdf(x), atol=1e-15)
    assert np.all(np.diff(normal_cdf(x)) >= 0)
    # upper tail keeps relative accuracy far out
    assert normal_sf(10.0) == pytest.approx(7.619853024160527e-24, rel=1e-12)


def test_kernel_K_point_value(oracles):
    assert kernel_K(1.0, 1.0, 0.0) == pytest.approx(oracles["K_1_1_0"], rel=1e-12)
    assert kernel_K(1.0, 1.0, 0.0) == pytest.approx(0.4345, abs=5e-5)


def test_kernel_K_lattice_against_mpmath(oracles):
    worst = 0.0
    for a, t, x, ref in oracles["K_lattice"]:
        worst = max(worst, abs(kernel_K(a, t, x) - ref) / ref)
    assert worst <= 1e-10


def test_kernel_K_limits_and_symmetry():
    assert kernel_K(1e-8, 1.0, 0.0) < 1e-15
    assert kernel_K(1.0, 1.0, 2.0) == kernel_K(1.0, 1.0, -2.0)
    with pytest.raises(KernelDomainError):
        kernel_K(0.0, 1.0, 0.0)
    with pytest.raises(KernelOverflowError):
        kernel_K(10.0, 1000.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.01, 5.0), st.floats(-20.0, 20.0))
def test_kernel_K_positive_and_even(alpha, t, x):
    v = kernel_K(alpha, t, x)
    assert v >= 0
    assert v == kernel_K(alpha, t, -x)
    if abs(x) < 3 * math.sqrt(t):
        assert v > 0


def test_growth_derivative_identity(oracles):
    h = 1e-4
    g = lambda s: renewal_growth(1.0, s)
    d = (-g(1 + 2 * h) + 8 * g(1 + h) - 8 * g(1 - h) + g(1 - 2 * h)) / (12 * h)
    assert abs(d - kernel_K_mass(1.0, 1.0)) <= 1e-8
    assert kernel_K_mass(1.0, 1.0) == pytest.approx(oracles["K_mass_by_quadrature_1_1"], rel=1e-12)
    assert oracles["growth_derivative_1_1"] == pytest.approx(oracles["K_mass_by_quadrature_1_1"],
                                                             rel=1e-12)


def test_semigroup_of_indicator(oracles):
    v = semigroup_apply(Indicator(), 1.0, 0.0)
    assert v == pytest.approx(oracles["indicator_semigroup_t1_x0"], abs=1e-12)


def test_semigroup_property():
    f = Indicator()
    xs = np.array([-2.0, -0.5, 0.0, 0.9, 1.7])
    for s, t in ((0.05, 0.3), (0.5, 1.0)):
        lhs = semigroup_apply(lambda y: semigroup_apply(f, t, y), s, xs)
        rhs = semigroup_apply(f, s + t, xs)
        assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_semigroup_bounded_by_sup():
    p = make_lambda(1.0)
    xs = np.linspace(-20, 20, 41)
    v = semigroup_apply(p, 0.7, xs)
    assert np.all(v <= p.sup_norm + 1e-12) and np.all(v >= 0)


def test_semigroup_warns_on_small_window():
    with pytest.warns(QuadratureWarning):
        semigroup_apply(make_constant(1.0), 10.0, 0.0, QuadratureSpec(spatial_halfwidth=5.0))


def test_gaussian_tail_mass(oracles):
    assert gaussian_tail_mass(1.0, 1.0) == pytest.approx(oracles["tail_mass_1_1"], rel=1e-13)
    assert gaussian_tail_mass(1e-12, 1.0) == pytest.approx(1.0, abs=1e-11)
    for r in (0.5, 1.0, 2.0, 4.0):
        for t in (0.1, 1.0):
            assert gaussian_tail_mass(r / 2, t) <= 2 * math.exp(-r * r / (8 * t))
            assert gaussian_tail_mass(r / 2, t) <= 2 * math.exp(-(r / 2) ** 2 / (2 * t))


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 4.0])
@pytest.mark.parametrize("t", [0.05, 0.5])
def test_decay_bound_random_family(r, t):
    rng = np.random.default_rng(int(r * 100 + t * 1000))
    for _ in range(50):
        a = rng.uniform(-3, 3)
        h = RandomOutsideFn(rng, a, r)
        xs = a + np.linspace(-r / 2, r / 2, 7)
        assert np.all(np.abs(semigroup_apply(h, t, xs)) <= decay_bound(h.sup_bound, r, t))


def test_convolution_of_zero_is_zero():
    zero = SpaceTimeFn(lambda t, x: np.zeros_like(np.asarray(x, dtype=float)))
    assert space_time_convolve(zero, kernel_fn(1.0), 0.5, 0.0) == 0.0


@pytest.mark.parametrize("alpha,t", [(1.0, 1.0), (0.7, 0.3), (1.5, 2.0)])
def test_renewal_identity(alpha, t):
    one = SpaceTimeFn(lambda s, x: np.ones_like(np.asarray(x, dtype=float)))
    v = space_time_convolve(one, kernel_fn(alpha), t, 0.4)
    assert v + 1.0 == pytest.approx(renewal_growth(alpha, t), rel=1e-6)


def test_convolution_is_bilinear():
    rng = np.random.default_rng(3)
    f1 = SpaceTimeFn(lambda s, x: np.exp(-np.asarray(x) ** 2) * (1 + s))
    f2 = SpaceTimeFn(lambda s, x: np.cos(np.asarray(x)) * s)
    g = kernel_fn(1.0)
    for _ in range(3):
        a, b = rng.normal(size=2)
        comb = SpaceTimeFn(lambda s, x, a=a, b=b: a * f1(s, x) + b * f2(s, x))
        lhs = space_time_convolve(comb, g, 0.6, 0.2)
        rhs = a * space_time_convolve(f1, g, 0.6, 0.2) + b * space_time_convolve(f2, g, 0.6, 0.2)
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


def test_nonfinite_integrand_is_reported():
    bad = SpaceTimeFn(lambda s, x: np.full_like(np.asarray(x, dtype=float), np.nan))
    with pytest.raises(FloatingPointError, match="s="):
        space_time_convolve(bad, kernel_fn(1.0), 0.5, 0.0)


def test_J_squared_against_K_bound():
    # h = B on |y - a| > r and 0 inside: the worst bounded difference of two data
    # agreeing on [a - r, a + r]; its heat flow J has a closed form
    a, r, lip, B = 8.0, 4.0, 1.0, 1.0
    ell = 1 + lip**4

    def J2(s, y):
        y = np.asarray(y, dtype=float)
        rs = math.sqrt(s)
        return (B * (normal_cdf((a - r - y) / rs) + normal_sf((a + r - y) / rs))) ** 2

    g = SpaceTimeFn(J2, scale=lambda s: math.sqrt(s))
    for t in (0.2, 0.5, 1.0):
        for x in (a - r / 4, a, a + r / 4):
            v = space_time_convolve(kernel_fn(lip), g, t, x, QuadratureSpec(spatial_halfwidth=20.0))
            bound = 48 * ell * max(1.0, lip**-4) * B**2 * math.exp(-r * r / (16 * t) + lip**4 * t / 4)
            assert 0 <= v <= bound
