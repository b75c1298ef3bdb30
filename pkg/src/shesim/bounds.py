"""Closed-form bounds: insensitivity, moment envelopes, tail envelopes.

The universal constants A, K and L are existence results with no known
values; they enter here as explicit arguments with documented defaults.
"""

from __future__ import annotations

import math

from .kernel import MAX_EXP_ARG, KernelOverflowError, renewal_growth
from .profiles import INFINITE_INDEX

DEFAULT_A = 2.001
DEFAULT_K = 1.0
DEFAULT_L = 1.0


def _exp(arg: float) -> float:
    if arg > MAX_EXP_ARG:
        raise KernelOverflowError(f"exponent {arg:.6g} exceeds the double-precision range")
    return math.exp(arg)


def suscept_constant(lip: float) -> float:
    """C * ell = 96 max(1, lip^-4) (1 + lip^4)."""
    l4 = lip**4
    return 96.0 * max(1.0, 1.0 / l4) * (1.0 + l4)


def suscept_bound(lip: float, r: float, t: float, b_norm: float) -> float:
    """Upper bound on sup_{|x-a|<=r/4} E|u_t(x) - v_t(x)|^2 when u0 = v0 on [a-r, a+r]."""
    if lip <= 0 or r <= 0 or t <= 0 or b_norm < 0:
        raise ValueError("need lip, r, t > 0 and b_norm >= 0")
    if b_norm == 0:
        return 0.0
    arg = -(r * r) / (16.0 * t) + lip**4 * t / 4.0
    return suscept_constant(lip) * b_norm**2 * _exp(arg)


def moment_bounds(k: float, t: float, u0_val: float, a_const: float = DEFAULT_A):
    """(A^-k u0^k e^{k^3 t / A}, A^k u0^k e^{A k^3 t}) for flat initial level u0."""
    if k < 2 or t < 0 or u0_val <= 0 or a_const <= 2:
        raise ValueError("need k >= 2, t >= 0, u0_val > 0 and A > 2")
    log_u = math.log(u0_val)
    lo = -k * math.log(a_const) + k * log_u + k**3 * t / a_const
    hi = k * math.log(a_const) + k * log_u + a_const * k**3 * t
    return _exp(lo), _exp(hi)


def chebyshev_tail_bound(epsilon: float, t: float, u0_val: float, a_const: float = DEFAULT_A) -> float:
    """exp(-(2 / (3 sqrt(3 A t))) [log(eps / (2 A u0))]^{3/2}), the optimized moment bound."""
    if t <= 0 or u0_val <= 0 or a_const <= 2:
        raise ValueError("need t > 0, u0_val > 0 and A > 2")
    ratio = epsilon / (2.0 * a_const * u0_val)
    if ratio <= 1.0:
        raise ValueError("epsilon must exceed 2 A u0_val for the bound to be informative")
    return math.exp(-(2.0 / (3.0 * math.sqrt(3.0 * a_const * t))) * math.log(ratio) ** 1.5)


def pam_second_moment(lam: float, t: float) -> float:
    """E u_t(x)^2 for sigma(u) = lam u and u0 = 1: 2 exp(lam^4 t/4) Phi(lam^2 sqrt(t/2))."""
    if lam <= 0 or t < 0:
        raise ValueError("need lam > 0 and t >= 0")
    return float(renewal_growth(lam, t))


def tail_exponent_envelope(lambda_idx, t: float, k_const: float = DEFAULT_K,
                           l_const: float = DEFAULT_L):
    """(-L Lambda^{3/2}/sqrt t, -K Lambda^{3/2}/sqrt t): lower and upper tail-exponent overlays."""
    if lambda_idx is INFINITE_INDEX:
        raise ValueError("tail exponent envelope is only defined for a finite decay index")
    if lambda_idx < 0 or t <= 0 or not 0 < k_const <= l_const:
        raise ValueError("need lambda >= 0, t > 0 and 0 < K <= L")
    m = lambda_idx**1.5 / math.sqrt(t)
    return -l_const * m, -k_const * m


def derived_L(a_const: float = DEFAULT_A) -> float:
    """L = 8 A^{5/2} + A^{1/2}, the composition appearing in the lower-tail argument."""
    return 8.0 * a_const**2.5 + math.sqrt(a_const)


def bounds_table(lips=(0.5, 1.0, 2.0), rs=(2.0, 4.0, 8.0), ts=(0.05, 0.1, 0.5, 1.0),
                 ks=(2, 3, 4), a_const: float = DEFAULT_A, epsilons=(0.1, 1.0),
                 u0_vals=(0.001, 0.01)) -> dict:
    """Bound values over a fixed parameter lattice, for printing and archiving."""
    suscept = [
        {"lip": lip, "r": r, "t": t, "b_norm": 1.0, "value": suscept_bound(lip, r, t, 1.0)}
        for lip in lips for r in rs for t in ts
    ]
    moments = []
    for k in ks:
        for t in ts:
            lo, hi = moment_bounds(k, t, 1.0, a_const)
            moments.append({"k": k, "t": t, "u0": 1.0, "A": a_const, "lower": lo, "upper": hi})
    tails = []
    for eps in epsilons:
        for u0 in u0_vals:
            for t in ts:
                if eps > 2 * a_const * u0:
                    tails.append({"epsilon": eps, "u0": u0, "t": t, "A": a_const,
                                  "value": chebyshev_tail_bound(eps, t, u0, a_const)})
    pam = [{"lam": 1.0, "t": t, "value": pam_second_moment(1.0, t)} for t in ts]
    return {"suscept_bound": suscept, "moment_bounds": moments,
            "chebyshev_tail_bound": tails, "pam_second_moment": pam}
