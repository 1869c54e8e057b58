"""Velocity profiles, density-system constants, and forcing norms.

The scalar solvers here feed every slack budget downstream, so the frozen
values are checked tight: closed forms at 1e-10 relative, hand arithmetic
exactly.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmcflow import GridSpec
from gmcflow.profiles import (
    MonotoneProfile,
    ForcingSpec,
    solve_density_system,
    liminf_ratio_probe,
    constant_C1,
    morrey_gamma,
)

alpha_strategy = st.floats(min_value=0.3, max_value=4.0)
radius_strategy = st.floats(min_value=1e-3, max_value=1e3)
signed_radius_strategy = st.floats(min_value=-1e3, max_value=1e3)


# ---------------------------------------------------------------- eval

def test_power_eval_values():
    assert MonotoneProfile.power(1.0)(2.0) == 2.0
    assert MonotoneProfile.power(3.0)(-2.0) == -8.0
    assert MonotoneProfile.power(0.5)(4.0) == pytest.approx(2.0, rel=1e-14)


def test_linear_eval():
    f = MonotoneProfile.linear(2.5)
    assert f(2.0) == 5.0
    assert f(-2.0) == -5.0
    assert f(0.0) == 0.0


@given(alpha=alpha_strategy, r=radius_strategy)
@settings(max_examples=200, deadline=None)
def test_power_odd_and_increasing(alpha, r):
    f = MonotoneProfile.power(alpha)
    assert f(-r) == -f(r)
    assert f(r * 1.01) > f(r)
    assert f(0.0) == 0.0


# ---------------------------------------------------------------- inverse

def test_inverse_values():
    assert MonotoneProfile.power(1.0).inverse(5.0) == pytest.approx(5.0, rel=1e-10)
    assert MonotoneProfile.power(2.0).inverse(9.0) == pytest.approx(3.0, rel=1e-10)
    # bisection root of r^3 = -8
    assert MonotoneProfile.power(3.0).inverse(-8.0) == pytest.approx(-2.0, rel=1e-10)


@given(alpha=alpha_strategy, r=signed_radius_strategy)
@settings(max_examples=200, deadline=None)
def test_inverse_of_eval_is_identity(alpha, r):
    f = MonotoneProfile.power(alpha)
    rr = f.inverse(f(r))
    assert rr == pytest.approx(r, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------- tables

def _sinh_table():
    rs = np.linspace(0.0, 6.0, 121)
    return MonotoneProfile.from_table(list(zip(rs, np.sinh(rs))))


def test_table_roundtrip_and_oddness():
    f = _sinh_table()
    for r in (0.3, 1.0, 2.5):
        assert f(-r) == pytest.approx(-f(r), abs=1e-12)
        assert f.inverse(f(r)) == pytest.approx(r, rel=1e-8)


def test_table_hull_query_errors():
    f = _sinh_table()
    with pytest.raises(ValueError):
        f(7.0)
    with pytest.raises(ValueError):
        f.inverse(2.0 * math.sinh(6.0))


def test_table_requires_increasing_samples():
    with pytest.raises(ValueError):
        MonotoneProfile.from_table([(0.1, 1.0), (0.2, 0.5), (0.3, 2.0)])


# ---------------------------------------------------------------- density system

def test_density_system_linear_case():
    """f(r)=r reduces the system to two quadratics; check both roots."""
    dc = solve_density_system(MonotoneProfile.power(1.0), 1.0, 1.0, 0.01)
    assert dc.rho_tau == pytest.approx(0.1, rel=1e-10)
    # r*(r+2*rho)/tau = 1 has the positive root sqrt(tau)*(sqrt(2)-1)
    assert dc.r_tau == pytest.approx(math.sqrt(0.01) * (math.sqrt(2.0) - 1.0), rel=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
@pytest.mark.parametrize("tau", [1.0, 1e-2, 1e-4])
def test_rho_tau_closed_form(alpha, tau):
    vs0 = 1.7
    dc = solve_density_system(MonotoneProfile.power(alpha), vs0, 1.0, tau)
    closed = vs0 ** (1.0 / (1.0 + alpha)) * tau ** (alpha / (1.0 + alpha))
    assert dc.rho_tau == pytest.approx(closed, rel=1e-10)


def test_density_system_residuals():
    f = MonotoneProfile.power(3.0)
    dc = solve_density_system(f, 2.0, 0.7, 1e-3)
    assert dc.rho_tau * f(dc.rho_tau / 1e-3) == pytest.approx(2.0, rel=1e-10)
    assert dc.r_tau * f((dc.r_tau + 2 * dc.rho_tau) / 1e-3) == pytest.approx(0.7, rel=1e-10)


def _exp_table():
    # exponential growth through the origin; large-r behavior is e^r
    rs = np.linspace(0.0, 60.0, 400)
    return MonotoneProfile.from_table(list(zip(rs, np.expm1(rs))))


def test_exponential_profile_ratio_collapse():
    """Exponential growth makes r_tau/tau collapse; the probe must flag it."""
    grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    rows, plausible = liminf_ratio_probe(_exp_table(), 1.0, 1.0, grid)
    ratios = [ratio for _, ratio in rows]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] < 0.05 * ratios[0]
    assert not plausible


def test_power_profiles_ratio_bounded_below():
    grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    rows1, flag1 = liminf_ratio_probe(MonotoneProfile.power(1.0), 1.0, 1.0, grid)
    assert flag1
    assert min(ratio for _, ratio in rows1) > 0.1
    rows3, flag3 = liminf_ratio_probe(MonotoneProfile.power(3.0), 1.0, 1.0, grid)
    assert flag3
    r3 = [ratio for _, ratio in rows3]
    assert all(b > a for a, b in zip(r3, r3[1:]))


# ---------------------------------------------------------------- C1 and Morrey

def test_constant_C1_hand_arithmetic():
    assert constant_C1(1.0, 1.0, 2) == pytest.approx(256.0 / 9.0, rel=1e-14)
    assert constant_C1(1.0, 1.0, 3) == pytest.approx(6.0 * (8.0 / 3.0) ** 3, rel=1e-14)
    assert constant_C1(1.0, 2.0, 2) == pytest.approx(2048.0 / 9.0, rel=1e-14)


def test_morrey_gamma_q_infinity_closed_form():
    grid = GridSpec((32, 32), (-1.0, -1.0), (1.0, 1.0))
    assert morrey_gamma(ForcingSpec.zero(), 1.0, 2, grid) == 0.5
    assert morrey_gamma(ForcingSpec.constant(1.0), 1.0, 2, grid) == 0.25


def test_morrey_gamma_zero_forcing_q_n():
    grid = GridSpec((32, 32), (-1.0, -1.0), (1.0, 1.0))
    g = ForcingSpec.zero()
    g.q = 2
    gamma = morrey_gamma(g, 1.0, 2, grid)
    assert gamma > 0.0


def test_morrey_gamma_rejects_small_exponent():
    grid = GridSpec((32, 32), (-1.0, -1.0), (1.0, 1.0))
    g = ForcingSpec.constant(1.0, q=1.5)
    with pytest.raises(ValueError):
        morrey_gamma(g, 1.0, 2, grid)


# ---------------------------------------------------------------- forcing

def test_constant_forcing_norms():
    grid = GridSpec((64, 64), (-1.0, -1.0), (1.0, 1.0))
    g = ForcingSpec.constant(0.75)
    sup, l1, lq = g.norms(grid)
    assert sup == pytest.approx(0.75)
    assert l1 == pytest.approx(0.75 * 4.0, rel=1e-12)
    assert lq == sup  # q = inf convention


def test_bump_forcing_peaks_at_center():
    grid = GridSpec((64, 64), (-1.0, -1.0), (1.0, 1.0))
    g = ForcingSpec.bump((0.25, 0.0), 0.4, 2.0)
    vals = g.sample(grid)
    assert vals.max() == pytest.approx(2.0, rel=0.05)
    assert vals.min() >= 0.0


def test_sum_forcing_additive():
    grid = GridSpec((32, 32), (-1.0, -1.0), (1.0, 1.0))
    g = ForcingSpec.sum([ForcingSpec.constant(0.5), ForcingSpec.constant(0.25)])
    assert np.allclose(g.sample(grid), 0.75)
