import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erf

from conftest import random_profile
from critmass.energetics import (
    EnergyReport,
    critical_mass,
    cstar_from_critical_mass,
    dissipation,
    energy_report,
    free_energy,
    gaussian_energy_curve,
    gaussian_profile,
    lm_bound_gap,
    rescaled_energy,
    vhls_ratio,
)
from critmass.errors import DegenerateProfileError, InvalidArgumentError
from critmass.radial import (
    ModelParams,
    ball_indicator,
    lm_norm_m,
    make_grid,
    mass,
    rescale,
    second_moment,
    zero_profile,
)
from critmass.stationary import stationary_profile

PI = math.pi


@pytest.fixture(scope="module")
def ball():
    return ball_indicator(make_grid(3, 1.0, 64))


def test_zero_profile_energies():
    z = zero_profile(make_grid(3, 1.0, 8))
    assert free_energy(z) == 0.0
    assert rescaled_energy(z) == 0.0
    assert dissipation(z) == 0.0
    with pytest.raises(DegenerateProfileError):
        vhls_ratio(z)


def test_ball_closed_forms(ball):
    assert free_energy(ball) == pytest.approx(56 * PI / 15, rel=1e-13)
    assert rescaled_energy(ball) == pytest.approx(56 * PI / 15 + 2 * PI / 5, rel=1e-13)
    expected = (32 * PI**2 / 15) / ((4 * PI / 3) ** (2 / 3) * (4 * PI / 3))
    assert vhls_ratio(ball) == pytest.approx(expected, rel=1e-13)
    assert vhls_ratio(ball) == pytest.approx(1.9345, abs=1e-3)


def test_ratio_invariances():
    rng = np.random.default_rng(2)
    p = random_profile(rng)
    lam = vhls_ratio(p)
    for s in (0.3, 2.0, 7.0):
        assert vhls_ratio(rescale(p, s)) == pytest.approx(lam, rel=1e-10)
    assert vhls_ratio(p.scaled(2.0)) == pytest.approx(lam, rel=1e-12)


def test_critical_mass_formula():
    par = ModelParams(3)
    c = 2.183
    assert critical_mass(par, c) == pytest.approx((24 * PI / c) ** 1.5, rel=1e-14)
    assert critical_mass(par, 2 * c) / critical_mass(par, c) == pytest.approx(2**-1.5, rel=1e-14)
    assert cstar_from_critical_mass(par, critical_mass(par, c)) == pytest.approx(c, rel=1e-14)
    with pytest.raises(InvalidArgumentError):
        critical_mass(par, 0.0)


def test_lm_bound_gap_ball(le3, mc3, ball):
    lo, hi = lm_bound_gap(ball, le3.vhls_ratio, mc3)
    n = lm_norm_m(ball, 4 / 3)
    assert lo >= -1e-8 * n and hi >= -1e-8 * n


def test_lm_bound_gap_stationary(par3, le3, mc3):
    V = stationary_profile(par3, le3, 1.0, make_grid(3, 1.0, 2048))
    lo, hi = lm_bound_gap(V, le3.vhls_ratio, mc3)
    scale = lm_norm_m(V, par3.m) / (par3.m - 1)
    assert abs(lo) <= 1e-5 * scale
    assert hi > 0


def test_lm_bound_without_interaction(par3):
    # with W = 0 the lower slack is F minus the mass term alone
    p = ball_indicator(make_grid(3, 1.0, 16))
    c_star, m_c = 2.0, 300.0
    lo, _ = lm_bound_gap(p, c_star, m_c)
    n = lm_norm_m(p, par3.m)
    lower = 0.5 * c_star * par3.c_d * n * (m_c ** (2 / 3) - mass(p) ** (2 / 3))
    assert lo == pytest.approx(free_energy(p) - lower, rel=1e-14)


def _gaussian_dissipation_oracle(t=1.0, M=1.0):
    m = 4 / 3

    def u(r):
        return M * (4 * PI * t) ** -1.5 * math.exp(-r * r / (4 * t))

    def integrand(r):
        ur = u(r)
        du = -r / (2 * t) * ur
        dw = (2 * m - 1) / 2 * ur ** ((2 * m - 3) / 2) * du
        q = M * (erf(r / (2 * math.sqrt(t))) - r / math.sqrt(PI * t) * math.exp(-r * r / (4 * t)))
        dphi = -q / (4 * PI * r * r)
        flux = 2 * m / (2 * m - 1) * dw - math.sqrt(ur) * dphi
        return 4 * PI * r * r * flux**2

    return quad(integrand, 1e-12, 12 * math.sqrt(t), epsabs=0, epsrel=1e-12, limit=200)[0]


def test_dissipation_of_gaussian_matches_quadrature():
    oracle = _gaussian_dissipation_oracle()
    assert oracle > 0
    assert dissipation(gaussian_profile(3, 1.0, 1.0, 2048)) == pytest.approx(oracle, rel=1e-4)


def test_dissipation_of_stationary_profile_is_small(par3, le3):
    vals = []
    for n in (512, 1024):
        V = stationary_profile(par3, le3, 1.0, make_grid(3, 1.0, n))
        vals.append(dissipation(V) / lm_norm_m(V, par3.m))
    assert vals[1] < 1e-6
    assert vals[1] < vals[0]


def test_rescaled_dissipation_of_self_similar_profile_is_small(par3, mc3):
    from critmass.stationary import self_similar_profile, self_similar_solution

    W = self_similar_profile(par3, 0.5 * mc3, mc3)
    p = self_similar_solution(par3, W, 0.0, make_grid(3, W.support_radius, 1024))
    assert dissipation(p, "rescaled") < 1e-6 * lm_norm_m(p, par3.m)
    assert dissipation(p, "original") > 1.0
    with pytest.raises(InvalidArgumentError):
        dissipation(p, "moving")


def test_gaussian_curve_decreases(par3, mc3):
    F = gaussian_energy_curve(par3, 0.5 * mc3, [1.0, 10.0, 100.0])
    assert F[0] > F[1] > F[2] > 0


def test_gaussian_lm_decay_slope(par3):
    ts = np.array([1.0, 10.0, 100.0, 1000.0])
    norms = [lm_norm_m(gaussian_profile(3, 1.0, t), par3.m) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
    assert slope == pytest.approx(-0.5, abs=1e-6)


def test_gaussian_curve_tail(par3, mc3):
    F = gaussian_energy_curve(par3, 0.5 * mc3, [1.0, 1e6])
    # exact scaling makes the ratio 1e-3 up to roundoff
    assert F[1] <= 1e-3 * F[0] * (1 + 1e-9)
    assert F[1] == pytest.approx(1e-3 * F[0], rel=1e-9)


def test_gaussian_curve_rejects_bad_times(par3):
    with pytest.raises(InvalidArgumentError):
        gaussian_energy_curve(par3, 1.0, [2.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        gaussian_energy_curve(par3, 1.0, [0.0, 1.0])


def test_gaussian_profile_has_requested_mass():
    assert mass(gaussian_profile(3, 2.5, 0.3)) == pytest.approx(2.5, rel=1e-10)


def test_constants_self_consistency(par3, le3):
    V = stationary_profile(par3, le3, 1.0, make_grid(3, 1.0, 2048))
    assert critical_mass(par3, vhls_ratio(V)) == pytest.approx(mass(V), rel=1e-6)


def test_energy_report_fields(ball):
    r = energy_report(ball)
    assert isinstance(r, EnergyReport)
    assert r.free_energy == pytest.approx(r.lm_norm_m * 3 - r.interaction / (8 * PI), rel=1e-15)
    assert r.rescaled_energy == r.free_energy + r.second_moment / 2
    data = json.loads(r.to_json())
    assert list(data) == [
        "mass",
        "lm_norm_m",
        "second_moment",
        "interaction",
        "free_energy",
        "rescaled_energy",
        "vhls_ratio",
    ]
    assert energy_report(zero_profile(ball.grid)).vhls_ratio is None


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(3, 5))
def test_scaling_law_property(seed, d):
    rng = np.random.default_rng(seed)
    p = random_profile(rng, d=d, n=40)
    F = free_energy(p)
    for lam in (0.5, 2.0, 5.0):
        assert abs(free_energy(rescale(p, lam)) - lam ** (d - 2) * F) <= 1e-8 * (1 + abs(F))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.01, 0.99))
def test_subcritical_energy_positive(seed, frac):
    rng = np.random.default_rng(seed)
    p = random_profile(rng, n=40)
    p = p.scaled(frac * 202.8952075765 / mass(p))
    assert free_energy(p) > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rescaled_energy_dominates(seed):
    rng = np.random.default_rng(seed)
    p = random_profile(rng, n=30)
    assert rescaled_energy(p) >= free_energy(p)
    assert second_moment(p) >= 0
