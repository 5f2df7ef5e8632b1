import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from critmass.energetics import critical_mass
from critmass.radial import ModelParams, RadialProfile, make_grid
from critmass.stationary import lane_emden_unit_ball


def classical_lane_emden_n3():
    """First zero and slope of theta'' + (2/r) theta' + theta^3 = 0, theta(0)=1.

    Eighth-order Dormand-Prince integration from a three-term series start,
    kept apart from the package's own shooting code.
    """
    r0 = 1e-3
    th0 = 1 - r0**2 / 6 + r0**4 / 40
    dth0 = -r0 / 3 + r0**3 / 10

    def rhs(r, y):
        return [y[1], -2.0 / r * y[1] - y[0] ** 3]

    def zero(r, y):
        return y[0]

    zero.terminal = True
    zero.direction = -1
    sol = solve_ivp(rhs, (r0, 20.0), [th0, dth0], method="DOP853", rtol=1e-13, atol=1e-15, events=zero)
    xi1 = float(sol.t_events[0][0])
    slope = float(sol.y_events[0][0][1])
    return xi1, slope


@pytest.fixture(scope="session")
def le_oracle():
    return classical_lane_emden_n3()


@pytest.fixture(scope="session")
def par3():
    return ModelParams(3)


@pytest.fixture(scope="session")
def le3(par3):
    return lane_emden_unit_ball(par3)


@pytest.fixture(scope="session")
def mc3(par3, le3):
    return critical_mass(par3, le3.vhls_ratio)


def random_profile(rng, d=3, n=64, R=2.0, support=0.8):
    """Non-negative random cell profile vanishing beyond ``support * R``."""
    g = make_grid(d, R, n)
    vals = rng.random(n) * (g.centers < support * R)
    vals[0] = max(vals[0], 0.1)
    return RadialProfile(g, vals)


def hls_sharp_constant(d, lam):
    """Closed-form sharp HLS constant for p = q = 2d/(2d - lam)."""
    return (
        math.pi ** (lam / 2)
        * math.gamma(d / 2 - lam / 2)
        / math.gamma(d - lam / 2)
        * (math.gamma(d / 2) / math.gamma(d)) ** (-1 + lam / d)
    )


__all__ = ["random_profile", "hls_sharp_constant", "np"]
