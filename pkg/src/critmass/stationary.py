"""Shooting solvers for the radial free-boundary profiles.

Two ODEs are integrated outward from the origin until the unknown first
vanishes:

* Lane-Emden type, ``theta'' + (d-1)/r theta' + (m-1)/m theta^{1/(m-1)} = 0``,
  whose solution on the unit ball generates every free-energy minimiser at
  the critical mass;
* the confined variant with source ``(m-1)/m (theta^{1/(m-1)} + d)``, whose
  solution with prescribed mass is the self-similar profile.

Alongside ``theta`` the integrator carries the running integrals needed by
the energy functionals (mass, ``||.||_m^m``, second moment, the Newton
double integral), so those come out at ODE accuracy instead of grid
accuracy.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (
    InvalidArgumentError,
    MassNotBracketedError,
    NoZeroFoundError,
    SupportExceedsDomainError,
)
from .radial import ModelParams, RadialGrid, RadialProfile, profile_from_function, remap, rescale

LANE_EMDEN = "lane_emden"
SELF_SIMILAR = "self_similar"
EPS_GUARD = 1e-3
_START_FRACTION = 1e-4
_CAP_FACTOR = 1e3
_N_SAMPLES = 2001

# state layout: theta, theta', Q, ||w||_m^m, M2, int r Q w dr, int r w dr
_TH, _DTH, _Q, _N, _M2, _I, _S = range(7)


@dataclass(frozen=True, eq=False)
class _Trajectory:
    dense: object
    support_radius: float
    central_value: float
    totals: np.ndarray


def _shoot(params: ModelParams, a: float, kappa: float, rtol: float) -> _Trajectory:
    d, m, sig = params.d, params.m, params.sigma_d
    p = params.density_exponent
    c = (m - 1) / m
    forcing0 = c * (a**p + kappa)
    scale = math.sqrt(a / forcing0)
    r0 = _START_FRACTION * scale
    w0 = a**p
    # regular-singular start: theta = a - forcing0 r^2/(2d) + O(r^4)
    y0 = np.array(
        [
            a - forcing0 * r0**2 / (2 * d),
            -forcing0 * r0 / d,
            sig * w0 * r0**d / d,
            sig * w0**m * r0**d / d,
            sig * w0 * r0 ** (d + 2) / (d + 2),
            sig * w0**2 * r0 ** (d + 2) / (d * (d + 2)),
            w0 * r0**2 / 2,
        ]
    )

    def rhs(r, y):
        w = max(y[_TH], 0.0) ** p
        rd1 = r ** (d - 1)
        return [
            y[_DTH],
            -(d - 1) / r * y[_DTH] - c * (w + kappa),
            sig * w * rd1,
            sig * w**m * rd1,
            sig * w * rd1 * r * r,
            r * y[_Q] * w,
            r * w,
        ]

    def hits_zero(r, y):
        return y[_TH]

    hits_zero.terminal = True
    hits_zero.direction = -1

    sol = solve_ivp(
        rhs,
        (r0, _CAP_FACTOR * scale),
        y0,
        method="RK45",
        rtol=rtol,
        atol=rtol * 1e-6 * np.maximum(np.abs(y0), 1e-300) + 1e-300,
        events=hits_zero,
        dense_output=True,
    )
    if sol.status == -1:
        raise RuntimeError(f"shooting integration failed: {sol.message}")
    if sol.t_events[0].size == 0:
        raise NoZeroFoundError(
            f"trajectory from theta(0)={a} stayed positive up to r={_CAP_FACTOR * scale:g}"
        )
    return _Trajectory(sol.sol, float(sol.t_events[0][0]), a, np.array(sol.y_events[0][0]))


@dataclass(frozen=True, eq=False)
class ShootingSolution:
    """A radial profile from one of the two shooting problems.

    ``theta`` is the Lane-Emden unknown (units of ``u^{m-1}``); the induced
    density is ``theta^{1/(m-1)}``. The stored trajectory may be a dilated
    copy ``amp * theta_raw(mu r)`` of the integrated one (``amp = mu^{d-2}``),
    which is how the unit-ball Lane-Emden solution is represented.
    """

    d: int
    kind: str
    grid_r: np.ndarray
    theta: np.ndarray
    support_radius: float
    central_value: float
    mass: float
    lm_norm_m: float
    second_moment: float
    interaction: float
    _traj: _Trajectory = field(repr=False)
    _mu: float = field(default=1.0, repr=False)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.d)

    @property
    def _amp(self) -> float:
        return self._mu ** (self.d - 2)

    def _raw(self, r, index):
        r = np.asarray(r, dtype=float)
        rr = np.clip(self._mu * r, 0.0, self._traj.support_radius)
        return self._traj.dense(rr.ravel())[index].reshape(rr.shape)

    def evaluate(self, r) -> np.ndarray:
        """theta at radius ``r``; zero outside the support."""
        r = np.asarray(r, dtype=float)
        out = self._amp * self._raw(r, _TH)
        small = self._mu * r < self._traj.dense.t_min
        out = np.where(small, self._amp * self._series(self._mu * r), out)
        return np.where(r >= self.support_radius, 0.0, np.maximum(out, 0.0))

    def _series(self, r):
        par = self.params
        a = self._traj.central_value
        kappa = 0.0 if self.kind == LANE_EMDEN else par.d
        return a - (par.m - 1) / par.m * (a**par.density_exponent + kappa) * r**2 / (2 * par.d)

    def density(self, r) -> np.ndarray:
        return self.evaluate(r) ** self.params.density_exponent

    def cumulative_mass(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.where(r >= self.support_radius, self.mass, self._raw(r, _Q))

    def potential(self, r) -> np.ndarray:
        """Newtonian potential K * density at ``r > 0`` by Newton's theorem."""
        par = self.params
        r = np.asarray(r, dtype=float)
        s_tot = self._traj.totals[_S]
        s_r = np.where(self._mu * r >= self._traj.support_radius, s_tot, self._raw(r, _S))
        q_r = self.cumulative_mass(r)
        outer = par.sigma_d * self._amp * (s_tot - s_r)
        return par.c_d * (q_r / r ** (par.d - 2) + outer)

    @property
    def free_energy(self) -> float:
        par = self.params
        return self.lm_norm_m / (par.m - 1) - 0.5 * par.c_d * self.interaction

    @property
    def rescaled_energy(self) -> float:
        return self.free_energy + 0.5 * self.second_moment

    @property
    def vhls_ratio(self) -> float:
        return self.interaction / (self.mass ** (2.0 / self.d) * self.lm_norm_m)


def _solution(params, kind, traj, mu=1.0) -> ShootingSolution:
    d = params.d
    sig = params.sigma_d
    t = traj.totals
    support = traj.support_radius / mu
    r = np.linspace(0.0, support, _N_SAMPLES)
    out = ShootingSolution(
        d=d,
        kind=kind,
        grid_r=r,
        theta=np.zeros(0),
        support_radius=support,
        central_value=traj.central_value * mu ** (d - 2),
        mass=float(t[_Q]),
        lm_norm_m=float(t[_N]) * mu ** (d - 2),
        second_moment=float(t[_M2]) / mu**2,
        interaction=2.0 * sig * float(t[_I]) * mu ** (d - 2),
        _traj=traj,
        _mu=mu,
    )
    theta = out.evaluate(r)
    theta[0] = out.central_value
    theta.setflags(write=False)
    r.setflags(write=False)
    object.__setattr__(out, "theta", theta)
    return out


def lane_emden_unit_ball(params: ModelParams, tol: float = 1e-10, a0: float = 1.0) -> ShootingSolution:
    """Positive radial Lane-Emden solution vanishing on the unit sphere.

    The trajectory is shot from ``theta(0) = a0`` and moved onto the unit
    ball with the exact symmetry ``theta -> mu^{d-2} theta(mu r)``; the
    result does not depend on ``a0``.
    """
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    if not a0 > 0:
        raise InvalidArgumentError("a0 must be positive")
    traj = _shoot(params, a0, 0.0, tol / 10)
    return _solution(params, LANE_EMDEN, traj, mu=traj.support_radius)


def stationary_profile(params: ModelParams, sol: ShootingSolution, R: float, grid: RadialGrid) -> RadialProfile:
    """Cell averages of ``V_R(x) = R^{-d} zeta(x/R)^{d/(d-2)}``.

    Every member of this family is a steady state with mass M_c.
    """
    if sol.kind != LANE_EMDEN:
        raise InvalidArgumentError("stationary profiles are built from the Lane-Emden solution")
    if not R > 0:
        raise InvalidArgumentError("R must be positive")
    if R * sol.support_radius > grid.R_max * (1 + 1e-14):
        raise SupportExceedsDomainError(f"support radius {R} exceeds grid R_max={grid.R_max}")
    d = params.d
    return profile_from_function(grid, lambda r: R**-d * sol.density(r / R), support=R * sol.support_radius)


def unit_norm_stationary_profile(params: ModelParams, sol: ShootingSolution, grid: RadialGrid) -> RadialProfile:
    """The member of the critical family with ``||V||_m = 1``."""
    R = sol.lm_norm_m ** (1.0 / (params.d - 2))
    return stationary_profile(params, sol, R, grid)


def estimate_cstar(params: ModelParams, sol: ShootingSolution, grid: RadialGrid | None = None) -> float:
    """Sharp VHLS constant as the ratio evaluated at the critical profile.

    Without a grid the ratio uses the integrals carried by the shooting
    solution; with a grid it is the discrete ratio of the cell-averaged
    profile filling that grid.
    """
    if sol.kind != LANE_EMDEN:
        raise InvalidArgumentError("C* is estimated from the Lane-Emden solution")
    if grid is None:
        return sol.vhls_ratio
    from .energetics import vhls_ratio

    return vhls_ratio(stationary_profile(params, sol, grid.R_max / sol.support_radius, grid))


def shoot_self_similar(params: ModelParams, a: float, tol: float = 1e-10) -> ShootingSolution:
    """Confined-equation trajectory from central value ``a``."""
    return _solution(params, SELF_SIMILAR, _shoot(params, a, float(params.d), tol / 10))


def self_similar_profile(params: ModelParams, M: float, m_c: float, tol: float = 1e-10) -> ShootingSolution:
    """Self-similar profile of mass ``M``, found by shooting on the central value.

    The central value is bracketed (geometric growth, at most 60 doublings
    or halvings) and then refined by Brent's method on ``log a`` until
    ``|mass(a) - M| <= tol * M``.
    """
    if not M > 0:
        raise InvalidArgumentError(f"mass must be positive, got {M}")
    if M >= m_c * (1 - EPS_GUARD):
        raise MassNotBracketedError(
            f"M/M_c = {M / m_c:.6g}: no self-similar profile at or above {1 - EPS_GUARD} M_c"
        )
    cache: dict[float, ShootingSolution] = {}

    def run(log_a):
        if log_a not in cache:
            cache[log_a] = shoot_self_similar(params, math.exp(log_a), tol)
        return cache[log_a]

    def excess(log_a):
        return run(log_a).mass / M - 1.0

    lo = hi = 0.0
    if excess(0.0) > 0:
        for _ in range(60):
            lo -= math.log(2)
            if excess(lo) < 0:
                break
        else:
            raise MassNotBracketedError(f"mass {M} below every trajectory tried")
        hi = lo + math.log(2)
    else:
        for _ in range(60):
            hi += math.log(2)
            if excess(hi) > 0:
                break
        else:
            raise MassNotBracketedError(f"mass {M} not reached after 60 doublings of theta(0)")
        lo = hi - math.log(2)
    log_a = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    best = min(cache.values(), key=lambda s: abs(s.mass - M))
    if abs(run(log_a).mass - M) <= abs(best.mass - M):
        best = run(log_a)
    if abs(best.mass - M) > tol * M:
        raise MassNotBracketedError(f"mass matched only to {abs(best.mass / M - 1):.3g} relative")
    return best


def self_similar_solution(params: ModelParams, W_M, t: float, grid: RadialGrid) -> RadialProfile:
    """Exact self-similar solution ``(1+dt)^{-1} W_M(x (1+dt)^{-1/d})``.

    ``W_M`` may be the shooting solution (sampled by quadrature) or a
    cell-averaged profile (transferred conservatively).
    """
    if not t >= 0:
        raise InvalidArgumentError("t must be non-negative")
    d = params.d
    s = (1 + d * t) ** (1.0 / d)
    if isinstance(W_M, ShootingSolution):
        support = W_M.support_radius * s
        if support > grid.R_max * (1 + 1e-14):
            raise SupportExceedsDomainError(f"support {support:g} exceeds R_max={grid.R_max:g}")
        return profile_from_function(grid, lambda r: W_M.density(r / s) / s**d, support=support)
    support = W_M.support_radius() * s
    if support > grid.R_max * (1 + 1e-14):
        raise SupportExceedsDomainError(f"support {support:g} exceeds R_max={grid.R_max:g}")
    moved = rescale(W_M, 1.0 / s)
    return moved if moved.grid == grid else remap(moved, grid)


def self_similar_identities(sol: ShootingSolution) -> dict[str, float]:
    """Relative residuals of the virial-type identities for a self-similar profile.

    ``A2_F``: (M2 - (d-2) F)/M2, ``A2_G``: (M2 - 2(m-1) G)/M2 and
    ``A3``: the L^m/second-moment balance with right side
    ``2m/(m-1) M^m + M``, divided by M.
    """
    par = sol.params
    m, d, M = par.m, par.d, sol.mass
    M2 = sol.second_moment
    lhs3 = 2 * m / (m - 1) * sol.lm_norm_m + M2
    rhs3 = 2 * m / (m - 1) * M**m + M
    return {
        "A2_F": (M2 - (d - 2) * sol.free_energy) / M2,
        "A2_G": (M2 - 2 * (m - 1) * sol.rescaled_energy) / M2,
        "A3": (lhs3 - rhs3) / M,
    }


@dataclass(frozen=True)
class EulerLagrangeCheck:
    max_residual: float
    fitted_constant: float
    boundary_constant: float
    closed_form_constant: float


def euler_lagrange_check(sol: ShootingSolution, n_samples: int = 4001) -> EulerLagrangeCheck:
    """Compare ``m/(m-1) W^{m-1}`` with ``K*W - r^2/2 + const`` on the support.

    The constant is fitted at the origin. It is also reported as implied by
    the free boundary (``rho^2/2 - c_d M / rho^{d-2}``) and by the closed
    form ``1/2 + m/(m-1) M^{m-1} - c_d W(W)/M``.
    """
    if sol.kind != SELF_SIMILAR:
        raise InvalidArgumentError("Euler-Lagrange check applies to self-similar profiles")
    par = sol.params
    m, d = par.m, par.d
    rho = sol.support_radius
    # skip the origin itself: Newton's formula is evaluated at r > 0
    r = np.linspace(rho * 1e-6, rho, n_samples)
    lhs = m / (m - 1) * sol.evaluate(r)
    rhs_no_const = sol.potential(r) - r**2 / 2
    phi0 = par.c_d * par.sigma_d * sol._traj.totals[_S]
    fitted = m / (m - 1) * sol.central_value - phi0
    resid = np.max(np.abs(lhs - rhs_no_const - fitted))
    boundary = rho**2 / 2 - par.c_d * sol.mass / rho ** (d - 2)
    closed = 0.5 + m / (m - 1) * sol.mass ** (m - 1) - par.c_d * sol.interaction / sol.mass
    return EulerLagrangeCheck(float(resid), float(fitted), float(boundary), float(closed))


def write_shooting_solution(sol: ShootingSolution, csv_path) -> Path:
    """Write ``r,theta`` samples and a JSON sidecar next to them."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "theta"])
        for r, th in zip(sol.grid_r, sol.theta):
            w.writerow([f"{r:.17g}", f"{th:.17g}"])
    side = csv_path.with_suffix(".json")
    side.write_text(
        json.dumps(
            {
                "kind": sol.kind,
                "support_radius": sol.support_radius,
                "central_value": sol.central_value,
                "mass": sol.mass,
            },
            indent=2,
        )
    )
    return side
