"""Free energies, the VHLS ratio, the critical mass and dissipation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateProfileError, InvalidArgumentError
from .poisson import field_from_cumulative, interaction_energy
from .radial import (
    ModelParams,
    RadialProfile,
    cumulative_mass,
    lm_norm_m,
    make_grid,
    mass,
    profile_from_function,
    second_moment,
)


def _params(p: RadialProfile) -> ModelParams:
    return ModelParams(p.d)


def free_energy(p: RadialProfile) -> float:
    """F[p] = ||p||_m^m/(m-1) - (c_d/2) W(p)."""
    par = _params(p)
    return lm_norm_m(p, par.m) / (par.m - 1) - 0.5 * par.c_d * interaction_energy(p)


def rescaled_energy(p: RadialProfile) -> float:
    """G[p] = F[p] + M_2[p]/2, the Lyapunov functional of the rescaled frame."""
    return free_energy(p) + 0.5 * second_moment(p)


def vhls_ratio(p: RadialProfile) -> float:
    """Lambda(p) = W(p) / (||p||_1^{2/d} ||p||_m^m).

    Invariant under dilation and under multiplication by a constant.
    """
    par = _params(p)
    mss = float(np.dot(np.abs(p.values), p.grid.shell_volumes))
    norm = lm_norm_m(p, par.m)
    if not (mss > 0 and norm > 0):
        raise DegenerateProfileError("VHLS ratio needs positive mass and L^m norm")
    return interaction_energy(p) / (mss ** (2.0 / par.d) * norm)


def critical_mass(params: ModelParams, c_star: float) -> float:
    if not c_star > 0:
        raise InvalidArgumentError(f"C* must be positive, got {c_star}")
    return (2.0 / ((params.m - 1) * c_star * params.c_d)) ** (params.d / 2.0)


def cstar_from_critical_mass(params: ModelParams, m_c: float) -> float:
    """Inverse of :func:`critical_mass`."""
    return 2.0 / ((params.m - 1) * params.c_d * m_c ** (2.0 / params.d))


def lm_bound_gap(p: RadialProfile, c_star: float, m_c: float) -> tuple[float, float]:
    """Slacks of the two-sided bound of F by multiples of ||p||_m^m.

    Returns ``(F - lower, upper - F)``; both are non-negative for exact
    data, up to quadrature error.
    """
    par = _params(p)
    M = mass(p)
    norm = lm_norm_m(p, par.m)
    pref = 0.5 * c_star * par.c_d * norm
    F = free_energy(p)
    lower = pref * (m_c ** (2.0 / par.d) - M ** (2.0 / par.d))
    upper = pref * (m_c ** (2.0 / par.d) + M ** (2.0 / par.d))
    return F - lower, upper - F


def dissipation(p: RadialProfile, frame: str = "original") -> float:
    """Discrete Fisher information of the free-energy flow.

    Evaluates ``|(2m/(2m-1)) d_r u^{(2m-1)/2} - u^{1/2} v|^2`` at interior
    edges with centered differences between cell centers, where ``v`` is
    the potential gradient (plus the ``-r`` confinement in the rescaled
    frame). Each edge carries the measure ``sigma_d r^{d-1} h``, ``h`` being
    the center spacing. The origin and outer edges are excluded.
    """
    if frame not in ("original", "rescaled"):
        raise InvalidArgumentError(f"unknown frame {frame!r}")
    g = p.grid
    par = _params(p)
    m = par.m
    u = p.values
    if g.n_cells < 2:
        return 0.0
    dphi = field_from_cumulative(g, cumulative_mass(p))[1:-1]
    r = g.edges[1:-1]
    v = dphi - r if frame == "rescaled" else dphi
    h = np.diff(g.centers)
    w = u ** (m - 0.5)
    grad = (2 * m / (2 * m - 1)) * np.diff(w) / h
    sqrt_u = np.sqrt(0.5 * (u[:-1] + u[1:]))
    integrand = (grad - sqrt_u * v) ** 2
    return float(np.sum(integrand * g.edge_areas[1:-1] * h))


def gaussian_profile(d: int, M: float, t: float, n_cells: int = 2048, width: float = 12.0) -> RadialProfile:
    """Mass-M heat-kernel profile ``M (4 pi t)^{-d/2} exp(-|x|^2/(4t))``.

    The grid extends to ``width * sqrt(t)``; at the default width the
    truncated mass is below 1e-10 M.
    """
    if not (M > 0 and t > 0):
        raise InvalidArgumentError("Gaussian needs positive mass and time")
    grid = make_grid(d, width * math.sqrt(t), n_cells)
    amp = M / (4 * math.pi * t) ** (d / 2)
    return profile_from_function(grid, lambda r: amp * np.exp(-(r**2) / (4 * t)))


def gaussian_energy_curve(params: ModelParams, M: float, t_list, n_cells: int = 2048) -> list[float]:
    """F along the mass-M heat-kernel family at the requested times.

    The family is normalised to mass exactly M; the unnormalised prefactor
    ``M/(2 pi t)^{d/2}`` would carry mass ``2^{d/2} M``.
    """
    ts = [float(t) for t in t_list]
    if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise InvalidArgumentError("t_list must be positive and increasing")
    return [free_energy(gaussian_profile(params.d, M, t, n_cells)) for t in ts]


@dataclass(frozen=True)
class EnergyReport:
    mass: float
    lm_norm_m: float
    second_moment: float
    interaction: float
    free_energy: float
    rescaled_energy: float
    vhls_ratio: float | None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


def energy_report(p: RadialProfile) -> EnergyReport:
    par = _params(p)
    M = mass(p)
    norm = lm_norm_m(p, par.m)
    W = interaction_energy(p)
    m2 = second_moment(p)
    F = norm / (par.m - 1) - 0.5 * par.c_d * W
    lam = W / (M ** (2.0 / par.d) * norm) if (M > 0 and norm > 0) else None
    return EnergyReport(M, norm, m2, W, F, F + 0.5 * m2, lam)
