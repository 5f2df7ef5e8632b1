"""Radial Newtonian potential via Newton's theorem.

For a radial density the field at radius ``r`` only sees the mass ``Q(r)``
inside that sphere, and the potential is the interior point-mass term plus
the exterior shells' constant contributions. All formulas are exact for
piecewise-constant cell data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeDensityError
from .radial import RadialGrid, RadialProfile, cumulative_mass, sphere_area


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: RadialGrid
    phi_at_centers: np.ndarray | None
    dphi_at_edges: np.ndarray | None


def _require_nonnegative(p: RadialProfile) -> None:
    if np.any(p.values < 0):
        raise NegativeDensityError("potential of a sign-changing profile requested")


def _kernel_constant(d: int) -> float:
    return 1.0 / ((d - 2) * sphere_area(d))


def field_from_cumulative(grid: RadialGrid, q: np.ndarray) -> np.ndarray:
    """phi'(r) = -Q(r) / (sigma_d r^{d-1}) at every edge, zero at the origin."""
    out = np.zeros_like(q)
    r = grid.edges[1:]
    out[1:] = -q[1:] / (sphere_area(grid.d) * r ** (grid.d - 1))
    return out


def potential_gradient(p: RadialProfile) -> PotentialField:
    _require_nonnegative(p)
    return PotentialField(p.grid, None, field_from_cumulative(p.grid, cumulative_mass(p)))


def _outer_sums(p: RadialProfile) -> np.ndarray:
    """S_i = sum_{j>=i} p_j (r_{j+1}^2 - r_j^2)/2, with a trailing 0."""
    e = p.grid.edges
    contrib = p.values * 0.5 * (e[1:] ** 2 - e[:-1] ** 2)
    s = np.zeros(p.grid.n_cells + 1)
    s[:-1] = np.cumsum(contrib[::-1])[::-1]
    return s


def newton_potential(p: RadialProfile) -> PotentialField:
    """(K * p) at cell centers together with the edge field."""
    _require_nonnegative(p)
    g = p.grid
    d, sig = g.d, sphere_area(g.d)
    q = cumulative_mass(p)
    s = _outer_sums(p)
    r = g.centers
    a = g.edges[:-1]
    b = g.edges[1:]
    q_r = q[:-1] + p.values * sig / d * (r**d - a**d)
    inner = q_r / r ** (d - 2)
    outer = sig * (p.values * 0.5 * (b**2 - r**2) + s[1:])
    phi = _kernel_constant(d) * (inner + outer)
    return PotentialField(g, phi, field_from_cumulative(g, q))


def potential_cell_averages(p: RadialProfile) -> np.ndarray:
    """Exact shell averages of K * p for the piecewise-constant profile."""
    g = p.grid
    d, sig = g.d, sphere_area(g.d)
    q = cumulative_mass(p)
    s = _outer_sums(p)
    a, b, v = g.edges[:-1], g.edges[1:], p.values
    dd = b**d - a**d
    d2 = b ** (d + 2) - a ** (d + 2)
    inner = sig * ((q[:-1] - v * sig * a**d / d) * 0.5 * (b**2 - a**2) + v * sig / d * d2 / (d + 2))
    outer = sig**2 * (0.5 * v * (b**2 * dd / d - d2 / (d + 2)) + s[1:] * dd / d)
    return _kernel_constant(d) * (inner + outer) / g.shell_volumes


def interaction_energy(p: RadialProfile) -> float:
    """W(p) = iint p(x) p(y) |x-y|^{2-d} dx dy = 2 sigma_d int_0^R r Q(r) p(r) dr.

    Inside each shell Q is the exact quadratic-in-r^d interpolant of the
    piecewise-constant density, so the integral is exact for cell data.
    Sign-indefinite profiles are accepted when flagged ``signed``.
    """
    g = p.grid
    d, sig = g.d, sphere_area(g.d)
    q = cumulative_mass(p)
    a, b, v = g.edges[:-1], g.edges[1:], p.values
    per_cell = (q[:-1] - v * sig * a**d / d) * 0.5 * (b**2 - a**2) + v * sig / d * (
        b ** (d + 2) - a ** (d + 2)
    ) / (d + 2)
    return float(2.0 * sig * np.dot(v, per_cell))
