"""Radial grids, cell-averaged profiles and the quadratures built on them.

A profile is a piecewise-constant density on spherical shells
``[r_i, r_{i+1})`` of ``R^d``. Every integral below (mass, L^q norms,
second moment, cumulative mass) is evaluated exactly for such piecewise
constant data, so conservation statements hold to roundoff.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import gamma

from .errors import InvalidArgumentError, NegativeDensityError

MIN_CELLS = 4
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / gamma(d / 2)


@dataclass(frozen=True)
class ModelParams:
    """Dimension and the constants derived from it.

    ``m = 2(d-1)/d`` is the exponent for which porous-medium diffusion and
    Newtonian attraction scale identically.
    """

    d: int
    m: float = field(init=False)
    sigma_d: float = field(init=False)
    c_d: float = field(init=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise InvalidArgumentError(f"dimension must be an integer >= 3, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "m", 2.0 * (self.d - 1) / self.d)
        object.__setattr__(self, "sigma_d", sphere_area(self.d))
        object.__setattr__(self, "c_d", 1.0 / ((self.d - 2) * self.sigma_d))

    @property
    def density_exponent(self) -> float:
        """1/(m-1) = d/(d-2): maps a Lane-Emden unknown to a density."""
        return self.d / (self.d - 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    d: int
    edges: np.ndarray
    centers: np.ndarray = field(init=False)
    shell_volumes: np.ndarray = field(init=False)
    moment_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = np.array(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise InvalidArgumentError("edges must be a 1-D array with at least two entries")
        if edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
            raise InvalidArgumentError("edges must start at 0 and be strictly increasing")
        d = self.d
        sig = sphere_area(d)
        rd = edges**d
        edges.setflags(write=False)
        vols = sig / d * np.diff(rd)
        # volume centroid of each shell
        centers = (0.5 * (rd[:-1] + rd[1:])) ** (1.0 / d)
        moments = sig / (d + 2) * np.diff(edges ** (d + 2))
        for a in (vols, centers, moments):
            a.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "shell_volumes", vols)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "moment_weights", moments)

    @property
    def n_cells(self) -> int:
        return self.edges.size - 1

    @property
    def R_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def edge_areas(self) -> np.ndarray:
        """sigma_d r^{d-1} at every edge (zero at the origin)."""
        return sphere_area(self.d) * self.edges ** (self.d - 1)

    def __eq__(self, other):
        return (
            isinstance(other, RadialGrid)
            and self.d == other.d
            and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None


def make_grid(d: int, R_max: float, n_cells: int, stretch: float = 1.0) -> RadialGrid:
    """Grid on ``[0, R_max]`` with ``n_cells`` shells.

    ``stretch == 1`` gives uniform spacing ``R_max / n_cells``. ``stretch > 1``
    makes consecutive widths grow geometrically, concentrating cells near the
    origin for blow-up runs.
    """
    if int(d) != d or d < 3:
        raise InvalidArgumentError(f"dimension must be an integer >= 3, got {d}")
    if not R_max > 0:
        raise InvalidArgumentError("R_max must be positive")
    if int(n_cells) != n_cells or n_cells < MIN_CELLS:
        raise InvalidArgumentError(f"n_cells must be an integer >= {MIN_CELLS}")
    if not stretch >= 1.0:
        raise InvalidArgumentError("stretch must be >= 1")
    n_cells = int(n_cells)
    if stretch == 1.0:
        edges = R_max * np.arange(n_cells + 1) / n_cells
    else:
        w = stretch ** np.arange(n_cells)
        edges = np.concatenate([[0.0], np.cumsum(w)])
        edges *= R_max / edges[-1]
    edges[-1] = R_max
    return RadialGrid(int(d), edges)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Cell-averaged radial density.

    ``signed=True`` admits sign-indefinite values; it is meant for functional
    evaluation only and is carried along as a flag.
    """

    grid: RadialGrid
    values: np.ndarray
    signed: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise InvalidArgumentError(
                f"expected {self.grid.n_cells} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("profile values must be finite")
        if not self.signed and np.any(v < 0):
            raise NegativeDensityError("density profile has negative values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.grid.d

    def with_values(self, values) -> "RadialProfile":
        return RadialProfile(self.grid, values, self.signed)

    def scaled(self, factor: float) -> "RadialProfile":
        return RadialProfile(self.grid, factor * self.values, self.signed or factor < 0)

    def support_radius(self) -> float:
        """Outer edge of the last cell carrying a non-zero value."""
        nz = np.flatnonzero(self.values)
        return 0.0 if nz.size == 0 else float(self.grid.edges[nz[-1] + 1])

    def __eq__(self, other):
        return (
            isinstance(other, RadialProfile)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def zero_profile(grid: RadialGrid) -> RadialProfile:
    return RadialProfile(grid, np.zeros(grid.n_cells))


def profile_from_function(
    grid: RadialGrid, func: Callable[[np.ndarray], np.ndarray], support: float | None = None
) -> RadialProfile:
    """Exact-to-quadrature cell averages of a radial function.

    Each shell is integrated with 16-point Gauss-Legendre against
    ``r^{d-1}``. When ``support`` is given, the shell containing it is split
    there so a free boundary does not degrade the rule.
    """
    a = grid.edges[:-1]
    b = grid.edges[1:]
    if support is not None:
        b = np.minimum(b, support)
    active = b > a
    out = np.zeros(grid.n_cells)
    if not np.any(active):
        return RadialProfile(grid, out)
    a, b = a[active], b[active]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    r = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    f = np.asarray(func(r), dtype=float)
    integral = (f * r ** (grid.d - 1)) @ _GL_WEIGHTS * half
    out[active] = sphere_area(grid.d) * integral / grid.shell_volumes[active]
    return RadialProfile(grid, out, signed=bool(np.any(out < 0)))


def ball_indicator(grid: RadialGrid, radius: float = 1.0, height: float = 1.0) -> RadialProfile:
    """``height`` times the indicator of B(0, radius), exact per cell."""
    d = grid.d
    lo = grid.edges[:-1]
    hi = np.minimum(grid.edges[1:], radius)
    frac = np.clip(hi**d - lo**d, 0.0, None) / (grid.edges[1:] ** d - lo**d)
    return RadialProfile(grid, height * frac)


def mass(p: RadialProfile) -> float:
    return float(np.dot(p.values, p.grid.shell_volumes))


def lp_norm(p: RadialProfile, q: float) -> float:
    if q == math.inf:
        return float(np.max(np.abs(p.values), initial=0.0))
    if not q >= 1:
        raise InvalidArgumentError(f"L^q norm needs q >= 1, got {q}")
    s = float(np.dot(np.abs(p.values) ** q, p.grid.shell_volumes))
    return s ** (1.0 / q)


def lm_norm_m(p: RadialProfile, m: float) -> float:
    """``||p||_m^m`` without the final root (it is what the energies use)."""
    return float(np.dot(np.abs(p.values) ** m, p.grid.shell_volumes))


def second_moment(p: RadialProfile) -> float:
    return float(np.dot(np.abs(p.values), p.grid.moment_weights))


def cumulative_mass(p: RadialProfile) -> np.ndarray:
    """Q(r) = mass inside B(0, r), at every grid edge."""
    q = np.empty(p.grid.n_cells + 1)
    q[0] = 0.0
    np.cumsum(p.values * p.grid.shell_volumes, out=q[1:])
    return q


def cumulative_mass_at(p: RadialProfile, r) -> np.ndarray:
    """Q at arbitrary radii, exact for the piecewise-constant profile.

    Radii beyond ``R_max`` see the total mass (vacuum outside the grid).
    """
    r = np.clip(np.asarray(r, dtype=float), 0.0, p.grid.R_max)
    edges = p.grid.edges
    q = cumulative_mass(p)
    i = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, p.grid.n_cells - 1)
    d = p.grid.d
    return q[i] + p.values[i] * sphere_area(d) / d * (r**d - edges[i] ** d)


def remap(p: RadialProfile, grid: RadialGrid) -> RadialProfile:
    """Conservative transfer of ``p`` onto another grid of the same dimension.

    New cell masses are differences of the exact cumulative mass, so the
    total mass inside ``min(R_max, R_max')`` is preserved to roundoff.
    """
    if grid.d != p.grid.d:
        raise InvalidArgumentError("remap across dimensions is not defined")
    q = cumulative_mass_at(p, grid.edges)
    vals = np.diff(q) / grid.shell_volumes
    if not p.signed:
        vals = np.maximum(vals, 0.0)
    return RadialProfile(grid, vals, p.signed)


def rescale(p: RadialProfile, lam: float) -> RadialProfile:
    """Mass-preserving dilation ``lam^d h(lam x)``.

    The result lives on the grid whose edges are the old ones divided by
    ``lam``, so no resampling is involved.
    """
    if not lam > 0:
        raise InvalidArgumentError(f"dilation factor must be positive, got {lam}")
    if lam == 1.0:
        return p
    grid = RadialGrid(p.d, p.grid.edges / lam)
    return RadialProfile(grid, lam ** p.d * p.values, p.signed)


def write_profile_csv(p: RadialProfile, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r_center", "u"])
        for r, u in zip(p.grid.centers, p.values):
            w.writerow([f"{r:.17g}", f"{u:.17g}"])


def read_profile_csv(path, d: int) -> RadialProfile:
    """Read a ``r_center,u`` snapshot and rebuild its grid.

    Centers are volume centroids, so edges follow from
    ``r_{i+1}^d = 2 c_i^d - r_i^d`` starting at the origin.
    """
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: empty profile file")
    centers = np.array([float(r["r_center"]) for r in rows])
    vals = np.array([float(r["u"]) for r in rows])
    rd = np.empty(centers.size + 1)
    rd[0] = 0.0
    for i, c in enumerate(centers):
        rd[i + 1] = 2.0 * c**d - rd[i]
    return RadialProfile(RadialGrid(d, rd ** (1.0 / d)), vals)
