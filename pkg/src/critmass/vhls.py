"""Projected gradient ascent on the VHLS ratio over radial cell profiles.

This gives an estimate of the sharp constant C* that does not go through
the Lane-Emden equation: the ratio is maximised directly, with a
decreasing rearrangement after every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateProfileError, InvalidArgumentError
from .poisson import interaction_energy, potential_cell_averages
from .radial import (
    ModelParams,
    RadialGrid,
    RadialProfile,
    lm_norm_m,
    mass,
    remap,
    rescale,
)

LOG_COLUMNS = ("iter", "lambda", "step", "grad_norm")
_MIN_STEP = 1e-14


@dataclass(frozen=True)
class AscentConfig:
    max_iters: int = 2000
    step0: float = 0.1
    tol_grad: float = 1e-8
    tol_value: float = 1e-10

    def __post_init__(self):
        for name in ("max_iters", "step0", "tol_grad", "tol_value"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class AscentResult:
    profile: RadialProfile
    value: float
    converged: bool
    reason: str
    log: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.profile, self.value))


def symmetric_decreasing_projection(p: RadialProfile) -> RadialProfile:
    """Volume-weighted decreasing rearrangement.

    Cells are reordered by decreasing value and stacked outward from the
    origin with their original shell volumes, so the result lives on the
    grid whose shells have exactly those volumes. Every (value, volume)
    pair survives, hence mass and all L^q norms are preserved. An already
    non-increasing profile is returned unchanged.
    """
    v = p.values
    if np.any(v < 0):
        raise InvalidArgumentError("rearrangement needs a non-negative profile")
    if np.all(np.diff(v) <= 0):
        return p
    order = np.argsort(-v, kind="stable")
    g = p.grid
    vols = g.shell_volumes[order]
    sig = g.edge_areas[-1] / g.R_max ** (g.d - 1)
    edges = np.empty(g.n_cells + 1)
    edges[0] = 0.0
    edges[1:] = (np.cumsum(vols) * g.d / sig) ** (1.0 / g.d)
    edges[-1] = g.R_max
    return RadialProfile(RadialGrid(g.d, edges), v[order])


def lambda_first_variation(p: RadialProfile) -> np.ndarray:
    """Exact cell-wise first variation of the ratio, per unit volume.

    With ``W``, ``M`` and ``N = ||p||_m^m`` evaluated exactly on the cell
    profile, ``dLambda = [2 K*p - (2/d)(W/M) - m (W/N) p^{m-1}] / (M^{2/d} N)``.
    """
    par = ModelParams(p.d)
    M = mass(p)
    N = lm_norm_m(p, par.m)
    W = interaction_energy(p)
    kp = potential_cell_averages(p) / par.c_d
    core = 2 * kp - (2.0 / p.d) * W / M - par.m * W / N * p.values ** (par.m - 1)
    return core / (M ** (2.0 / p.d) * N)


def _ratio(p: RadialProfile, m: float) -> float:
    M = mass(p)
    N = lm_norm_m(p, m)
    return interaction_energy(p) / (M ** (2.0 / p.d) * N)


def _normalize(p: RadialProfile, grid: RadialGrid, M0: float, N0: float, m: float) -> RadialProfile:
    """Amplitude and dilation fixing mass ``M0`` and ``||.||_m^m = N0`` on ``grid``."""
    M = mass(p)
    N = lm_norm_m(p, m)
    # q = a lam^d p(lam x): mass a M, L^m: a^m lam^{d(m-1)} N
    a = M0 / M
    lam = (N0 / (a**m * N)) ** (1.0 / (p.d * (m - 1)))
    return remap(rescale(p.scaled(a), lam), grid)


def _projected(g: np.ndarray, p: RadialProfile) -> np.ndarray:
    return np.where((p.values > 0) | (g > 0), g, 0.0)


def maximize_lambda(init: RadialProfile, cfg: AscentConfig = AscentConfig()) -> AscentResult:
    """Maximise the VHLS ratio starting from ``init``.

    Each trial step moves along the projected first variation, clips
    negatives, rearranges, and restores the initial mass and L^m norm on
    the working grid. A trial is accepted only if the ratio does not
    decrease; otherwise the step is halved. Accepted values are therefore
    non-decreasing. Reaching ``max_iters`` is reported through
    ``converged=False``, not raised.
    """
    par = ModelParams(init.d)
    m = par.m
    grid = init.grid
    M0 = mass(init)
    N0 = lm_norm_m(init, m)
    if not (M0 > 0 and N0 > 0) or np.any(init.values < 0):
        raise DegenerateProfileError("ascent needs a non-negative profile with positive mass and L^m norm")

    p = _normalize(symmetric_decreasing_projection(init), grid, M0, N0, m)
    value = _ratio(p, m)
    step = cfg.step0
    log = []
    reason = "max_iters"
    converged = False
    for it in range(1, cfg.max_iters + 1):
        g = _projected(lambda_first_variation(p), p)
        scale = float(np.abs(g).max())
        peak = float(p.values.max())
        grad_norm = scale * peak / value
        if grad_norm < cfg.tol_grad:
            reason, converged = "tol_grad", True
            log.append((it, value, 0.0, grad_norm))
            break
        direction = g * (peak / scale)
        while step >= _MIN_STEP:
            trial = np.clip(p.values + step * direction, 0.0, None)
            if not np.any(trial > 0):
                raise DegenerateProfileError("clipping annihilated the profile")
            q = symmetric_decreasing_projection(RadialProfile(grid, trial))
            q = _normalize(q, grid, M0, N0, m)
            trial_value = _ratio(q, m)
            if trial_value >= value:
                break
            step *= 0.5
        else:
            reason, converged = "stalled", True
            log.append((it, value, 0.0, grad_norm))
            break
        gain = (trial_value - value) / value
        p, value = q, trial_value
        log.append((it, value, step, grad_norm))
        if gain < cfg.tol_value:
            reason, converged = "tol_value", True
            break
        step = min(2 * step, 1.0)
    return AscentResult(p, value, converged, reason, log)


def write_iteration_log(log, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for it, value, step, grad in log:
            w.writerow([it, f"{value:.17g}", f"{step:.17g}", f"{grad:.17g}"])


def ascent_grid(params: ModelParams, support_radius: float, n_cells: int) -> RadialGrid:
    """Uniform working grid reaching three times ``support_radius``."""
    from .radial import make_grid

    if not support_radius > 0 or not math.isfinite(support_radius):
        raise InvalidArgumentError("support radius must be positive and finite")
    return make_grid(params.d, 3.0 * support_radius, n_cells)
