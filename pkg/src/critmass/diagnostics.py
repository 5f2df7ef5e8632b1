"""Per-record telemetry and the post-processing monitors run on it."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .energetics import dissipation
from .errors import DegenerateProfileError, InvalidArgumentError
from .poisson import interaction_energy
from .radial import (
    ModelParams,
    RadialProfile,
    lm_norm_m,
    lp_norm,
    make_grid,
    mass,
    remap,
    rescale,
    second_moment,
)

RUN_COLUMNS = ("t", "mass", "m2", "lm_norm_m", "linf", "free_energy", "rescaled_energy", "dissipation", "dt")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    m2: float
    lm_norm_m: float
    linf: float
    free_energy: float
    rescaled_energy: float
    dissipation: float
    dt: float
    virial_residual_cum: float
    # running integrals since the first record; needed to carry the residual
    m2_initial: float = 0.0
    virial_rate_integral: float = 0.0
    dissipation_integral: float = 0.0


def record(state, prev: DiagnosticsRecord | None = None, frame: str = "original") -> DiagnosticsRecord:
    """Measure one evolution state.

    The virial residual compares the second-moment drift since the first
    record with the trapezoidal time integral of its predicted rate,
    ``2(d-2) F`` (original frame) or ``2(d-2) F - 2 M_2`` (rescaled frame).
    """
    p: RadialProfile = state.profile
    par = ModelParams(p.d)
    m = par.m
    M = mass(p)
    m2 = second_moment(p)
    norm = lm_norm_m(p, m)
    F = norm / (m - 1) - 0.5 * par.c_d * interaction_energy(p)
    D = dissipation(p, frame) if M > 0 else 0.0
    rate = 2 * (par.d - 2) * F - (2 * m2 if frame == "rescaled" else 0.0)
    if prev is None:
        m2_0, rate_int, diss_int = m2, 0.0, 0.0
    else:
        dt = state.time - prev.t
        prev_rate = 2 * (par.d - 2) * prev.free_energy - (2 * prev.m2 if frame == "rescaled" else 0.0)
        m2_0 = prev.m2_initial
        rate_int = prev.virial_rate_integral + 0.5 * dt * (rate + prev_rate)
        diss_int = prev.dissipation_integral + 0.5 * dt * (D + prev.dissipation)
    return DiagnosticsRecord(
        t=float(state.time),
        mass=M,
        m2=m2,
        lm_norm_m=norm,
        linf=lp_norm(p, math.inf),
        free_energy=F,
        rescaled_energy=F + 0.5 * m2,
        dissipation=D,
        dt=float(state.dt_last),
        virial_residual_cum=abs(m2 - m2_0 - rate_int),
        m2_initial=m2_0,
        virial_rate_integral=rate_int,
        dissipation_integral=diss_int,
    )


def fit_lm_rate(records: Sequence[DiagnosticsRecord], m: float) -> float:
    """Smallest constant C for which the L^m growth envelope holds on the records.

    With ``y = ||u||_m^{-m/(m-1)}`` the envelope reads
    ``y(t2) >= y(t1) - C (t2 - t1)``; the tightest C is the steepest decrease
    of ``y`` between consecutive records (zero if ``y`` never decreases).
    """
    if len(records) < 2:
        return 0.0
    t = np.array([r.t for r in records])
    y = np.array([r.lm_norm_m for r in records]) ** (-1.0 / (m - 1))
    dt = np.diff(t)
    ok = dt > 0
    rates = (y[:-1] - y[1:])[ok] / dt[ok]
    return float(max(rates.max(initial=0.0), 0.0))


def lm_envelope_violation(records: Sequence[DiagnosticsRecord], c_hat: float, m: float) -> float:
    """Largest relative excess of ``||u(t2)||_m^m`` over the envelope from any earlier record."""
    t = np.array([r.t for r in records])
    norms = np.array([r.lm_norm_m for r in records])
    y = norms ** (-1.0 / (m - 1))
    worst = 0.0
    for i in range(len(records)):
        base = y[i] - c_hat * (t[i + 1 :] - t[i])
        bound = np.where(base > 0, np.abs(base) ** (-(m - 1)), np.inf)
        excess = norms[i + 1 :] / bound - 1.0
        if excess.size:
            worst = max(worst, float(excess.max()))
    return worst


def blowup_lower_bound_check(
    records: Sequence[DiagnosticsRecord],
    t_omega: float | None,
    m: float,
    last: int | None = 10,
    c_hat: float | None = None,
) -> float:
    """Worst relative violation of ``||u(t)||_m >= [C (T - t)]^{-(m-1)/m}``.

    ``C`` is the run's fitted L^m rate (see :func:`fit_lm_rate`). Records at
    or after ``t_omega`` carry no constraint. Returns the maximum over the
    last ``last`` constrained records of
    ``max(bound - ||u(t)||_m, 0) / ||u(t)||_m``.
    """
    if t_omega is None or not math.isfinite(t_omega):
        raise InvalidArgumentError("blow-up lower bound needs a detected blow-up time")
    if c_hat is None:
        c_hat = fit_lm_rate(records, m)
    before = [r for r in records if r.t < t_omega]
    if last is not None:
        before = before[-last:]
    if not before or c_hat <= 0:
        return 0.0
    worst = 0.0
    for r in before:
        norm = r.lm_norm_m ** (1.0 / m)
        bound = (c_hat * (t_omega - r.t)) ** (-(m - 1) / m)
        worst = max(worst, max(bound - norm, 0.0) / norm)
    return worst


def blowup_profile_distance(state, V: RadialProfile, n_cells: int | None = None) -> float:
    """L^1 distance between the L^m-normalised zoom of ``u`` and ``V``.

    With ``lam = ||u||_m^{-m/(d-2)}`` the zoom ``lam^d u(lam x)`` has unit
    L^m norm; ``V`` must be the critical profile normalised the same way.
    Both are transferred conservatively to a common uniform grid covering
    the larger of the two domains. The centre is fixed at the origin.
    """
    p: RadialProfile = state.profile if hasattr(state, "profile") else state
    par = ModelParams(p.d)
    norm = lm_norm_m(p, par.m)
    if not norm > 0:
        raise DegenerateProfileError("blow-up distance of a zero profile")
    lam = norm ** (-1.0 / (par.d - 2))
    zoomed = rescale(p, lam)
    R = max(zoomed.grid.R_max, V.grid.R_max)
    n = n_cells or max(zoomed.grid.n_cells, V.grid.n_cells, 512)
    common = make_grid(p.d, R, n)
    a = remap(zoomed, common)
    b = remap(V, common)
    return float(np.dot(np.abs(a.values - b.values), common.shell_volumes))


def write_run_csv(records: Sequence[DiagnosticsRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in records:
            w.writerow([f"{getattr(r, c):.17g}" for c in RUN_COLUMNS])


def summary(records: Sequence[DiagnosticsRecord], report, profile_distances=(), frame: str = "original") -> dict:
    """Fields of ``diagnostics_summary.json``."""
    energy = [r.rescaled_energy if frame == "rescaled" else r.free_energy for r in records]
    incs = np.diff(energy) if len(energy) > 1 else np.zeros(0)
    last = records[-1]
    first = records[0]
    # discrete shadow of dF/dt = -dissipation (original frame) over the whole run
    defect = abs(energy[-1] - energy[0] + last.dissipation_integral) if records else 0.0
    return {
        "virial_residual_final": last.virial_residual_cum,
        "dissipation_defect": defect,
        "max_energy_increment": float(max(incs.max(initial=0.0), 0.0)),
        "blowup": asdict(report) if report is not None else None,
        "profile_distance_series": [list(map(float, x)) for x in profile_distances],
        "t_start": first.t,
        "t_final": last.t,
    }


def write_summary(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, default=float))
