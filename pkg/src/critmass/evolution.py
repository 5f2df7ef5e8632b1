"""Explicit conservative finite-volume evolution in radial symmetry.

The interface flux is ``J = -d_r f(u) + u_up v`` with ``f(u) = (u+eps)^m - eps^m``,
``v = phi'`` in the original frame and ``v = phi' - r`` in the rescaled
(self-similar) frame, ``u_up`` upwinded on the sign of ``v``. The origin and
the outer boundary carry no flux, so mass changes only by roundoff.

The time loop runs in a numba kernel between record times; the Python
driver handles diagnostics and blow-up bookkeeping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .diagnostics import DiagnosticsRecord, record
from .energetics import free_energy
from .errors import CFLViolationError, InvalidArgumentError, SupportExceedsDomainError
from .radial import ModelParams, RadialProfile, cumulative_mass_at, mass, second_moment

log = logging.getLogger(__name__)

FRAMES = ("original", "rescaled")
SCHEMES = ("upwind", "gradient_flow")
_CLIP_TOL = 1e-13

# kernel exit codes
_REACHED, _LINF, _DT_UNDERFLOW, _MAX_STEPS = 0, 1, 2, 3


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    frame: str = "original"
    epsilon: float = 0.0
    cfl: float = 0.4
    dt_min: float | None = None
    linf_blowup_factor: float = 1e3
    record_every: float | None = None
    max_steps: int = 2_000_000_000
    scheme: str = "upwind"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise InvalidArgumentError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if not self.t_end > 0:
            raise InvalidArgumentError("t_end must be positive")
        if not 0 < self.cfl < 1:
            raise InvalidArgumentError("cfl must lie in (0, 1)")
        if not self.epsilon >= 0:
            raise InvalidArgumentError("epsilon must be non-negative")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "gradient_flow" and self.epsilon > 0:
            raise InvalidArgumentError("the gradient_flow scheme has no epsilon regularisation")
        if self.dt_min is None:
            object.__setattr__(self, "dt_min", 1e-12 * self.t_end)
        if not self.dt_min > 0:
            raise InvalidArgumentError("dt_min must be positive")
        if not self.linf_blowup_factor > 1:
            raise InvalidArgumentError("linf_blowup_factor must exceed 1")
        if self.record_every is None:
            object.__setattr__(self, "record_every", self.t_end / 50)
        if not self.record_every > 0:
            raise InvalidArgumentError("record_every must be positive")

    @property
    def n_records(self) -> int:
        return int(math.ceil(self.t_end / self.record_every - 1e-9))


@dataclass(frozen=True)
class EvolutionState:
    time: float
    profile: RadialProfile
    dt_last: float = 0.0
    steps_taken: int = 0


@dataclass(frozen=True)
class BlowupReport:
    detected: bool
    t_detect: float | None
    criterion: str | None
    virial_upper_bound: float | None
    lm_at_detect: float | None


@dataclass(frozen=True, eq=False)
class RunResult:
    state: EvolutionState
    records: list
    report: BlowupReport
    energy_violations: int
    max_energy_increment: float
    cumulative_energy_increase: float
    boundary_mass_fraction: float
    clip_events: int

    def __iter__(self):
        return iter((self.state, self.records, self.report))


@numba.njit(cache=True)
def _velocity(u, vols, edges, inv_area_r, rescaled, v):
    """Interior-edge drift ``v = -Q/(sigma r^{d-1})`` (minus ``r`` when rescaled)."""
    q = 0.0
    vmax = 0.0
    for i in range(u.size - 1):
        q += u[i] * vols[i]
        w = -q * inv_area_r[i + 1]
        if rescaled:
            w -= edges[i + 1]
        v[i + 1] = w
        if abs(w) > vmax:
            vmax = abs(w)
    return vmax


@numba.njit(cache=True)
def _bound(u, h, d, m, eps, vmax, cfl):
    umax = 0.0
    for i in range(u.size):
        if u[i] > umax:
            umax = u[i]
    base = umax + eps
    dt_diff = np.inf
    if base > 0:
        dt_diff = h * h / (2.0 * d * m * base ** (m - 1.0))
    dt_drift = np.inf
    if vmax > 0:
        dt_drift = h / vmax
    return cfl * min(dt_diff, dt_drift)


@numba.njit(cache=True)
def _update(u, vols, areas, inv_dc, v, m, eps, dt, flux, f):
    """Advance ``u`` in place by ``dt``; returns (clipped mass, mass after clip)."""
    n = u.size
    epsm = eps**m if eps > 0 else 0.0
    for i in range(n):
        f[i] = (u[i] + eps) ** m - epsm
    flux[0] = 0.0
    flux[n] = 0.0
    for i in range(n - 1):
        up = u[i] if v[i + 1] > 0 else u[i + 1]
        flux[i + 1] = areas[i + 1] * (up * v[i + 1] - (f[i + 1] - f[i]) * inv_dc[i])
    neg = 0.0
    total = 0.0
    for i in range(n):
        u[i] -= dt / vols[i] * (flux[i + 1] - flux[i])
        if u[i] < 0:
            neg -= u[i] * vols[i]
            u[i] = 0.0
        total += u[i] * vols[i]
    return neg, total


@numba.njit(cache=True)
def _update_gf(u, vols, areas, inv_dc, geo, m, c_d, sigma, rescaled, dt, flux, xi):
    """Energy-dissipating variant: ``J = -u_up d_r xi`` with ``xi`` the discrete
    first variation of the energy, upwinded on the sign of ``-d_r xi``."""
    n = u.size
    half, sad, c1, c2, c3, rr = geo[0], geo[1], geo[2], geo[3], geo[4], geo[5]
    s_next = 0.0
    for i in range(n - 1, -1, -1):
        xi[i] = s_next
        s_next += u[i] * half[i]
    q = 0.0
    for i in range(n):
        inner = sigma * ((q - u[i] * sad[i]) * half[i] + u[i] * c1[i])
        outer = sigma * sigma * (u[i] * c2[i] + xi[i] * c3[i])
        pot = c_d * (inner + outer) / vols[i]
        q += u[i] * vols[i]
        w = m / (m - 1.0) * u[i] ** (m - 1.0) - pot
        if rescaled:
            w += 0.5 * rr[i]
        xi[i] = w
    flux[0] = 0.0
    flux[n] = 0.0
    for i in range(n - 1):
        g = (xi[i + 1] - xi[i]) * inv_dc[i]
        up = u[i] if g < 0 else u[i + 1]
        flux[i + 1] = -areas[i + 1] * up * g
    neg = 0.0
    total = 0.0
    for i in range(n):
        u[i] -= dt / vols[i] * (flux[i + 1] - flux[i])
        if u[i] < 0:
            neg -= u[i] * vols[i]
            u[i] = 0.0
        total += u[i] * vols[i]
    return neg, total


@numba.njit(cache=True)
def _restore(u, neg, total, mass0):
    if neg > _CLIP_TOL * mass0 and total > 0:
        # proportional redistribution back to the pre-clip mass
        scale = (total - neg) / total
        for i in range(u.size):
            u[i] *= scale


@numba.njit(cache=True)
def _advance(u, edges, vols, areas, inv_area_r, inv_dc, geo, h, d, m, c_d, sigma, eps, rescaled, gradient_flow, cfl, t, t_stop, dt_min, linf_cap, max_steps, mass0):
    n = u.size
    flux = np.zeros(n + 1)
    f = np.zeros(n)
    v = np.zeros(n + 1)
    steps = 0
    dt_last = 0.0
    clips = 0
    while True:
        remaining = t_stop - t
        if remaining <= 0:
            return t, steps, dt_last, _REACHED, clips
        if steps >= max_steps:
            return t, steps, dt_last, _MAX_STEPS, clips
        vmax = _velocity(u, vols, edges, inv_area_r, rescaled, v)
        dt = _bound(u, h, d, m, eps, vmax, cfl)
        if dt < dt_min and dt < remaining:
            return t, steps, dt, _DT_UNDERFLOW, clips
        landing = False
        if dt >= remaining:
            dt = remaining
            landing = True
        if gradient_flow:
            neg, total = _update_gf(u, vols, areas, inv_dc, geo, m, c_d, sigma, rescaled, dt, flux, f)
        else:
            neg, total = _update(u, vols, areas, inv_dc, v, m, eps, dt, flux, f)
        if neg > 0:
            clips += 1
            _restore(u, neg, total, mass0)
        t = t_stop if landing else t + dt
        steps += 1
        dt_last = dt
        umax = 0.0
        for i in range(n):
            if u[i] > umax:
                umax = u[i]
        if umax > linf_cap:
            return t, steps, dt_last, _LINF, clips


@dataclass(frozen=True, eq=False)
class _Kernel:
    """Grid-dependent arrays handed to the compiled loop."""

    edges: np.ndarray
    vols: np.ndarray
    areas: np.ndarray
    inv_area_r: np.ndarray
    inv_dc: np.ndarray
    geo: np.ndarray
    h: float
    d: float
    m: float
    c_d: float
    sigma: float

    @classmethod
    def of(cls, grid) -> "_Kernel":
        par = ModelParams(grid.d)
        r = grid.edges
        inv = np.zeros_like(r)
        inv[1:] = 1.0 / (par.sigma_d * r[1:] ** (grid.d - 1))
        a, b, d = r[:-1], r[1:], grid.d
        dd = b**d - a**d
        d2 = b ** (d + 2) - a ** (d + 2)
        geo = np.stack(
            [
                0.5 * (b**2 - a**2),
                par.sigma_d * a**d / d,
                par.sigma_d / d * d2 / (d + 2),
                0.5 * (b**2 * dd / d - d2 / (d + 2)),
                dd / d,
                grid.moment_weights / grid.shell_volumes,
            ]
        )
        return cls(
            edges=np.ascontiguousarray(r),
            geo=np.ascontiguousarray(geo),
            vols=np.ascontiguousarray(grid.shell_volumes),
            areas=np.ascontiguousarray(grid.edge_areas),
            inv_area_r=inv,
            inv_dc=np.ascontiguousarray(1.0 / np.diff(grid.centers)),
            h=float(grid.widths.min()),
            d=float(grid.d),
            m=par.m,
            c_d=par.c_d,
            sigma=par.sigma_d,
        )

    def stable_dt(self, u: np.ndarray, cfg: SolverConfig, cfl: float) -> tuple[float, np.ndarray]:
        v = np.zeros(u.size + 1)
        vmax = _velocity(u, self.vols, self.edges, self.inv_area_r, cfg.frame == "rescaled", v)
        return _bound(u, self.h, self.d, self.m, cfg.epsilon, vmax, cfl), v


def compute_dt(state: EvolutionState, cfg: SolverConfig, t_next: float | None = None) -> float:
    """CFL step ``cfl * min(h^2 / (2 d m (u_max+eps)^{m-1}), h / max|v|)``.

    ``h`` is the smallest cell width. The step is capped to land exactly on
    ``t_next`` (the next record time, defaulting to ``t_end``).
    """
    u = np.ascontiguousarray(state.profile.values, dtype=float)
    dt, _ = _Kernel.of(state.profile.grid).stable_dt(u, cfg, cfg.cfl)
    target = cfg.t_end if t_next is None else t_next
    return float(min(dt, max(target - state.time, 0.0)))


def step(state: EvolutionState, cfg: SolverConfig, dt: float | None = None) -> EvolutionState:
    """One conservative explicit step.

    Raises :class:`CFLViolationError` when an explicit ``dt`` exceeds the
    stability bound evaluated at ``cfl = 1``.
    """
    p = state.profile
    k = _Kernel.of(p.grid)
    u = np.array(p.values, dtype=float)
    bound, v = k.stable_dt(u, cfg, 1.0)
    if dt is None:
        dt = compute_dt(state, cfg)
    elif dt > bound:
        raise CFLViolationError(f"dt={dt:g} exceeds the stability bound {bound:g}")
    if dt > 0:
        m0 = float(np.dot(u, k.vols))
        flux, work = np.zeros(u.size + 1), np.zeros(u.size)
        if cfg.scheme == "gradient_flow":
            neg, total = _update_gf(
                u, k.vols, k.areas, k.inv_dc, k.geo, k.m, k.c_d, k.sigma, cfg.frame == "rescaled", dt, flux, work
            )
        else:
            neg, total = _update(u, k.vols, k.areas, k.inv_dc, v, k.m, cfg.epsilon, dt, flux, work)
        _restore(u, neg, total, m0)
    return EvolutionState(state.time + dt, RadialProfile(p.grid, u), dt, state.steps_taken + 1)


def virial_upper_bound(initial: RadialProfile) -> float | None:
    """Time by which a negative-energy solution must have blown up.

    ``d/dt M_2 <= 2(d-2) F[u_0] < 0`` forces ``M_2`` negative after
    ``M_2(u_0) / (2(d-2)|F(u_0)|)``; for ``F(u_0) >= 0`` there is no bound.
    """
    F = free_energy(initial)
    if not F < 0:
        return None
    return float(second_moment(initial) / (2 * (initial.d - 2) * abs(F)))


def _check_domain(p: RadialProfile) -> None:
    M = mass(p)
    if M <= 0:
        return
    inner = float(cumulative_mass_at(p, 0.9 * p.grid.R_max))
    if inner / M <= 1 - 1e-8:
        raise SupportExceedsDomainError(
            f"initial data has {1 - inner / M:.3g} of its mass in the outer 10% of the domain"
        )


def run(
    initial: RadialProfile,
    cfg: SolverConfig,
    check_domain: bool = True,
    on_record: Callable[[EvolutionState], None] | None = None,
) -> RunResult:
    """Evolve to ``t_end`` or until blow-up is detected.

    Blow-up is declared when ``||u||_inf`` exceeds ``linf_blowup_factor``
    times its initial value or when the CFL step drops below ``dt_min``;
    it is reported, not raised. ``on_record`` sees every recorded state,
    including the initial one.
    """
    if np.any(initial.values < 0):
        raise InvalidArgumentError("initial data must be non-negative")
    if check_domain:
        _check_domain(initial)
    if cfg.n_records < 20:
        log.warning("only %d records requested; convergence diagnostics need >= 20", cfg.n_records)
    par = ModelParams(initial.d)
    k = _Kernel.of(initial.grid)
    u = np.array(initial.values, dtype=float)
    m0 = float(np.dot(u, k.vols))
    linf0 = float(u.max(initial=0.0))
    linf_cap = cfg.linf_blowup_factor * linf0 if linf0 > 0 else math.inf
    rescaled = cfg.frame == "rescaled"
    if m0 > 0 and linf_cap > m0 / k.vols[0]:
        log.warning(
            "blow-up threshold %.3g exceeds the largest density the grid can hold (%.3g); "
            "only dt underflow can flag blow-up",
            linf_cap,
            m0 / k.vols[0],
        )

    def energy(r: DiagnosticsRecord) -> float:
        return r.rescaled_energy if rescaled else r.free_energy

    state = EvolutionState(0.0, initial, 0.0, 0)
    records = [record(state, None, cfg.frame)]
    if on_record is not None:
        on_record(state)
    tol = 1e-8 * (1 + abs(energy(records[0])))
    violations = 0
    t = 0.0
    steps = clips = 0
    status = _REACHED
    dt_last = 0.0
    tick = 0
    while t < cfg.t_end:
        tick += 1
        t_stop = min(tick * cfg.record_every, cfg.t_end)
        if cfg.t_end - t_stop < 1e-12 * cfg.t_end:
            t_stop = cfg.t_end
        t, n, dt_k, status, c = _advance(
            u, k.edges, k.vols, k.areas, k.inv_area_r, k.inv_dc, k.geo, k.h, k.d, k.m, k.c_d, k.sigma,
            cfg.epsilon, rescaled, cfg.scheme == "gradient_flow", cfg.cfl, t, t_stop, cfg.dt_min, linf_cap, cfg.max_steps - steps, m0,
        )
        steps += n
        clips += c
        if n or status == _DT_UNDERFLOW:
            dt_last = dt_k
        state = EvolutionState(t, RadialProfile(initial.grid, u.copy()), dt_last, steps)
        rec = record(state, records[-1], cfg.frame)
        if energy(rec) - energy(records[-1]) > tol:
            violations += 1
        records.append(rec)
        if on_record is not None:
            on_record(state)
        if status != _REACHED:
            break

    if status == _MAX_STEPS:
        log.warning("step budget exhausted at t=%g", t)
    incs = np.diff([energy(r) for r in records])
    detected = status in (_LINF, _DT_UNDERFLOW)
    report = BlowupReport(
        detected=detected,
        t_detect=t if detected else None,
        criterion={_LINF: "linf_threshold", _DT_UNDERFLOW: "dt_underflow"}.get(status),
        virial_upper_bound=None if rescaled else virial_upper_bound(initial),
        lm_at_detect=records[-1].lm_norm_m ** (1 / par.m) if detected else None,
    )
    M_end = float(np.dot(u, k.vols))
    outer = M_end - float(cumulative_mass_at(state.profile, 0.9 * initial.grid.R_max))
    return RunResult(
        state=state,
        records=records,
        report=report,
        energy_violations=violations,
        max_energy_increment=float(incs.max(initial=0.0)) if incs.size else 0.0,
        cumulative_energy_increase=float(incs[incs > 0].sum()),
        boundary_mass_fraction=outer / M_end if M_end > 0 else 0.0,
        clip_events=clips,
    )
