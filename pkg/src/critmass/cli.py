"""Experiment runner: JSON config in, CSV/JSON artifacts out.

Usage::

    critmass <command> --config <path> [--sweep <dir>]

Exit status is 0 on completion, 2 when an evolution detected blow-up and
1 on any configuration or validation error. With ``--sweep`` every
``*.json`` file in the directory is merged over the base config and run
in a process pool capped by ``CRITMASS_THREADS``.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np

from .diagnostics import blowup_profile_distance, summary, write_run_csv, write_summary
from .energetics import critical_mass, energy_report
from .errors import ConfigInvalidError, CritmassError
from .evolution import SCHEMES, SolverConfig, run
from .radial import (
    ModelParams,
    RadialGrid,
    RadialProfile,
    ball_indicator,
    make_grid,
    mass,
    profile_from_function,
    read_profile_csv,
    remap,
    write_profile_csv,
)
from .stationary import (
    euler_lagrange_check,
    lane_emden_unit_ball,
    self_similar_identities,
    self_similar_profile,
    self_similar_solution,
    stationary_profile,
    unit_norm_stationary_profile,
    write_shooting_solution,
)
from .vhls import AscentConfig, ascent_grid, maximize_lambda, write_iteration_log

log = logging.getLogger("critmass")

COMMANDS = ("profile", "self_similar", "vhls", "evolve", "constants")
INITIAL_KINDS = ("stationary", "self_similar", "gaussian", "ball", "file")
EXIT_OK, EXIT_ERROR, EXIT_BLOWUP = 0, 1, 2

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["dimension", "output_dir"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "dimension": {"type": "integer", "minimum": 3},
        "mass_ratio": _POSITIVE,
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "R_max": _POSITIVE,
                "n_cells": {"type": "integer", "minimum": 4},
                "stretch": {"type": "number", "minimum": 1},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "frame": {"enum": ["original", "rescaled"]},
                "scheme": {"enum": list(SCHEMES)},
                "epsilon": {"type": "number", "minimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "t_end": _POSITIVE,
                "dt_min": _POSITIVE,
                "linf_blowup_factor": {"type": "number", "exclusiveMinimum": 1},
                "record_every": _POSITIVE,
                "snapshot_every": {"type": "integer", "minimum": 0},
            },
        },
        "ascent": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "step0": _POSITIVE,
                "tol_grad": _POSITIVE,
                "tol_value": _POSITIVE,
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(INITIAL_KINDS)},
                "params": {"type": "object"},
            },
        },
        "output_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer"},
    },
}


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - source checkout without install
        return "0+unknown"


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    output_dir: str
    command: str | None = None
    mass_ratio: float = 1.0
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    ascent: dict = field(default_factory=dict)
    initial: dict = field(default_factory=lambda: {"kind": "stationary", "params": {}})
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
        if errors:
            raise ConfigInvalidError(
                f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors
            )
        return cls(**copy.deepcopy(data))

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["command"] is None:
            del out["command"]
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def make_grid(self, default_R: float = 4.0, default_n: int = 512) -> RadialGrid:
        g = self.grid
        return make_grid(self.dimension, g.get("R_max", default_R), g.get("n_cells", default_n), g.get("stretch", 1.0))


@lru_cache(maxsize=None)
def critical_constants(d: int) -> dict:
    """Constants of the critical model in dimension ``d`` via the Lane-Emden route."""
    par = ModelParams(d)
    sol = lane_emden_unit_ball(par)
    c_star = sol.vhls_ratio
    return {
        "d": d,
        "m": par.m,
        "sigma_d": par.sigma_d,
        "c_d": par.c_d,
        "zeta0_unit_ball": sol.central_value,
        "M_c": critical_mass(par, c_star),
        "C_star": c_star,
    }


def constants_report(dimension: int, n_cells: int = 256, ascent: AscentConfig | None = None) -> dict:
    """Shooting and ascent estimates of C* side by side.

    The ascent starts from a Gaussian on a grid three times the support of
    the unit-ball critical profile.
    """
    if dimension < 3:
        raise ConfigInvalidError([f"dimension: {dimension} is less than the minimum of 3"])
    base = critical_constants(dimension)
    par = ModelParams(dimension)
    grid = ascent_grid(par, 1.0, n_cells)
    init = profile_from_function(grid, lambda r: np.exp(-2.0 * r**2))
    cfg = ascent or AscentConfig(max_iters=5000, tol_value=1e-12)
    result = maximize_lambda(init, cfg)
    shoot = base["C_star"]
    return {
        "d": dimension,
        "m": par.m,
        "sigma_d": par.sigma_d,
        "c_d": par.c_d,
        "zeta0_unit_ball": base["zeta0_unit_ball"],
        "M_c": base["M_c"],
        "C_star_shooting": shoot,
        "C_star_ascent": result.value,
        "relative_gap": abs(shoot - result.value) / shoot,
    }


def _json_dump(data, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _initial_profile(cfg: ExperimentConfig, grid: RadialGrid) -> RadialProfile:
    d = cfg.dimension
    par = ModelParams(d)
    consts = critical_constants(d)
    M = cfg.mass_ratio * consts["M_c"]
    kind = cfg.initial.get("kind", "stationary")
    prm = cfg.initial.get("params", {})
    if kind == "stationary":
        V = stationary_profile(par, lane_emden_unit_ball(par), float(prm.get("R", 1.0)), grid)
        return V.scaled(cfg.mass_ratio)
    if kind == "self_similar":
        W = self_similar_profile(par, M, consts["M_c"])
        return self_similar_solution(par, W, float(prm.get("t0", 0.0)), grid)
    if kind == "gaussian":
        s = float(prm.get("t", 0.1))
        amp = M / (4 * math.pi * s) ** (d / 2)
        return profile_from_function(grid, lambda r: amp * np.exp(-(r**2) / (4 * s)))
    if kind == "ball":
        p = ball_indicator(grid, float(prm.get("radius", 1.0)), 1.0)
        return p.scaled(M / mass(p))
    if kind == "file":
        p = remap(read_profile_csv(prm["path"], d), grid)
        return p.scaled(M / mass(p))
    raise ConfigInvalidError([f"initial/kind: unknown kind {kind!r}"])


def _manifest(cfg: ExperimentConfig, command: str, out: Path, extra: dict | None = None) -> None:
    consts = critical_constants(cfg.dimension)
    data = {
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "constants": {k: consts[k] for k in ("m", "sigma_d", "c_d", "M_c", "C_star")},
        "version": _tool_version(),
    }
    if extra:
        data.update(extra)
    _json_dump(data, out / "manifest.json")


def _cmd_profile(cfg: ExperimentConfig, out: Path) -> int:
    par = ModelParams(cfg.dimension)
    sol = lane_emden_unit_ball(par)
    write_shooting_solution(sol, out / "lane_emden.csv")
    grid = cfg.make_grid(default_R=1.0, default_n=1024)
    R = float(cfg.initial.get("params", {}).get("R", grid.R_max / sol.support_radius))
    V = stationary_profile(par, sol, R, grid)
    write_profile_csv(V, out / "profile.csv")
    unit_grid = make_grid(par.d, sol.lm_norm_m ** (1 / (par.d - 2)), grid.n_cells)
    write_profile_csv(unit_norm_stationary_profile(par, sol, unit_grid), out / "profile_unit_norm.csv")
    _json_dump(asdict(energy_report(V)), out / "energy_report.json")
    return EXIT_OK


def _cmd_self_similar(cfg: ExperimentConfig, out: Path) -> int:
    par = ModelParams(cfg.dimension)
    consts = critical_constants(cfg.dimension)
    W = self_similar_profile(par, cfg.mass_ratio * consts["M_c"], consts["M_c"])
    write_shooting_solution(W, out / "self_similar.csv")
    grid = cfg.make_grid(default_R=1.5 * W.support_radius, default_n=1024)
    write_profile_csv(self_similar_solution(par, W, 0.0, grid), out / "profile.csv")
    el = euler_lagrange_check(W)
    _json_dump(
        {
            "mass": W.mass,
            "central_value": W.central_value,
            "support_radius": W.support_radius,
            "rescaled_energy": W.rescaled_energy,
            "identities": self_similar_identities(W),
            "euler_lagrange": asdict(el),
        },
        out / "self_similar_report.json",
    )
    return EXIT_OK


def _cmd_vhls(cfg: ExperimentConfig, out: Path) -> int:
    par = ModelParams(cfg.dimension)
    consts = critical_constants(cfg.dimension)
    grid = cfg.make_grid(default_R=3.0, default_n=256)
    kind = cfg.initial.get("kind", "gaussian")
    if kind == "gaussian" and "random" in cfg.initial.get("params", {}):
        # random decreasing start, reproducible through the seed
        rng = np.random.default_rng(cfg.seed)
        vals = np.sort(rng.random(grid.n_cells))[::-1] * (grid.centers < grid.R_max / 3)
        init = RadialProfile(grid, vals)
    else:
        init = _initial_profile(cfg, grid)
    result = maximize_lambda(init, AscentConfig(**cfg.ascent))
    write_iteration_log(result.log, out / "iterations.csv")
    write_profile_csv(result.profile, out / "profile.csv")
    _json_dump(
        {
            "lambda": result.value,
            "converged": result.converged,
            "reason": result.reason,
            "iterations": len(result.log),
            "C_star_shooting": consts["C_star"],
            "relative_gap": abs(result.value - consts["C_star"]) / consts["C_star"],
        },
        out / "vhls_result.json",
    )
    return EXIT_OK


def _cmd_evolve(cfg: ExperimentConfig, out: Path) -> int:
    par = ModelParams(cfg.dimension)
    grid = cfg.make_grid()
    u0 = _initial_profile(cfg, grid)
    solver = dict(cfg.solver)
    snapshot_every = int(solver.pop("snapshot_every", 1))
    scfg = SolverConfig(**{"t_end": 1.0, **solver})
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    sol = lane_emden_unit_ball(par)
    V = unit_norm_stationary_profile(par, sol, make_grid(par.d, sol.lm_norm_m ** (1 / (par.d - 2)), 1024))
    distances = []
    counter = [0]

    def on_record(state):
        k = counter[0]
        counter[0] += 1
        if snapshot_every and k % snapshot_every == 0:
            write_profile_csv(state.profile, snaps / f"snapshot_{k:05d}.csv")
        if mass(state.profile) > 0:
            distances.append((state.time, blowup_profile_distance(state, V)))

    result = run(u0, scfg, on_record=on_record)
    write_run_csv(result.records, out / "run.csv")
    data = summary(result.records, result.report, distances, scfg.frame)
    data.update(
        energy_violations=result.energy_violations,
        cumulative_energy_increase=result.cumulative_energy_increase,
        boundary_mass_fraction=result.boundary_mass_fraction,
        clip_events=result.clip_events,
        steps=result.state.steps_taken,
    )
    write_summary(data, out / "diagnostics_summary.json")
    _json_dump(asdict(result.report), out / "blowup_report.json")
    return EXIT_BLOWUP if result.report.detected else EXIT_OK


def _cmd_constants(cfg: ExperimentConfig, out: Path) -> int:
    n = cfg.grid.get("n_cells", 256)
    _json_dump(constants_report(cfg.dimension, n, AscentConfig(**cfg.ascent) if cfg.ascent else None), out / "constants.json")
    return EXIT_OK


_HANDLERS = {
    "profile": _cmd_profile,
    "self_similar": _cmd_self_similar,
    "vhls": _cmd_vhls,
    "evolve": _cmd_evolve,
    "constants": _cmd_constants,
}


def run_experiment(data: dict, command: str | None = None) -> int:
    """Validate ``data``, run it, and return the exit status."""
    try:
        cfg = ExperimentConfig.from_dict(data)
        command = command or cfg.command
        if command not in _HANDLERS:
            raise ConfigInvalidError([f"command: expected one of {COMMANDS}, got {command!r}"])
        if cfg.command is not None and cfg.command != command:
            raise ConfigInvalidError([f"command: config says {cfg.command!r} but {command!r} was requested"])
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _manifest(cfg, command, out)
        return _HANDLERS[command](cfg, out)
    except (CritmassError, OSError, TypeError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


def _sweep_job(args) -> int:
    data, command = args
    return run_experiment(data, command)


def _sweep(base: dict, sweep_dir: Path, command: str) -> int:
    jobs = []
    for path in sorted(sweep_dir.glob("*.json")):
        merged = {**base, **json.loads(path.read_text())}
        merged["output_dir"] = str(Path(base.get("output_dir", ".")) / path.stem)
        jobs.append((merged, command))
    if not jobs:
        log.error("no *.json configs in %s", sweep_dir)
        return EXIT_ERROR
    cap = int(os.environ.get("CRITMASS_THREADS", os.cpu_count() or 1))
    workers = max(1, min(cap, len(jobs)))
    if workers == 1:
        codes = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_sweep_job, jobs))
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_BLOWUP if EXIT_BLOWUP in codes else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="critmass", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--sweep", type=Path, default=None, help="directory of override configs")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_ERROR
    if not isinstance(data, dict):
        log.error("config must be a JSON object")
        return EXIT_ERROR
    if args.sweep is not None:
        return _sweep(data, args.sweep, args.command)
    return run_experiment(data, args.command)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
