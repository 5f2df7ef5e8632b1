import csv
import json
import math

import pytest

from critmass import cli
from critmass.cli import (
    EXIT_BLOWUP,
    EXIT_ERROR,
    EXIT_OK,
    ExperimentConfig,
    constants_report,
    critical_constants,
    main,
    run_experiment,
)
from critmass.errors import ConfigInvalidError


def evolve_cfg(out, **kw):
    cfg = {
        "dimension": 3,
        "mass_ratio": 0.5,
        "grid": {"R_max": 8.0, "n_cells": 128},
        "solver": {"t_end": 0.05, "record_every": 0.0025, "snapshot_every": 5},
        "initial": {"kind": "self_similar", "params": {"t0": 0.0}},
        "output_dir": str(out),
        "seed": 3,
    }
    cfg.update(kw)
    return cfg


def test_subcritical_evolve_exits_zero(tmp_path):
    out = tmp_path / "sub"
    assert run_experiment(evolve_cfg(out), "evolve") == EXIT_OK
    rows = list(csv.reader((out / "run.csv").open()))
    assert rows[0][:3] == ["t", "mass", "m2"]
    assert len(rows) == 22
    assert len(list((out / "snapshots").glob("snapshot_*.csv"))) == 5
    summ = json.loads((out / "diagnostics_summary.json").read_text())
    assert summ["blowup"]["detected"] is False
    assert summ["energy_violations"] == 0
    assert len(summ["profile_distance_series"]) == 21
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "evolve"
    assert len(man["config_hash"]) == 64
    for key in ("m", "c_d", "M_c", "C_star"):
        assert key in man["constants"]
    assert man["version"]


def test_supercritical_evolve_exits_two(tmp_path):
    out = tmp_path / "sup"
    cfg = {
        "dimension": 3,
        "mass_ratio": 2.0,
        "grid": {"R_max": 4.0, "n_cells": 512},
        "solver": {"t_end": 0.01, "record_every": 2.5e-4, "snapshot_every": 0},
        "initial": {"kind": "stationary", "params": {"R": 1.0}},
        "output_dir": str(out),
    }
    assert run_experiment(cfg, "evolve") == EXIT_BLOWUP
    rep = json.loads((out / "blowup_report.json").read_text())
    assert rep["detected"] is True
    assert 0 < rep["t_detect"] < rep["virial_upper_bound"]
    assert not list((out / "snapshots").glob("*.csv"))


@pytest.mark.parametrize(
    "patch",
    [
        {"dimension": 2},
        {"mass_ratio": 0.0},
        {"mass_ratio": -1.0},
        {"grid": {"n_cells": 2}},
        {"solver": {"cfl": 1.5}},
        {"solver": {"frame": "lab"}},
        {"initial": {"kind": "triangle"}},
        {"unknown_key": 1},
    ],
)
def test_invalid_config_exits_one(tmp_path, patch, caplog):
    assert run_experiment(evolve_cfg(tmp_path / "bad", **patch), "evolve") == EXIT_ERROR
    assert caplog.text


def test_schema_errors_are_listed():
    with pytest.raises(ConfigInvalidError) as exc:
        ExperimentConfig.from_dict({"dimension": 2, "mass_ratio": -1, "output_dir": "x"})
    msg = str(exc.value)
    assert "dimension" in msg and "mass_ratio" in msg


def test_support_exceeding_domain_exits_one(tmp_path):
    cfg = evolve_cfg(tmp_path / "dom", grid={"R_max": 1.0, "n_cells": 64})
    assert run_experiment(cfg, "evolve") == EXIT_ERROR


def test_command_mismatch(tmp_path):
    assert run_experiment(evolve_cfg(tmp_path / "x", command="vhls"), "evolve") == EXIT_ERROR
    assert run_experiment(evolve_cfg(tmp_path / "y")) == EXIT_ERROR


def test_reruns_are_byte_identical(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run_experiment(evolve_cfg(out), "evolve") == EXIT_OK
    for name in ("run.csv", "snapshots/snapshot_00010.csv", "diagnostics_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_seeded_vhls_is_reproducible(tmp_path):
    def go(out, seed):
        cfg = {
            "dimension": 3,
            "grid": {"R_max": 3.0, "n_cells": 64},
            "ascent": {"max_iters": 30},
            "initial": {"kind": "gaussian", "params": {"random": True}},
            "output_dir": str(out),
            "seed": seed,
        }
        assert run_experiment(cfg, "vhls") == EXIT_OK
        return (out / "profile.csv").read_bytes()

    assert go(tmp_path / "a", 1) == go(tmp_path / "b", 1)
    assert go(tmp_path / "c", 1) != go(tmp_path / "d", 2)
    res = json.loads((tmp_path / "a" / "vhls_result.json").read_text())
    assert res["lambda"] <= res["C_star_shooting"] * (1 + 1e-6)


def test_schema_round_trip(tmp_path):
    data = evolve_cfg(tmp_path, command="evolve")
    cfg = ExperimentConfig.from_dict(data)
    full = cfg.to_dict()
    assert {k: full[k] for k in data} == data
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))).digest() == cfg.digest()
    other = ExperimentConfig.from_dict({**data, "seed": 4})
    assert other.digest() != cfg.digest()


def test_floats_written_with_17_digits(tmp_path):
    out = tmp_path / "p"
    cfg = {"dimension": 3, "grid": {"R_max": 1.0, "n_cells": 32}, "output_dir": str(out)}
    assert run_experiment(cfg, "profile") == EXIT_OK
    rows = list(csv.reader((out / "profile.csv").open()))
    for row in rows[1:]:
        for x in row:
            assert float(repr(float(x))) == float(x)
    assert (out / "profile_unit_norm.csv").exists()
    rep = json.loads((out / "energy_report.json").read_text())
    assert abs(rep["free_energy"]) < 1e-2 * rep["lm_norm_m"]


def test_self_similar_command(tmp_path):
    out = tmp_path / "ss"
    cfg = {"dimension": 3, "mass_ratio": 0.5, "output_dir": str(out)}
    assert run_experiment(cfg, "self_similar") == EXIT_OK
    rep = json.loads((out / "self_similar_report.json").read_text())
    assert rep["mass"] == pytest.approx(0.5 * critical_constants(3)["M_c"], rel=1e-8)
    assert rep["central_value"] == pytest.approx(2.37515, rel=1e-5)


def test_main_and_sweep(tmp_path, monkeypatch):
    base = evolve_cfg(tmp_path / "sweep")
    cfg_path = tmp_path / "base.json"
    cfg_path.write_text(json.dumps(base))
    sweep = tmp_path / "overrides"
    sweep.mkdir()
    (sweep / "m25.json").write_text(json.dumps({"mass_ratio": 0.25}))
    (sweep / "m50.json").write_text(json.dumps({"mass_ratio": 0.5}))
    monkeypatch.setenv("CRITMASS_THREADS", "2")
    assert main(["evolve", "--config", str(cfg_path), "--sweep", str(sweep)]) == EXIT_OK
    for stem in ("m25", "m50"):
        man = json.loads((tmp_path / "sweep" / stem / "manifest.json").read_text())
        assert man["config"]["output_dir"].endswith(stem)
    m25 = json.loads((tmp_path / "sweep" / "m25" / "manifest.json").read_text())
    assert m25["config"]["mass_ratio"] == 0.25
    # single-worker path gives the same bytes
    monkeypatch.setenv("CRITMASS_THREADS", "1")
    base["output_dir"] = str(tmp_path / "serial")
    cfg_path.write_text(json.dumps(base))
    assert main(["evolve", "--config", str(cfg_path), "--sweep", str(sweep)]) == EXIT_OK
    a = (tmp_path / "sweep" / "m50" / "run.csv").read_bytes()
    b = (tmp_path / "serial" / "m50" / "run.csv").read_bytes()
    assert a == b


def test_main_bad_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    assert main(["constants", "--config", str(p)]) == EXIT_ERROR
    p.write_text("{not json")
    assert main(["constants", "--config", str(p)]) == EXIT_ERROR
    assert main(["constants", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR


def test_constants_report_d3():
    rep = constants_report(3)
    assert set(rep) == {
        "d", "m", "sigma_d", "c_d", "zeta0_unit_ball", "M_c",
        "C_star_shooting", "C_star_ascent", "relative_gap",
    }
    assert rep["m"] == 4 / 3
    assert rep["c_d"] == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert rep["c_d"] == pytest.approx(0.0795775, abs=1e-7)
    assert rep["M_c"] == pytest.approx(202.9, abs=0.05)
    assert rep["C_star_shooting"] == pytest.approx(2.183, abs=1e-3)
    assert rep["relative_gap"] <= 1e-2
    assert rep["relative_gap"] == pytest.approx(
        abs(rep["C_star_shooting"] - rep["C_star_ascent"]) / rep["C_star_shooting"]
    )


def test_constants_report_d4():
    rep = constants_report(4)
    assert rep["m"] == 1.5
    assert rep["relative_gap"] <= 1e-2


def test_constants_report_rejects_low_dimension():
    with pytest.raises(ConfigInvalidError):
        constants_report(2)


def test_constants_command(tmp_path):
    out = tmp_path / "c"
    assert run_experiment({"dimension": 3, "grid": {"n_cells": 128}, "output_dir": str(out)}, "constants") == EXIT_OK
    rep = json.loads((out / "constants.json").read_text())
    assert rep["relative_gap"] <= 1e-2
    assert cli.COMMANDS[-1] == "constants"
