import json

import numpy as np
import pytest

from tetherguide import analysis
from tetherguide.cli import main
from tetherguide.config import (
    SCHEMA, builtin_config, builtin_config_path, scenario_from_config, set_param, validate_config,
)
from tetherguide.errors import ConfigError
from tetherguide.sim import read_csv, run


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture
def short_point(tmp_path):
    cfg = builtin_config("point_default")
    cfg["sim"]["duration"] = 3.0
    return cfg


@pytest.fixture
def short_path():
    cfg = builtin_config("detour_path")
    cfg["sim"]["duration"] = 4.0
    return cfg


def test_builtin_configs_validate():
    for name in ("point_default", "detour_path", "stop_path", "pulse_point"):
        validate_config(builtin_config(name))


def test_schema_rejects_unknown_and_malformed():
    cfg = builtin_config("point_default")
    for bad in ({**cfg, "extra": 1}, {**cfg, "human": {"mass": -1}}, {**cfg, "task": {"type": "point"}},
                {**cfg, "policy": {"type": "stop", "params": {"t1": 1}}}, {"human": {"mass": 1}}):
        with pytest.raises(ConfigError):
            validate_config(bad)
    assert SCHEMA["additionalProperties"] is False


def test_set_param():
    cfg = builtin_config("point_default")
    out = set_param(cfg, "guidance.kp", 2.0)
    assert out["guidance"]["kp"] == 2.0 and cfg["guidance"]["kp"] == 4.5
    assert set_param(cfg, "human.damping", 10.0)["human"]["damping"] == [10.0] * 3
    with pytest.raises(ConfigError):
        set_param(cfg, "guidance.nope", 1.0)


def test_simulate_default_writes_outputs(tmp_path, short_point):
    code = main(["simulate", _write(tmp_path, short_point), "--out", str(tmp_path / "o"), "--csv", "--svg"])
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["exit_code"] == 0 and rep["status"] == "ok"
    assert set(rep["passivity"]) == {"robot", "human", "combined"}
    assert rep["max_V_increment"] <= 0
    assert (tmp_path / "o" / "plots.svg").read_text().startswith("<svg")


def test_simulate_input_errors(tmp_path, short_point, capsys):
    assert main(["simulate", str(tmp_path / "missing.json")]) == 2
    heavy = dict(short_point, guidance={"kp": 4.5, "fz": 200.0})
    assert main(["simulate", _write(tmp_path, heavy), "--out", str(tmp_path)]) == 2
    assert "feasib" in capsys.readouterr().err
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["simulate", str(tmp_path / "junk.json")]) == 2


def test_simulate_abort_exit_code(tmp_path, short_point):
    cfg = dict(short_point, initial={"p_H": [0, 0, 0], "p_R": [0, 0, 1.5], "v_R": [0, 0, 15.0]})
    assert main(["simulate", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert json.loads((tmp_path / "o" / "report.json").read_text())["status"] == "liftoff"


def test_analyze_round_trip_is_exact(tmp_path, short_point):
    cfg_path = _write(tmp_path, short_point)
    assert main(["simulate", cfg_path, "--out", str(tmp_path), "--csv"]) == 0
    assert main(["analyze", str(tmp_path / "trajectory.csv"), cfg_path, "--port", "both", "--out", str(tmp_path)]) == 0
    sc = scenario_from_config(short_point)
    mem = analysis.passivity_report(run(sc), "combined", sc.terminal_refs(), sc.params)
    disk = json.loads((tmp_path / "passivity.json").read_text())["passivity"]
    assert disk["margin"] == mem.margin and disk["supply_integral"] == mem.supply_integral
    assert (tmp_path / "storage.svg").exists()


def test_analyze_stop_pulse_human_port(tmp_path):
    cfg = builtin_config("pulse_point")
    cfg["policy"] = {"type": "stop", "params": {"t1": 1.0, "t2": 3.0, "ramp": 0.3}}
    cfg["sim"]["duration"] = 4.0
    cfg_path = _write(tmp_path, cfg)
    main(["simulate", cfg_path, "--out", str(tmp_path), "--csv"])
    assert main(["analyze", str(tmp_path / "trajectory.csv"), cfg_path, "--port", "human", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "passivity.json").read_text())["passivity"]["margin"] > 0


def test_analyze_missing_channel(tmp_path, short_point, capsys):
    cfg_path = _write(tmp_path, short_point)
    main(["simulate", cfg_path, "--out", str(tmp_path), "--csv"])
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    keep = [i for i, c in enumerate(lines[0].split(",")) if not c.startswith("uH")]
    (tmp_path / "cut.csv").write_text("\n".join(",".join(r.split(",")[i] for i in keep) for r in lines) + "\n")
    assert main(["analyze", str(tmp_path / "cut.csv"), cfg_path, "--port", "human", "--out", str(tmp_path)]) == 2
    assert "MissingLogs" in capsys.readouterr().err


def test_tolerance_scale_env(tmp_path, short_point, monkeypatch):
    cfg_path = _write(tmp_path, short_point)
    main(["simulate", cfg_path, "--out", str(tmp_path), "--csv"])
    monkeypatch.setenv("TETHER_TOL_SCALE", "abc")
    assert main(["analyze", str(tmp_path / "trajectory.csv"), cfg_path, "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("TETHER_TOL_SCALE", "1e-6")
    rep_code = main(["analyze", str(tmp_path / "trajectory.csv"), cfg_path, "--out", str(tmp_path)])
    tol = json.loads((tmp_path / "passivity.json").read_text())["passivity"]["tolerance"]
    assert tol == pytest.approx(1e-12) and rep_code in (0, 4)


def test_follow_outputs_and_single_run_warning(tmp_path, short_path):
    cfg_path = _write(tmp_path, short_path)
    assert main(["follow", cfg_path, "--runs", "2", "--randomize-human", "--out", str(tmp_path / "f")]) == 0
    rep = json.loads((tmp_path / "f" / "report.json").read_text())
    assert rep["aggregate"] is not None and len(rep["runs"]) == 2
    assert rep["runs"][0]["human_mass"] != rep["runs"][1]["human_mass"]
    assert (tmp_path / "f" / "overlay.svg").exists()
    with pytest.warns(UserWarning):
        assert main(["follow", cfg_path, "--runs", "1", "--out", str(tmp_path / "g")]) == 0
    assert json.loads((tmp_path / "g" / "report.json").read_text())["aggregate"] is None


def test_follow_rejects_point_task(tmp_path, short_point):
    assert main(["follow", _write(tmp_path, short_point), "--out", str(tmp_path)]) == 2


def test_sweep_rows_and_flags(tmp_path, short_point):
    cfg_path = _write(tmp_path, short_point)
    assert main(["sweep", cfg_path, "--param", "guidance.kp", "--values", "1,4.5,10", "--jobs", "1",
                 "--out", str(tmp_path / "a")]) == 0
    rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("id,guidance.kp,status")
    assert main(["sweep", cfg_path, "--param", "guidance.fz", "--values", "1,150", "--jobs", "2",
                 "--out", str(tmp_path / "b")]) == 0
    rows = (tmp_path / "b" / "sweep.csv").read_text().splitlines()
    assert rows[2].split(",")[2] == "infeasible" and rows[1].split(",")[2] == "ok"
    assert main(["sweep", cfg_path, "--param", "guidance.zzz", "--values", "1"]) == 2


def test_sweep_two_parameters(tmp_path, short_point):
    cfg_path = _write(tmp_path, short_point)
    assert main(["sweep", cfg_path, "--param", "guidance.kp", "--values", "1,2", "--param", "cable.stiffness",
                 "--values", "50,100,200", "--jobs", "1", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 7


def test_stiffness_changes_only_altitude(tmp_path):
    from tetherguide import campaign

    cfg = builtin_config("point_default")
    rows = campaign.sweep(cfg, [("cable.stiffness", [50.0, 200.0])], jobs=1)
    # equilibrium robot altitude is rest + fz/k
    sc = scenario_from_config(cfg)
    refs = [scenario_from_config(set_param(cfg, "cable.stiffness", k)).terminal_refs() for k in (50.0, 200.0)]
    np.testing.assert_allclose([r.p_R_ref[2] for r in refs], [1.02, 1.005])
    np.testing.assert_allclose(refs[0].p_R_ref[:2], refs[1].p_R_ref[:2])
    assert sc.terminal_refs().p_H_ref.tolist() == refs[0].p_H_ref.tolist()
    assert all(r["status"] == "ok" for r in rows)


def test_acceptance_list(capsys):
    assert main(["acceptance", "--list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 10 and out[0].strip().startswith("1")


def test_csv_files_identical_across_runs(tmp_path, short_path):
    cfg_path = _write(tmp_path, short_path)
    for d in ("a", "b"):
        main(["follow", cfg_path, "--runs", "2", "--randomize-human", "--no-svg", "--out", str(tmp_path / d)])
    for f in ("run_00.csv", "run_01.csv", "path_error.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_builtin_config_path_exists():
    assert builtin_config_path("detour_path").is_file()


def test_read_back_trajectory_matches(tmp_path, short_point):
    cfg_path = _write(tmp_path, short_point)
    main(["simulate", cfg_path, "--out", str(tmp_path), "--csv"])
    tr = read_csv(tmp_path / "trajectory.csv")
    assert tr.x.shape == (3001, 12)
