import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from resonant_phase.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_phase_equatorial(capsys):
    code, out, _ = run(capsys, "phase", str(SCENARIOS / "equatorial.json"))
    assert code == 0
    report = json.loads(out)
    assert report["classification"]["label"] == "KindI"
    for entry in report["results"]:
        assert entry["sum_residual"] < 1e-8
    assert report["cross_method_max_discrepancy"] < 1e-4
    assert report["config"]["tolerances"]["quad_rtol"] == 1e-9


def test_phase_on_circle_is_validation_error(capsys):
    code, out, err = run(capsys, "phase", str(SCENARIOS / "on_circle.json"))
    assert code == 2
    assert out == ""
    assert "R^2 = Gamma^2/4" in err and "R.Gamma = 0" in err


def test_axis_crossing_falls_back_with_notice(capsys):
    code, out, err = run(capsys, "--format", "csv", "phase", str(SCENARIOS / "axis_crossing.json"))
    assert code == 0
    assert "used line quadrature" in err
    first = rows(out)[0]
    assert first["used"] == "LineQuadrature"
    code, _, err = run(capsys, "--quiet", "phase", str(SCENARIOS / "axis_crossing.json"))
    assert code == 0 and err == ""


def test_usage_errors(capsys):
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys)[0] == 1
    assert run(capsys, "chern", "--gamma", "0,0", "--radius", "2", "--mesh", "8x8")[0] == 1


def test_bad_scenarios(capsys, tmp_path):
    assert run(capsys, "phase", str(tmp_path / "missing.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "phase", str(bad))[0] == 2
    extra = write(tmp_path, {"gamma": [0, 0, 1], "loop": {"kind": "Circle3D", "center": [0, 0, 0], "radius": 2},
                             "methods": ["line"], "colour": "red"})
    code, _, err = run(capsys, "phase", extra)
    assert code == 2 and "colour" in err


def test_convergence_failure_exit_code(capsys, tmp_path):
    data = json.loads((SCENARIOS / "drive.json").read_text())
    data["dynamics"]["steps"] = 1000
    code, _, err = run(capsys, "evolve", write(tmp_path, data))
    assert code == 3
    assert "increase steps" in err


def test_csv_is_bit_identical_without_timing(capsys, tmp_path):
    args = ("--format", "csv", "--no-timing", "phase", str(SCENARIOS / "linked.json"))
    first = run(capsys, *args)[1]
    second = run(capsys, *args)[1]
    assert first == second
    assert "\r" not in first


def test_out_flag_after_subcommand(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "classify", str(SCENARIOS / "linked.json"), "--out", str(target))
    assert code == 0 and out == ""
    report = json.loads(target.read_text())
    assert report["label"] == "KindII"


def test_numbers_round_trip(capsys):
    code, out, _ = run(capsys, "--format", "csv", "--no-timing", "phase", str(SCENARIOS / "equatorial.json"))
    assert code == 0
    line = rows(out)[1]
    value = float(line["im_gamma1"])
    assert repr(value) == repr(float(f"{value:.17g}"))
    assert value == pytest.approx(0.5 * np.pi / np.sqrt(3.75), abs=1e-6)


def test_sweep_N_discrepancy_second_order(capsys):
    code, out, _ = run(capsys, "sweep", str(SCENARIOS / "equatorial.json"), "--axis", "N",
                       "--values", "256,512,1024,2048", "--no-timing")
    assert code == 0
    table = rows(out)
    assert [r["value"] for r in table] == ["256", "512", "1024", "2048"]
    disc = np.array([float(r["discrepancy"]) for r in table])
    assert np.all(np.log2(disc[:-1] / disc[1:]) >= 1.9)
    assert all(r["wall_ms"] == "" for r in table)


def test_sweep_T_ladder(capsys):
    code, out, _ = run(capsys, "sweep", str(SCENARIOS / "drive.json"), "--axis", "T",
                       "--values", "125,250,500")
    assert code == 0
    disc = [float(r["discrepancy"]) for r in rows(out)]
    assert disc[0] > disc[1] > disc[2]


def test_sweep_Z_linking_flips(capsys, tmp_path):
    scenario = write(tmp_path, {
        "gamma": [0, 0, 1], "N": 512, "methods": ["discrete"],
        "loop": {"kind": "Circle3D", "center": [0.5, 0, 0], "radius": 0.2, "normal": [0, 1, 0]},
    })
    code, out, err = run(capsys, "sweep", scenario, "--axis", "Z",
                         "--values", "-0.3,-0.19,0.0,0.19,0.2,0.3", "--no-timing")
    assert code == 0
    table = rows(out)
    links = [r["class_L"] for r in table]
    assert links[0] == links[-1] == "0"
    assert {abs(int(x)) for x in links[1:4]} == {1}
    # the loop touches the circle at Z = 0.2
    assert "LoopTooCloseError" in table[4]["error"]
    assert "notice" in err


def test_sweep_all_rows_failing(capsys):
    code, _, _ = run(capsys, "sweep", str(SCENARIOS / "equatorial.json"), "--axis", "radius",
                     "--values", "0.5")
    assert code == 2


def test_chern_examples(capsys):
    code, out, _ = run(capsys, "chern", "--gamma", "0,0,1", "--radius", "2", "--mesh", "16x32")
    report = json.loads(out)
    assert code == 0 and report["c1"] == 1
    assert report["surface_sum"][0] == pytest.approx(-2 * np.pi, abs=1e-9)
    code, out, _ = run(capsys, "chern", "--gamma", "0,0,1", "--radius", "0.2", "--mesh", "16x32")
    assert code == 0 and json.loads(out)["c1"] == 0
    assert run(capsys, "chern", "--gamma", "0,0,1", "--radius", "0.5", "--mesh", "16x32")[0] == 2


def test_evolve_report(capsys):
    code, out, _ = run(capsys, "evolve", str(SCENARIOS / "drive.json"), "--no-timing")
    assert code == 0
    report = json.loads(out)
    state = report["states"]["1"]
    assert state["adiabatic"] and state["discrepancy"] < 1e-2
    assert report["config"]["dynamics"]["steps"] >= 1000
