import csv
import json
import subprocess
import sys

import pytest

from er_repeater import analytic as an
from er_repeater import cli


def _run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path), "--quiet"])


def _csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _manifest(tmp_path, command):
    return json.loads((tmp_path / f"{command}_manifest.json").read_text())


@pytest.mark.parametrize("argv,outputs", [
    (["derive-params"], ["derived_params.csv"]),
    (["fig3", "--points", "11"], ["fig3.csv"]),
    (["fig5-dipole", "--points", "5"], ["fig5_dipole.csv"]),
    (["readout-scan", "--points", "20"], ["readout_scan.csv"]),
    (["simulate-gate", "--delta", "95"], ["simulate_gate.csv"]),
    (["fig7", "--curve", "B", "--points", "11"], ["fig7.csv"]),
    (["mc-rate", "--trials", "5000", "--jobs", "1", "--m", "4,8"], ["mc_rate.csv"]),
])
def test_subcommands_write_outputs_and_manifest(tmp_path, argv, outputs):
    assert _run(tmp_path, *argv) == 0
    man = _manifest(tmp_path, argv[0])
    for name in outputs:
        text = (tmp_path / name).read_text()
        assert text.startswith("# tool: er-repeater")
        assert name in man["outputs"]
    assert man["command"] == argv[0] and man["preset_sha256"]
    assert man["warnings"] == []


def test_fig3_summary_and_override(tmp_path):
    assert _run(tmp_path, "fig3", "--points", "5") == 0
    assert _manifest(tmp_path, "fig3")["summary"]["F_entangle_at_preset_purcell"] == pytest.approx(0.996, abs=5e-4)
    assert _run(tmp_path, "fig3", "--points", "5", "--set", "ion.gamma_star=0") == 0
    rows = _csv(tmp_path / "fig3.csv")
    assert all(float(r["F_entangle"]) == pytest.approx(1.0) for r in rows)


def test_override_with_units(tmp_path):
    assert _run(tmp_path, "derive-params", "--set", "cavity.kappa=8 2pi*MHz") == 0
    par = _manifest(tmp_path, "derive-params")["parameters"]
    assert par["cavity"]["kappa"]["value"] == pytest.approx(8.0)


def test_unknown_scenario_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.run_scenario("fig99", out=out) == 1
    assert not out.exists()
    assert "fig99" in capsys.readouterr().err
    assert cli.main(["fig99", "--out", str(out)]) == 1
    assert not out.exists()


def test_unknown_parameter_key(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["fig3", "--out", str(out), "--set", "ion.not_a_key=3"]) == 1
    assert "not_a_key" in capsys.readouterr().err
    assert not out.exists()


def test_bad_numeric_argument_exits_one(tmp_path):
    assert cli.main(["fig3", "--points", "many", "--out", str(tmp_path)]) == 1


def test_run_scenario(tmp_path):
    assert cli.run_scenario("fig5-dipole", ["dipole.delta_nu_err_ratio=0"], out=tmp_path,
                            args=["--points", "3", "--quiet"]) == 0
    assert _manifest(tmp_path, "fig5-dipole")["summary"]["reference_fidelity"] > 0.9868


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["mc-rate", "--trials", "3000", "--jobs", "1", "--m", "4",
                         "--seed", "5", "--out", str(d), "--quiet"]) == 0
    assert (a / "mc_rate.csv").read_bytes() == (b / "mc_rate.csv").read_bytes()


def test_replay_reproduces_outputs(tmp_path, capsys):
    assert _run(tmp_path, "fig5-dipole", "--points", "4") == 0
    assert cli.main(["replay", str(tmp_path / "fig5-dipole_manifest.json")]) == 0


def test_replay_detects_changed_output(tmp_path):
    assert _run(tmp_path, "fig5-dipole", "--points", "4") == 0
    path = tmp_path / "fig5-dipole_manifest.json"
    man = json.loads(path.read_text())
    man["outputs"]["fig5_dipole.csv"] = "0" * 64
    path.write_text(json.dumps(man))
    assert cli.main(["replay", str(path)]) != 0


def test_truncation_warning_gives_exit_two(tmp_path):
    code = _run(tmp_path, "simulate-gate", "--delta", "1",
                "--set", "exchange_sim.g_over_kappa=0.5", "--set", "exchange_sim.n_max=1",
                "--set", "exchange_sim.cooperativity=1000")
    assert code == 2
    assert _manifest(tmp_path, "simulate-gate")["warnings"]


def test_boundary_optimum_gives_exit_two(tmp_path):
    code = _run(tmp_path, "fig4", "--p-eta-d", "0", "--delta-min", "5", "--delta-max", "20",
                "--points", "3", "--no-refine")
    assert code == 2
    assert (tmp_path / "fig4.csv").exists()


def test_fig4_resume_reuses_checkpoint(tmp_path, monkeypatch):
    argv = ["fig4", "--p-eta-d", "0,1", "--delta-min", "10", "--delta-max", "200",
            "--points", "4", "--no-refine"]
    assert _run(tmp_path, *argv) in (0, 2)
    first = (tmp_path / "fig4.csv").read_bytes()
    assert list(tmp_path.glob("fig4_checkpoint_*.json"))

    def boom(*a, **k):
        raise AssertionError("simulation should not run on resume")
    monkeypatch.setattr(cli.lb, "_simulate_point", boom)
    assert _run(tmp_path, *argv, "--resume") in (0, 2)
    assert (tmp_path / "fig4.csv").read_bytes() == first


# ---- eval ----------------------------------------------------------------------

def _eval(tmp_path, op, text):
    src = tmp_path / "in.csv"
    src.write_text(text)
    code = _run(tmp_path, "eval", op, "--input", str(src))
    out = tmp_path / f"eval_{op}.csv"
    return code, (_csv(out) if out.exists() else None)


def test_eval_dipole_reference_row(tmp_path):
    code, rows = _eval(tmp_path, "dipole", "delta_nu_hz,delta_nu_err_hz\n250e3,5e3\n")
    assert code == 0
    assert float(rows[0]["fidelity"]) == pytest.approx(0.987, abs=1e-3)
    assert float(rows[0]["gate_time_s"]) == pytest.approx(an.dipole_gate_time(250e3), rel=1e-6)


def test_eval_isolates_bad_rows(tmp_path, capsys):
    code, rows = _eval(tmp_path, "dipole", "delta_nu_hz\n30e6\n0\nabc\n10e6\n")
    assert code == 0
    assert [float(r["delta_nu_hz"]) for r in rows] == [30e6, 10e6]
    err = capsys.readouterr().err
    assert "line 3" in err and "line 4" in err
    assert len(_manifest(tmp_path, "eval")["summary"]["errors"]) == 2


def test_eval_empty_table(tmp_path):
    code, rows = _eval(tmp_path, "entangle", "")
    assert code == 0 and rows == []


def test_eval_missing_column(tmp_path, capsys):
    code, _ = _eval(tmp_path, "efficiency", "eta_d\n0.9\n")
    assert code == 1
    assert "L0_km" in capsys.readouterr().err


def test_eval_unknown_operation(tmp_path):
    code, _ = _eval(tmp_path, "teleport", "x\n1\n")
    assert code == 1


@pytest.mark.parametrize("op,text,col", [
    ("entangle", "purcell\n5000\n", "fidelity"),
    ("init", "purcell\n5000\n", "fidelity"),
    ("readout", "purcell\n5000\n", "fidelity"),
    ("efficiency", "L0_km\n37.5\n", "p_en"),
    ("exchange", "C\n90000\n", "F_max"),
    ("electric-shift", "r_nm\n10\n", "delta_nu_hz"),
])
def test_eval_operations(tmp_path, op, text, col):
    code, rows = _eval(tmp_path, op, text)
    assert code == 0 and len(rows) == 1
    assert float(rows[0][col]) > 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "er_repeater", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
