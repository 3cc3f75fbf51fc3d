import csv
import json
from pathlib import Path

import pytest

from dunehom import cli
from dunehom.cell import CellSolveError
from dunehom.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_PASS, EXIT_SOLVER, build_manifest, main
from dunehom.fields import read_dsf1


def _write(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


SIMULATE_ZERO = """\
[run]
command = simulate
[preset]
name = tidal-long
c = 0
[grid]
n = 8
[model]
eps = 0.2
T_final = 0.05
initial = constant
"""

HYPOTHESES = """\
[run]
command = hypotheses
[preset]
name = tidal-long
[model]
eps = 0.1
"""

CELL = """\
[run]
command = cell
[preset]
name = gapped-long
[grid]
n = 8
[model]
eps = 0.1
[nodes]
m_theta = 16
[cell]
nu_schedule = 0.1, 0.03
"""


def _report(out):
    return json.loads((Path(out) / "report.json").read_text())


def test_simulate_zero_transport_passes(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, SIMULATE_ZERO), "--out", str(out), "--quiet"]) == EXIT_PASS
    rep = _report(out)
    assert rep["constants"]["mass_drift"] == 0.0
    snaps = read_dsf1(out / "snapshots.dsf1")
    assert (snaps == 1.0).all()
    rows = list(csv.reader(open(out / "trajectory.csv")))
    assert rows[0] == ["step", "t", "mass", "l2", "dt"]


def test_hypotheses_command_on_tidal_long(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, HYPOTHESES), "--out", str(out)]) == EXIT_PASS
    assert "PASS" in capsys.readouterr().out
    rows = list(csv.reader(open(out / "hypotheses.csv")))
    assert rows[0] == ["record", "key", "sample_point", "value"]
    assert not any(r[0] == "violation" for r in rows)
    assert _report(out)["constants"]["violations"] == 0


def test_violated_hypothesis_exits_one(tmp_path):
    body = HYPOTHESES.replace("name = tidal-long", "name = tidal-long\ng0 = 0\ng1 = 0.5\ng2 = 1.0")
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, body), "--out", str(out), "--quiet"]) == EXIT_CHECK
    rep = _report(out)
    assert rep["passed"] is False and rep["exit_code"] == EXIT_CHECK


def test_two_entry_ladder_rejected(tmp_path, capsys):
    body = SIMULATE_ZERO.replace("command = simulate", "command = verify").replace(
        "eps = 0.2", "eps_ladder = 0.2, 0.1")
    assert main(["--config", _write(tmp_path, body), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "ladder needs >= 3" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_and_bad_seed(tmp_path):
    assert main(["--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG
    assert main(["--config", _write(tmp_path, HYPOTHESES), "--seed", str(2**64)]) == EXIT_CONFIG


def test_solver_failure_exits_three_and_keeps_artifacts(tmp_path, monkeypatch):
    def boom(cfg, out, report):
        (out / "partial.csv").write_text("x\n1\n")
        raise CellSolveError("periodic march stalled")

    monkeypatch.setitem(cli.PIPELINES, "hypotheses", boom)
    out = tmp_path / "o"
    assert main(["--config", _write(tmp_path, HYPOTHESES), "--out", str(out), "--quiet"]) == EXIT_SOLVER
    rep = _report(out)
    assert "stalled" in rep["solver_failure"]
    assert {m["file"] for m in rep["manifest"]} == {"config.ini", "partial.csv"}


def test_cell_outputs_deterministic_and_manifest_complete(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        code = main(["--config", _write(tmp_path, CELL), "--out", str(out), "--seed", "7", "--quiet"])
        assert code == EXIT_PASS
        outs.append(out)
    rep = _report(outs[0])
    files = {p.relative_to(outs[0]).as_posix() for p in outs[0].rglob("*") if p.is_file()}
    assert {m["file"] for m in rep["manifest"]} == files - {"report.json"}
    for name in ("estimates.csv", "cell_solution.dsf1", "config.ini"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert rep["config"]["seed"] == 7
    assert any(c["name"] == "warm_start_uniqueness" and c["passed"] for c in rep["checks"])


def test_manifest_digest(tmp_path):
    (tmp_path / "a.txt").write_bytes(b"abc")
    (tmp_path / "report.json").write_text("{}")
    (m,) = build_manifest(tmp_path)
    assert m == {"file": "a.txt", "bytes": 3,
                 "sha256": "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"}


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "dunehom", "--config", _write(tmp_path, HYPOTHESES),
                           "--out", str(tmp_path / "o"), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == EXIT_PASS, proc.stderr
