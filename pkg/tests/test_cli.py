import json
import os
import subprocess
import sys

import numpy as np
import pytest

from curvedtube import cli
from curvedtube import config as CF
from curvedtube import operator as opmod
from curvedtube import spectra
from curvedtube.errors import SolverError

STRAIGHT = """
name = "tiny_straight"
description = "small straight strip"
reference = "no bound state"
d = 2
tasks = ["spectrum"]

[curve]
kind = "profile"
components = [{ family = "zero" }]

[section]
kind = "interval"
a = 0.5

[grid]
L = 4.0
ds = 0.125

[solver]
k = 2
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _schema():
    return json.loads((CF.example_dir() / "report.schema.json").read_text())


def test_catalog_has_six_or_more_runnable_entries():
    cat = CF.list_examples()
    assert len(cat) >= 6
    names = {c[0] for c in cat}
    assert {"straight_d2", "straight_d3", "bent_strip", "helical_square",
            "disk_torus_segment", "gaussian_strip"} <= names
    for name, desc, ref, path in cat:
        assert os.path.exists(path) and desc
        CF.load_config(path)


def test_straight_entry_reference():
    ref = {c[0]: c[2] for c in CF.list_examples()}
    assert ref["straight_d2"] == "no bound state"
    assert ref["straight_d3"] == "no bound state"


def test_list_examples_command(capsys):
    assert cli.main(["list-examples"]) == 0
    out = capsys.readouterr().out
    assert "straight_d2" in out and "reference: no bound state" in out


@pytest.mark.slow
@pytest.mark.parametrize("name", [c[0] for c in CF.list_examples()])
def test_every_example_runs(name, tmp_path):
    import jsonschema
    path = dict((c[0], c[3]) for c in CF.list_examples())[name]
    assert cli.main(["run", path, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, _schema())
    assert (tmp_path / "eigenvalues.csv").exists()


def test_straight_example_report(tmp_path, capsys):
    path = dict((c[0], c[3]) for c in CF.list_examples())["straight_d2"]
    assert cli.main(["run", path, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    lam = rep["spectrum"]["eigenvalues"][0]
    assert np.pi**2 - 0.05 < lam < np.pi**2 + 0.05
    assert rep["spectrum"]["below_count"] == 0
    out = capsys.readouterr().out
    assert "PASS spectrum.sorted" in out
    with open(tmp_path / "eigenvalues.csv") as fh:
        assert fh.readline().strip() == "index,lambda,residual,below_threshold"


def test_bent_strip_cross_reference(tmp_path):
    path = dict((c[0], c[3]) for c in CF.list_examples())["bent_strip"]
    assert cli.main(["run", path, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["certificate"]["verdict"] == "certified"
    assert rep["spectrum"]["below_count"] >= 1
    assert rep["cross_reference"]["consistent"]
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["verdict"] == "certified"


def test_assumption_violation_exits_3_before_assembly(tmp_path, monkeypatch, capsys):
    text = STRAIGHT.replace('{ family = "zero" }', '{ family = "constant", value = 1.5 }').replace(
        "a = 0.5", "a = 1.0")

    def boom(*a, **k):
        raise AssertionError("assembly must not run")

    monkeypatch.setattr(opmod, "assemble_form", boom)
    monkeypatch.setattr(opmod, "assemble_schroedinger", boom)
    assert cli.main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "1.5" in err and ">= 1" in err
    assert not (tmp_path / "o" / "report.json").exists()


def test_syntax_error_exits_2_with_location(tmp_path, capsys):
    bad = STRAIGHT.replace("a = 0.5", "a = = 0.5")
    assert cli.main(["run", _write(tmp_path, bad)]) == 2
    err = capsys.readouterr().err
    line = bad.splitlines().index("a = = 0.5") + 1
    assert f"line {line}" in err and "column" in err


@pytest.mark.parametrize("edit, message", [
    (("ds = 0.125", "ds = -0.125"), "grid.ds"),
    (('tasks = ["spectrum"]', "tasks = []"), "tasks"),
    (('tasks = ["spectrum"]', 'tasks = ["dance"]'), "unknown task"),
    (("k = 2", "k = 0"), "solver.k"),
])
def test_semantic_errors_exit_2(tmp_path, capsys, edit, message):
    assert cli.main(["run", _write(tmp_path, STRAIGHT.replace(*edit))]) == 2
    assert message in capsys.readouterr().err


def test_missing_referenced_file_is_a_config_error(tmp_path):
    text = STRAIGHT.replace('kind = "profile"\ncomponents = [{ family = "zero" }]',
                            'kind = "csv"\npath = "nope.csv"')
    with pytest.raises(CF.ConfigError):
        CF.parse_config(text, source=str(tmp_path / "c.toml"))


def test_solver_failure_exits_4(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise SolverError("factorization breakdown")
    monkeypatch.setattr(spectra, "lowest_eigenpairs", broken)
    assert cli.main(["run", _write(tmp_path, STRAIGHT), "--out", str(tmp_path / "o")]) == 4


def test_reproducible_except_timestamp(tmp_path):
    cfg = _write(tmp_path, STRAIGHT)
    for d in ("a", "b"):
        assert cli.main(["run", cfg, "--out", str(tmp_path / d), "--seed", "3"]) == 0
    a = (tmp_path / "a" / "report.json").read_text().splitlines()
    b = (tmp_path / "b" / "report.json").read_text().splitlines()
    diff = [(x, y) for x, y in zip(a, b) if x != y]
    assert len(a) == len(b)
    assert all('"timestamp"' in x for x, _ in diff)
    assert (tmp_path / "a" / "eigenvalues.csv").read_bytes() == (tmp_path / "b" / "eigenvalues.csv").read_bytes()


def test_report_validates_against_schema(tmp_path):
    import jsonschema
    assert cli.main(["run", _write(tmp_path, STRAIGHT), "--out", str(tmp_path)]) == 0
    jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), _schema())


def test_emit_flags(tmp_path):
    import scipy.io
    out = tmp_path / "o"
    assert cli.main(["run", _write(tmp_path, STRAIGHT), "--out", str(out),
                     "--emit-matrix", "--emit-slices"]) == 0
    A = scipy.io.mmread(str(out / "operator_A.mtx"))
    M = scipy.io.mmread(str(out / "operator_M.mtx"))
    assert A.shape == M.shape
    line = np.loadtxt(out / "slice_line_1.csv", delimiter=",", skiprows=1)
    plane = np.loadtxt(out / "slice_plane_1.csv", delimiter=",", skiprows=1)
    assert line.shape[1] == 2 and plane.shape[1] == 2
    assert (out / "slice_line_2.csv").exists()


def test_refine_flag_records_study(tmp_path):
    assert cli.main(["run", _write(tmp_path, STRAIGHT), "--out", str(tmp_path), "--refine", "2"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["refinement"]["spacings"] == [0.125, 0.0625]


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "curvedtube.cli", "list-examples"],
                         capture_output=True, text=True, check=True)
    assert "bent_strip" in out.stdout
