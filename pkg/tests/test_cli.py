"""Command-line interface: exit codes, determinism, cross-checks."""

import csv
import os

import pytest

import hwgrad
from hwgrad.cli import main

DATA = os.path.join(os.path.dirname(hwgrad.__file__), "data")
ARCH = os.path.join(DATA, "edge40.arch")
TECH = os.path.join(DATA, "edge40.tech")


@pytest.fixture()
def model_file(tmp_path):
    p = tmp_path / "m.model"
    assert main(["dgen", "--arch", ARCH, "--tech", TECH, "--out", str(p)]) == 0
    return str(p)


@pytest.fixture()
def workload_file(tmp_path):
    p = tmp_path / "dot.wl"
    assert main(["gen-workload", "dot", "--out", str(p)]) == 0
    return str(p)


def test_usage_errors_exit_1(model_file, workload_file, capsys):
    assert main(["dopt"]) == 1  # no model/workload/scenario
    assert main(["sweep", "--out", "/tmp/x.csv"]) == 1
    assert main(["dsim", "--model", model_file, "--workload", workload_file,
                 "--override", "broken"]) == 1


def test_validation_errors_exit_2(tmp_path, capsys):
    missing = str(tmp_path / "nope.model")
    assert main(["dsim", "--model", missing, "--workload", missing]) == 2
    bad = tmp_path / "bad.model"
    bad.write_text("not a model file\n")
    wl = tmp_path / "w.wl"
    wl.write_text("v a comp=vector:8 alloc=64 read=- write=-\n")
    assert main(["dsim", "--model", str(bad), "--workload", str(wl)]) == 2


def test_dsim_report_and_trace(model_file, workload_file, tmp_path, capsys):
    rep = tmp_path / "rep.txt"
    tr = tmp_path / "trace.csv"
    rc = main(["dsim", "--model", model_file, "--workload", workload_file,
               "--report", str(rep), "--trace", str(tr)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "runtime_s" in out and "energy_nJ" in out
    assert "area_mm2" in out and "power_W" in out
    assert rep.read_text() == out
    with open(tr) as f:
        rows = list(csv.reader(f))
    assert len(rows) > 1  # header + one row per executed vertex


def test_dsim_override_changes_output(model_file, workload_file, capsys):
    main(["dsim", "--model", model_file, "--workload", workload_file])
    base = capsys.readouterr().out
    main(["dsim", "--model", model_file, "--workload", workload_file,
          "--override", "sram_cellReadPower=5.0"])
    changed = capsys.readouterr().out
    assert base != changed


def test_reruns_are_byte_identical(model_file, workload_file, tmp_path):
    outs = []
    for tag in ("one", "two"):
        rep = tmp_path / f"rep-{tag}.txt"
        tr = tmp_path / f"tr-{tag}.csv"
        assert main(["dsim", "--model", model_file, "--workload",
                     workload_file, "--report", str(rep),
                     "--trace", str(tr)]) == 0
        outs.append((rep.read_bytes(), tr.read_bytes()))
    assert outs[0] == outs[1]
    models = []
    for tag in ("one", "two"):
        p = tmp_path / f"m-{tag}.model"
        assert main(["dgen", "--arch", ARCH, "--tech", TECH,
                     "--out", str(p)]) == 0
        models.append(p.read_bytes())
    assert models[0] == models[1]


def test_gen_workload_kinds(tmp_path):
    for kind in ("cnn", "mlp", "dot", "transformer"):
        p = tmp_path / f"{kind}.wl"
        assert main(["gen-workload", kind, "--out", str(p)]) == 0
        assert p.exists() and p.stat().st_size > 0


def test_scenario_dopt_agrees_with_scenario_sweep(tmp_path, capsys):
    sw = tmp_path / "sweep.csv"
    assert main(["sweep", "--scenario", "dot", "--out", str(sw)]) == 0
    capsys.readouterr()
    rc = main(["dopt", "--scenario", "dot", "--epochs", "200"])
    out = capsys.readouterr().out
    assert rc == 0
    got = {}
    for line in out.splitlines():
        if " = " in line:
            k, v = line.split(" = ")
            got[k] = v
    with open(sw) as f:
        rows = [r for r in csv.DictReader(f) if r["is_min"] == "1"]
    assert len(rows) == 1
    assert float(got["B"]) == float(rows[0]["B"])
    assert float(got["P"]) == float(rows[0]["P"])
    assert float(got["objective"]) == float(rows[0]["objective"])


def test_sweep_explicit_params(model_file, workload_file, tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--model", model_file, "--workload", workload_file,
               "--param", "globalBuf_nReadPorts=1,2,4,8", "--out", str(out)])
    assert rc == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert sum(int(r["is_min"]) for r in rows) == 1


def test_sweep_rejects_huge_grid(model_file, workload_file, tmp_path):
    grid = ",".join(str(i) for i in range(1, 1002))
    args = ["sweep", "--model", model_file, "--workload", workload_file,
            "--out", str(tmp_path / "x.csv")]
    for name in ("globalBuf_nReadPorts", "mainMem_nReadPorts"):
        args += ["--param", f"{name}={grid}"]
    assert main(args) == 2


def test_dopt_history_written(model_file, workload_file, tmp_path):
    hist = tmp_path / "hist.csv"
    rc = main(["dopt", "--model", model_file, "--workload", workload_file,
               "--objective", "time", "--epochs", "5", "--history",
               str(hist)])
    assert rc in (0, 3)
    with open(hist) as f:
        rows = list(csv.reader(f))
    assert rows[0][:3] == ["epoch", "objective", "area"]
    assert len(rows) >= 2
