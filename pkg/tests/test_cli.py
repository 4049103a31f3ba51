import csv
import json

import numpy as np
import pytest

from diffuse_sd.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from diffuse_sd.problem import Discretization
from diffuse_sd.problems import manufactured_problem
from diffuse_sd.sharp import SharpDiscretization
from diffuse_sd.stepper import TimeGrid, run
from diffuse_sd.vtk import vertex_fields, write_vtk


def config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_report(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SWEEP = "problem = manufactured_6_1\nsweep = h\nlevels = 5\nmesh_n = 1\ntimings = false\n"


def test_sweep_writes_one_row_per_level(tmp_path):
    out = tmp_path / "out"
    assert main([config(tmp_path, SWEEP), "--out", str(out)]) == EXIT_OK
    rows = read_report(out / "report.csv")
    assert [r["level"] for r in rows] == ["0", "1", "2", "3", "4"]
    assert rows[0]["rate_u"] == "" and rows[1]["rate_u"] != ""
    assert all(r["runtime_s"] == "" for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["levels"] == 5 and manifest["exit_status"] == 0
    assert "report.csv" in manifest["outputs"]


def test_identical_configs_give_identical_reports(tmp_path):
    cfg = config(tmp_path, SWEEP.replace("levels = 5", "levels = 3"))
    main([cfg, "--out", str(tmp_path / "a")])
    main([cfg, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_unwritable_output_exits_two(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main([config(tmp_path, "problem = manufactured_6_1\n"), "--out", str(blocker / "sub")]) == EXIT_USAGE
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["status"] == "error" and rec["kind"] == "output"


def test_bad_config_exits_two(tmp_path, capsys):
    assert main([config(tmp_path, "delta = 0.7\n"), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["kind"] == "config" and "delta" in rec["message"]


def test_check_runs_audit_without_stepping(tmp_path):
    out = tmp_path / "chk"
    assert main([config(tmp_path, "problem = manufactured_6_1\n"), "--out", str(out), "--check"]) == EXIT_OK
    res = json.loads((out / "check.json").read_text())
    assert res["ok"] and res["coupling_skew"] == 0.0 and res["mesh_area"] == pytest.approx(2.0)
    assert not (out / "report.csv").exists()


def test_single_run_writes_diagnostics_and_snapshots(tmp_path):
    out = tmp_path / "one"
    text = "problem = manufactured_6_1\ndiagnostics = true\nsnapshots = 2\nscheme = midpoint\n"
    assert main([config(tmp_path, text), "--out", str(out)]) == EXIT_OK
    assert len(read_report(out / "report.csv")) == 1
    diag = read_report(out / "diagnostics.csv")
    assert len(diag) == 5 and max(float(r["energy_identity_residual"]) for r in diag) <= 1e-9
    assert sorted(p.name for p in out.glob("snapshot_*.vtk")) == [
        "snapshot_00002.vtk", "snapshot_00004.vtk", "snapshot_00005.vtk"]


def test_custom_problem_from_expressions(tmp_path):
    text = """problem = custom
levelset = flat(1)
reference = none
forcing_x = sin(pi * x) * t
velocity_dirichlet_tags = ["top"]
darcy_dirichlet_tags = ["bottom"]
darcy_dirichlet = y * t
"""
    out = tmp_path / "custom"
    assert main([config(tmp_path, text), "--out", str(out)]) == EXIT_OK
    assert read_report(out / "report.csv")[0]["e_u"] == "nan"


def test_solver_failure_exits_one(tmp_path):
    text = "problem = custom\nlevelset = flat(1)\nreference = none\nmesh_n = 2\nforcing_x = exp(1000 * x)\n"
    out = tmp_path / "bad"
    with np.errstate(all="ignore"):
        assert main([config(tmp_path, text), "--out", str(out)]) == EXIT_FAILURE
    rec = json.loads((out / "error.json").read_text())
    assert rec["kind"] == "solver" and "residual nan" in rec["message"]
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == EXIT_FAILURE


def test_vtk_snapshot_layout(tmp_path):
    disc = Discretization(manufactured_problem(3))
    state, _ = run(disc, TimeGrid(1.0, 1))
    path = tmp_path / "s.vtk"
    write_vtk(path, disc, state)
    lines = path.read_text().splitlines()
    mesh = disc.problem.mesh
    assert lines[0] == "# vtk DataFile Version 3.0" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert f"POINTS {mesh.nv} double" in lines and f"CELLS {mesh.nt} {4 * mesh.nt}" in lines
    assert f"POINT_DATA {mesh.nv}" in lines
    for header in ("VECTORS u_tot double", "SCALARS p_tot double 1", "SCALARS phi double 1"):
        assert header in lines
    start = lines.index("SCALARS phi double 1") + 2
    phi = np.array(lines[start:start + mesh.nv], dtype=float)
    assert np.allclose(phi, disc.problem.phase.phi(mesh.vertices[:, 0], mesh.vertices[:, 1]))


def test_vertex_fields_blend_stokes_and_darcy():
    prob = manufactured_problem(4)
    disc = SharpDiscretization(prob)
    case = prob.exact
    state, _ = run(disc, TimeGrid(1.0, 1))
    u, p, phi = vertex_fields(disc, state)
    v = prob.mesh.vertices
    top = v[:, 1] > 1.5
    assert np.all(phi[top] == 1.0) and np.all(phi[v[:, 1] < 0.5] == 0.0)
    assert np.allclose(u[top], state.u.reshape(-1, 2)[:prob.mesh.nv][top])
    assert np.isfinite(p).all()
