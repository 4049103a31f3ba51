"""Command line entry point: ``solve <config> [--out DIR] [--threads N] [--check]``."""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import platform
import sys
import time
import traceback

import numpy as np

from . import expr
from .analysis import (ConvergenceReport, ReportRow, SweepError, SweepPoint, measure, run_sweep,
                       scheduled_delta)
from .config import ConfigError, RunConfig, parse_config
from .forms import PhysicalParams
from .mesh import RectangleSpec, build_uniform, import_mesh, refine_toward_levelset
from .phasefield import PhaseField, Profile, levelset_from_string
from .problem import Dirichlet, Discretization, Problem
from .problems import manufactured_problem, sine_mesh, sine_problem
from .sharp import SharpDiscretization
from .stepper import TimeGrid, TimeStepper, init_state, write_diagnostics
from .vtk import write_vtk

log = logging.getLogger("diffuse_sd")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


# -- problem construction -----------------------------------------------------------

def make_params(cfg: RunConfig):
    return PhysicalParams(cfg.rho, cfg.mu, cfg.c0, cfg.kappa_tensor, cfg.alpha_bjs)


def make_mesh(cfg: RunConfig, n):
    if cfg.mesh_file:
        return import_mesh(cfg.mesh_file)
    if cfg.problem == "sine_interface_6_2":
        mesh = sine_mesh(n)
    else:
        (x0, x1), (y0, y1) = cfg.x_range, cfg.y_range
        nx = max(1, int(round(n * (x1 - x0))))
        ny = max(1, int(round(n * (y1 - y0))))
        mesh = build_uniform(RectangleSpec((x0, x1), (y0, y1), nx, ny))
    if cfg.refine_levels and cfg.levelset:
        mesh = refine_toward_levelset(mesh, levelset_from_string(cfg.levelset), cfg.refine_band, cfg.refine_levels)
    return mesh


def _space_time(text):
    f = expr.compile_expression(str(text), ("x", "y", "t"))
    return lambda x, y, t: f(x, y, np.full(np.shape(np.asarray(x)), float(t)))


def build_problem(cfg: RunConfig, n, epsilon, delta, mesh=None) -> Problem:
    mesh = mesh if mesh is not None else make_mesh(cfg, n)
    params = make_params(cfg)
    common = dict(velocity_element=cfg.velocity_element, pressure_element=cfg.pressure_element,
                  darcy_element=cfg.darcy_element, quadrature_degree=cfg.quadrature_degree)
    if cfg.problem == "manufactured_6_1":
        return manufactured_problem(n, epsilon=epsilon, delta=delta, profile=cfg.profile, alpha=cfg.alpha,
                                    params=params, mesh=mesh, weighted_divergence=cfg.divergence == "weighted",
                                    interface_form=cfg.interface_form, initial_projection=cfg.initial_projection,
                                    **common)
    if cfg.problem == "sine_interface_6_2":
        prob = sine_problem(mesh, epsilon, delta, cfg.profile, params, cfg.inflow, **common)
        prob.weighted_divergence = cfg.divergence == "weighted"
        prob.initial_projection = cfg.initial_projection
        return prob
    ls = levelset_from_string(cfg.levelset)
    profile = Profile(cfg.profile, cfg.alpha) if cfg.profile == "power" else Profile(cfg.profile)
    fx, fy = _space_time(cfg.forcing_x), _space_time(cfg.forcing_y)
    ux, uy = _space_time(cfg.velocity_dirichlet_x), _space_time(cfg.velocity_dirichlet_y)
    return Problem(
        mesh=mesh, params=params, phase=PhaseField(epsilon, delta, profile, ls), name="custom",
        forcing=lambda x, y, t: np.stack([fx(x, y, t), fy(x, y, t)], axis=-1),
        source=_space_time(cfg.source),
        velocity_dirichlet=Dirichlet(tuple(cfg.velocity_dirichlet_tags),
                                     lambda x, y, t: np.stack([ux(x, y, t), uy(x, y, t)], axis=-1))
        if cfg.velocity_dirichlet_tags else None,
        darcy_dirichlet=Dirichlet(tuple(cfg.darcy_dirichlet_tags), _space_time(cfg.darcy_dirichlet))
        if cfg.darcy_dirichlet_tags else None,
        weighted_divergence=cfg.divergence == "weighted", interface_form=cfg.interface_form,
        initial_projection=cfg.initial_projection, **common)


def sweep_points(cfg: RunConfig):
    """Sweep points for the configured sweep (a single point when ``sweep = none``)."""
    base_n = cfg.mesh_n
    points = []
    if cfg.sweep == "h":
        for k in range(cfg.levels):
            n = base_n * 2 ** k
            eps = 1.0 / n
            dt = 1.0 / n if cfg.problem == "manufactured_6_1" else cfg.dt
            delta = scheduled_delta(cfg.delta_schedule, cfg.delta, base_n, n, eps)
            points.append(_point(cfg, k, n, eps, delta, dt))
        return points
    mesh = make_mesh(cfg, base_n)
    if cfg.sweep == "none":
        delta = scheduled_delta(cfg.delta_schedule, cfg.delta, base_n, base_n, cfg.epsilon)
        return [_point(cfg, 0, base_n, cfg.epsilon, delta, cfg.dt, mesh)]
    values = [float(v) for v in cfg.sweep_values]
    for k, v in enumerate(values):
        if cfg.sweep == "epsilon":
            eps, delta = v, scheduled_delta(cfg.delta_schedule, cfg.delta, base_n, base_n, v)
        else:
            eps, delta = cfg.epsilon, v
        points.append(_point(cfg, k, base_n, eps, delta, cfg.dt, mesh))
    return points


def _point(cfg, level, n, eps, delta, dt, mesh=None):
    steps = int(round(cfg.T_final / dt))

    def build():
        return build_problem(cfg, n, eps, delta, mesh), TimeGrid(cfg.T_final, steps, cfg.scheme)

    return SweepPoint(level, build, 1.0 / n, eps, delta)


# -- invariant audit -----------------------------------------------------------------

def audit(cfg: RunConfig):
    """Structural checks on the configured discretisation without time stepping."""
    from .fem import make_quadrature, monomial_integral

    results = {}
    prob = sweep_points(cfg)[0].build()[0]
    prob.mesh.audit()
    results["mesh_conforming"] = True
    area = float(prob.mesh.areas.sum())
    results["mesh_area"] = area
    rule = make_quadrature(cfg.quadrature_degree)
    lam = rule.points
    worst = 0.0
    for a in range(cfg.quadrature_degree + 1):
        for b in range(cfg.quadrature_degree + 1 - a):
            approx = 0.5 * float(np.sum(rule.weights * lam[:, 1] ** a * lam[:, 2] ** b))
            worst = max(worst, abs(approx - monomial_integral(a, b)) / monomial_integral(a, b))
    results["quadrature_max_relative_error"] = worst
    disc = Discretization(prob)
    ops = disc.operators
    sym = {}
    for name in ("mass_u", "viscous", "bjs", "mass_p", "stiff_p"):
        m = getattr(ops, name)
        scale = max(abs(m).max(), 1e-300)
        sym[name] = float(abs(m - m.T).max() / scale)
    results["symmetry"] = sym
    results["coupling_skew"] = float(abs(ops.c_pu + ops.c_up.T).max()) if ops.c_up.nnz else 0.0
    phi = disc.sample.phi
    results["phase_min"] = float(phi.min())
    results["phase_max"] = float(phi.max())
    results["ok"] = (worst < 1e-12 and max(sym.values()) < 1e-13 and results["coupling_skew"] == 0.0
                     and results["phase_min"] >= 0.0 and results["phase_max"] <= 1.0)
    return results


# -- execution ------------------------------------------------------------------------

def _writable(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
        return True
    except OSError:
        return False


def _error_record(kind, message, out=None):
    rec = {"status": "error", "kind": kind, "message": str(message)}
    print(json.dumps(rec), file=sys.stderr)
    if out is not None:
        try:
            (Path(out) / "error.json").write_text(json.dumps(rec, indent=2) + "\n")
        except OSError:
            pass


def _single_run(cfg: RunConfig, out: Path, written):
    point = sweep_points(cfg)[0]
    started = time.perf_counter()
    problem, grid = point.build()
    disc = Discretization(problem)
    stepper = TimeStepper(disc, grid, ordering=cfg.ordering)
    state = init_state(disc)

    def snapshot(s):
        if cfg.snapshots and (s.step % cfg.snapshots == 0 or s.step == grid.N):
            name = f"snapshot_{s.step:05d}.vtk"
            write_vtk(out / name, disc, s)
            written.append(name)

    state, records = stepper.run(state, diagnostics=cfg.diagnostics, callback=snapshot)
    sharp = None
    if cfg.reference in ("sharp", "sharp_fluid"):
        sdisc = SharpDiscretization(problem)
        sstate, _ = TimeStepper(sdisc, grid, ordering=cfg.ordering).run(init_state(sdisc))
        sharp = (sdisc, sstate)
        if cfg.snapshots:
            write_vtk(out / "sharp_final.vtk", sdisc, sstate)
            written.append("sharp_final.vtk")
    e_u, e_p = measure(disc, state, cfg.reference, sharp)
    report = ConvergenceReport()
    report.add(ReportRow(0, point.h, grid.dt, point.epsilon, point.delta, e_u, e_p,
                         time.perf_counter() - started))
    if cfg.diagnostics:
        report.records[0] = records
    return report


def execute(cfg: RunConfig, out, threads=1, check=False):
    """Run the configuration; returns a process exit status."""
    out = Path(out)
    if not _writable(out):
        _error_record("output", f"output directory not writable: {out}")
        return EXIT_USAGE
    written = []
    manifest = {"config": cfg.as_dict(), "threads": threads, "check": check,
                "python": platform.python_version(), "numpy": np.__version__}
    try:
        if check:
            results = audit(cfg)
            (out / "check.json").write_text(json.dumps(results, indent=2) + "\n")
            written.append("check.json")
            status = EXIT_OK if results["ok"] else EXIT_FAILURE
        else:
            if cfg.sweep == "none":
                report = _single_run(cfg, out, written)
            else:
                report = run_sweep(sweep_points(cfg), cfg.reference, threads=threads,
                                   metadata={"scheme": cfg.scheme}, diagnostics=cfg.diagnostics,
                                   ordering=cfg.ordering)
            _write_report(cfg, out, report, written)
            log.info("\n%s", report.table())
            status = EXIT_OK
    except SweepError as exc:
        _write_report(cfg, out, exc.report, written)
        _error_record("solver", exc, out)
        status = EXIT_FAILURE
    except (ConfigError, ValueError) as exc:
        _error_record("config", exc, out)
        status = EXIT_USAGE
    except Exception as exc:  # solver failures, singular systems, ...
        log.debug("%s", traceback.format_exc())
        _error_record("solver", f"{type(exc).__name__}: {exc}", out)
        status = EXIT_FAILURE
    manifest["outputs"] = written
    manifest["exit_status"] = status
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


def _write_report(cfg, out, report, written):
    if not cfg.timings:
        for r in report.rows:
            r.runtime_s = None
    report.to_csv(out / "report.csv")
    written.append("report.csv")
    if report.records:
        if len(report.records) == 1:
            write_diagnostics(out / "diagnostics.csv", next(iter(report.records.values())))
            written.append("diagnostics.csv")
        else:
            for level, recs in sorted(report.records.items()):
                name = f"diagnostics_level{level}.csv"
                write_diagnostics(out / name, recs)
                written.append(name)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="solve", description="Diffuse-interface Stokes-Darcy solver")
    parser.add_argument("config", help="configuration file (key = value lines)")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=1, help="concurrent sweep points")
    parser.add_argument("--check", action="store_true", help="run the invariant audit only")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        _error_record("config", exc)
        return EXIT_USAGE
    if args.threads < 1:
        _error_record("config", "threads: must be >= 1")
        return EXIT_USAGE
    out = args.out if args.out is not None else cfg.out
    return execute(cfg, out, threads=args.threads, check=args.check)


if __name__ == "__main__":
    sys.exit(main())
