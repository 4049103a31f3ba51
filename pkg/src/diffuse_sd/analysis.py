"""Error norms, convergence reports and parameter sweeps."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import logging
import math
import threading
import time
from typing import Callable, List, Optional

import numpy as np

from .manufactured import ManufacturedCase, stokes_darcy_benchmark  # noqa: F401  (re-exported)
from .linalg import DEFAULT_ORDERING
from .problem import Discretization
from .sharp import SharpDiscretization
from .stepper import SolutionState, TimeGrid, run

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("level", "h", "dt", "epsilon", "delta", "e_u", "rate_u", "e_p", "rate_p", "runtime_s")


class AnalysisError(RuntimeError):
    pass


@dataclass
class TotalFields:
    """Blended velocity (nt, nq, 2) and pressure (nt, nq) at quadrature points."""

    velocity: np.ndarray
    pressure: np.ndarray


def discrete_fields(disc: Discretization, state: SolutionState):
    """Stokes velocity, fluid pressure, Darcy pressure and Darcy velocity at quadrature points."""
    geom = disc.geom
    u = disc.space_u.evaluate(state.u, geom)
    pi = disc.space_q.evaluate(state.pi, geom)
    p, gp = disc.space_p.evaluate(state.p, geom, gradient=True)
    q = -np.einsum("de,tqe->tqd", disc.problem.params.kappa, gp)
    return u, pi, p, q


def total_fields(disc: Discretization, state: SolutionState) -> TotalFields:
    """``u Phi + q Psi`` and ``pi Phi + p Psi`` with ``q = -kappa grad p``.

    The weights are the discretisation's own phase values, i.e. the
    regularised phase field for the diffuse method and the subdomain
    indicator for the sharp one.
    """
    u, pi, p, q = discrete_fields(disc, state)
    phi, psi = disc.sample.phi, disc.sample.psi
    return TotalFields(u * phi[..., None] + q * psi[..., None], pi * phi + p * psi)


def exact_total_fields(disc: Discretization, case: ManufacturedCase, t) -> TotalFields:
    x, y = disc.geom.x, disc.geom.y
    phi, psi = disc.sample.phi, disc.sample.psi
    u = case.velocity(x, y, t) * phi[..., None] + case.darcy_velocity(x, y, t) * psi[..., None]
    p = case.fluid_pressure(x, y, t) * phi + case.darcy_pressure(x, y, t) * psi
    return TotalFields(u, p)


def l2_norm(values, jw):
    v = np.asarray(values, dtype=float)
    sq = v * v if v.ndim == jw.ndim else np.sum(v.reshape(jw.shape + (-1,)) ** 2, axis=-1)
    return math.sqrt(float(np.sum(jw * sq)))


def relative_errors(disc: Discretization, state: SolutionState, case: ManufacturedCase = None, t=None):
    """Relative L2 errors ``(e_u, e_p)`` of the total velocity and pressure."""
    case = case or disc.problem.exact
    if case is None:
        raise AnalysisError("no exact solution available")
    t = state.t if t is None else t
    num = total_fields(disc, state)
    ref = exact_total_fields(disc, case, t)
    jw = disc.geom.jw
    nu, npr = l2_norm(ref.velocity, jw), l2_norm(ref.pressure, jw)
    if nu == 0 or npr == 0:
        raise AnalysisError("exact total field has zero norm")
    return l2_norm(num.velocity - ref.velocity, jw) / nu, l2_norm(num.pressure - ref.pressure, jw) / npr


def weighted_norms(disc: Discretization, state: SolutionState, case: ManufacturedCase = None, t=None,
                   phi=None, psi=None):
    """``(||e_u||_{L2(Phi)}, ||D(e_u)||_{L2(Phi)}, ||grad e_p||_{L2(Psi)})``.

    ``e_u``/``e_p`` are the state itself, or its difference from ``case`` at
    time ``t`` when an exact solution is given. Weights default to the
    discretisation's phase values.
    """
    geom = disc.geom
    phi = disc.sample.phi if phi is None else np.broadcast_to(phi, geom.jw.shape)
    psi = disc.sample.psi if psi is None else np.broadcast_to(psi, geom.jw.shape)
    u, gu = disc.space_u.evaluate(state.u, geom, gradient=True)
    _, gp = disc.space_p.evaluate(state.p, geom, gradient=True)
    if case is not None:
        t = state.t if t is None else t
        u = u - case.velocity(geom.x, geom.y, t)
        gu = gu - case.velocity_gradient(geom.x, geom.y, t)
        gp = gp - case.darcy_gradient(geom.x, geom.y, t)
    strain = 0.5 * (gu + np.swapaxes(gu, -1, -2))
    return (l2_norm(u, geom.jw * phi), l2_norm(strain.reshape(strain.shape[:-2] + (4,)), geom.jw * phi),
            l2_norm(gp, geom.jw * psi))


def fluid_velocity_difference(disc_a: Discretization, state_a, disc_b: Discretization, state_b, fluid_mask):
    """``||u_a - u_b||_{L2}`` over the triangles selected by ``fluid_mask`` (same mesh)."""
    ua = disc_a.space_u.evaluate(state_a.u, disc_a.geom)
    ub = disc_b.space_u.evaluate(state_b.u, disc_b.geom)
    jw = disc_a.geom.jw * np.asarray(fluid_mask, dtype=float)[:, None]
    return l2_norm(ua - ub, jw), l2_norm(ub, jw)


# -- reports ---------------------------------------------------------------------

def rate(prev, curr, ratio=2.0):
    if prev is None or curr is None or prev <= 0 or curr <= 0:
        return None
    return math.log(prev / curr) / math.log(ratio)


@dataclass
class ReportRow:
    level: int
    h: float
    dt: float
    epsilon: float
    delta: float
    e_u: float
    e_p: float
    runtime_s: float
    rate_u: Optional[float] = None
    rate_p: Optional[float] = None


@dataclass
class ConvergenceReport:
    rows: List[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    refinement_ratio: float = 2.0
    records: dict = field(default_factory=dict)

    def add(self, row: ReportRow):
        self.rows.append(row)
        self.rows.sort(key=lambda r: r.level)
        self._rates()

    def _rates(self):
        prev = None
        for r in self.rows:
            r.rate_u = rate(prev.e_u, r.e_u, self.refinement_ratio) if prev else None
            r.rate_p = rate(prev.e_p, r.e_p, self.refinement_ratio) if prev else None
            prev = r

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([r.level] + [_fmt(getattr(r, c)) for c in REPORT_COLUMNS[1:]])

    def table(self):
        lines = ["  ".join(f"{c:>10}" for c in REPORT_COLUMNS)]
        for r in self.rows:
            lines.append("  ".join(f"{_fmt(getattr(r, c)):>10}" if c != "level" else f"{r.level:>10}"
                                   for c in REPORT_COLUMNS))
        return "\n".join(lines)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6e}"


class SweepError(AnalysisError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SweepPoint:
    """One run of a sweep: how to build it and how to label it."""

    level: int
    build: Callable  # () -> (Problem, TimeGrid)
    h: float
    epsilon: float
    delta: float


def sharp_difference(disc: Discretization, state, sdisc, sstate):
    """Relative L2 distance of total velocity and pressure to a sharp solution on the same mesh."""
    a, b = total_fields(disc, state), total_fields(sdisc, sstate)
    jw = disc.geom.jw
    nu, npr = l2_norm(b.velocity, jw), l2_norm(b.pressure, jw)
    return (l2_norm(a.velocity - b.velocity, jw) / nu if nu > 0 else float("nan"),
            l2_norm(a.pressure - b.pressure, jw) / npr if npr > 0 else float("nan"))


def measure(disc, state, reference, sharp=None):
    """``(e_u, e_p)`` of a finished run against the chosen reference.

    ``exact``: relative total-field errors; ``sharp``: relative total-field
    distance to the sharp solution; ``sharp_fluid``: absolute L2 distance of
    the Stokes velocity over the fluid triangles (``e_p`` undefined);
    ``none``: no measurement.
    """
    if reference == "exact":
        return relative_errors(disc, state)
    if reference == "sharp":
        return sharp_difference(disc, state, *sharp)
    if reference == "sharp_fluid":
        sdisc, sstate = sharp
        return fluid_velocity_difference(disc, state, sdisc, sstate, sdisc.fluid_mask)[0], float("nan")
    if reference == "none":
        return float("nan"), float("nan")
    raise AnalysisError(f"unknown reference {reference!r}")


REFERENCES = ("exact", "sharp", "sharp_fluid", "none")


def _run_point(point: SweepPoint, reference, sharp_cache, diagnostics, ordering):
    started = time.perf_counter()
    problem, grid = point.build()
    disc = Discretization(problem)
    state, records = run(disc, grid, diagnostics=diagnostics, ordering=ordering)
    sharp = sharp_cache(problem, grid, ordering) if reference.startswith("sharp") else None
    e_u, e_p = measure(disc, state, reference, sharp)
    row = ReportRow(point.level, point.h, grid.dt, point.epsilon, point.delta, e_u, e_p,
                    time.perf_counter() - started)
    return row, records


def run_sweep(points: List[SweepPoint], reference="exact", threads=1, metadata=None,
              refinement_ratio=2.0, diagnostics=False, ordering=DEFAULT_ORDERING) -> ConvergenceReport:
    """Run every sweep point and collect errors with consecutive-level rates.

    See :func:`measure` for the meaning of ``reference``. Sharp solutions are
    computed once per (mesh, time grid) and shared between points. Per-level
    step diagnostics end up in ``report.records`` when requested.
    """
    if reference not in REFERENCES:
        raise AnalysisError(f"unknown reference {reference!r}")
    report = ConvergenceReport(metadata=dict(metadata or {}), refinement_ratio=refinement_ratio)
    cache = []
    lock = threading.Lock()

    def sharp_solution(problem, grid, ordering):
        with lock:
            for mesh, g, hit in cache:
                if mesh is problem.mesh and g == grid:
                    return hit
            sdisc = SharpDiscretization(problem)
            hit = (sdisc, run(sdisc, grid, ordering=ordering)[0])
            cache.append((problem.mesh, grid, hit))
            return hit

    def record(pt, result):
        row, recs = result
        report.add(row)
        if diagnostics:
            report.records[pt.level] = recs

    errors = []
    if threads <= 1:
        for pt in points:
            try:
                record(pt, _run_point(pt, reference, sharp_solution, diagnostics, ordering))
            except Exception as exc:  # keep the partial report
                errors.append((pt.level, exc))
                break
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(pt, pool.submit(_run_point, pt, reference, sharp_solution, diagnostics, ordering))
                       for pt in points]
            for pt, fut in futures:
                try:
                    record(pt, fut.result())
                except Exception as exc:
                    errors.append((pt.level, exc))
    if errors:
        level, exc = errors[0]
        raise SweepError(f"sweep level {level} failed: {exc}", report) from exc
    return report


DELTA_SCHEDULES = ("halving", "fixed", "eps_cubed")


def scheduled_delta(schedule, delta0, coarsest_n, n, epsilon):
    """Regularisation for a point with ``n`` cells per unit length and width ``epsilon``."""
    if schedule == "halving":
        return delta0 * coarsest_n / n
    if schedule == "fixed":
        return delta0
    if schedule == "eps_cubed":
        return epsilon ** 3
    raise AnalysisError(f"unknown delta schedule {schedule!r}")


def manufactured_h_sweep(levels=5, scheme="backward_euler", coarsest=5, T_final=1.0, delta0=1e-3,
                         delta_schedule="halving", **problem_kwargs):
    """Sweep points with ``dt = h = epsilon = 1/n`` for ``n = coarsest * 2^k``.

    ``delta`` starts at ``delta0`` and halves with ``h`` (``halving``),
    stays at ``delta0`` (``fixed``) or equals ``epsilon**3`` (``eps_cubed``).
    """
    from .problems import manufactured_problem

    points = []
    for k in range(levels):
        n = coarsest * 2 ** k
        delta = scheduled_delta(delta_schedule, delta0, coarsest, n, 1.0 / n)

        def build(n=n, delta=delta):
            prob = manufactured_problem(n, epsilon=1.0 / n, delta=delta, **problem_kwargs)
            return prob, TimeGrid(T_final, int(round(n * T_final)), scheme)

        points.append(SweepPoint(k, build, 1.0 / n, 1.0 / n, delta))
    return points
