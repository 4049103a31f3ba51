"""Implicit time stepping of the coupled system with one factorisation per run.

Two schemes are available. ``backward_euler`` solves one implicit step of
length ``dt``. ``midpoint`` takes an implicit step of length ``dt/2`` with
data at the half time and extrapolates all unknowns linearly to the full
step, ``x^{n+1} = 2 x^{n+1/2} - x^n``. Its essential values are the average
of the boundary data at both ends of the step, so the extrapolated state
meets the boundary data at the new time exactly; imposing the data at the
half time instead leaves an undamped O(dt^2) boundary oscillation that
costs the fluid pressure its second order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, asdict, fields
import logging
import time

import numpy as np

from .linalg import DEFAULT_ORDERING, ConstrainedSolver

log = logging.getLogger(__name__)

SCHEMES = ("backward_euler", "midpoint")

DIAGNOSTIC_COLUMNS = ("step", "t", "energy", "viscous_dissipation", "darcy_dissipation", "bjs_dissipation",
                      "energy_identity_residual", "div_residual", "bc_residual", "solver_residual")


class StepperError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    T_final: float
    N: int
    scheme: str = "backward_euler"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise StepperError(f"number of steps must be a positive integer, got {self.N}")
        if not self.T_final > 0:
            raise StepperError(f"final time must be positive, got {self.T_final}")
        if self.scheme not in SCHEMES:
            raise StepperError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def dt(self):
        return self.T_final / self.N

    def time(self, step):
        """Time of step index ``step``; exact at the final step."""
        return self.T_final if step == self.N else step * self.dt


@dataclass
class SolutionState:
    """Coefficient vectors at step index ``step`` (time ``t``)."""

    u: np.ndarray
    pi: np.ndarray
    p: np.ndarray
    step: int = 0
    t: float = 0.0

    @property
    def vector(self):
        return np.concatenate([self.u, self.pi, self.p])

    def copy(self):
        return SolutionState(self.u.copy(), self.pi.copy(), self.p.copy(), self.step, self.t)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.pi)) and np.all(np.isfinite(self.p)))


def state_from_vector(disc, x, step, t):
    u, pi, p = disc.split(np.asarray(x, dtype=float))
    return SolutionState(u.copy(), pi.copy(), p.copy(), int(step), float(t))


def init_state(disc) -> SolutionState:
    """Nodal interpolation of the problem's initial data (zero where absent)."""
    return state_from_vector(disc, disc.initial_vector(), 0, 0.0)


@dataclass
class StepRecord:
    step: int
    t: float
    energy: float
    viscous_dissipation: float
    darcy_dissipation: float
    bjs_dissipation: float
    energy_identity_residual: float
    div_residual: float
    bc_residual: float
    solver_residual: float


@dataclass
class IdentityTerms:
    """The seven terms of the per-step energy balance and the work of the data."""

    kinetic_change: float
    kinetic_increment: float
    storage_change: float
    storage_increment: float
    viscous: float
    bjs: float
    darcy: float
    work: float

    @property
    def lhs(self):
        return (self.kinetic_change + self.kinetic_increment + self.storage_change + self.storage_increment
                + self.viscous + self.bjs + self.darcy)

    @property
    def residual(self):
        scale = max(abs(v) for v in asdict(self).values())
        return abs(self.lhs - self.work) / scale if scale > 0 else 0.0


def energy(disc, x):
    """``(rho ||u||^2_Phi + c0 ||p||^2_Psi) / 2`` for a full coefficient vector."""
    u, _, p = disc.split(x)
    ops = disc.operators
    return 0.5 * float(u @ (ops.mass_u @ u)) + 0.5 * float(p @ (ops.mass_p @ p))


def identity_terms(disc, x0, x1, load, tau, reaction=None) -> IdentityTerms:
    """Evaluate every term of the energy balance of one implicit step of length ``tau``.

    ``reaction`` holds the residual of the step equations on constrained
    rows (zero elsewhere); its work accounts for nonzero essential data.
    The divergence data pair with the new fluid pressure.
    """
    ops = disc.operators
    u0, _, p0 = disc.split(x0)
    u1, pi1, p1 = disc.split(x1)
    if reaction is not None:
        load = load + reaction
    fu, g, fp = disc.split(load)
    du, dp = u1 - u0, p1 - p0
    return IdentityTerms(
        kinetic_change=0.5 * (u1 @ (ops.mass_u @ u1) - u0 @ (ops.mass_u @ u0)),
        kinetic_increment=0.5 * du @ (ops.mass_u @ du),
        storage_change=0.5 * (p1 @ (ops.mass_p @ p1) - p0 @ (ops.mass_p @ p0)),
        storage_increment=0.5 * dp @ (ops.mass_p @ dp),
        viscous=tau * u1 @ (ops.viscous @ u1),
        bjs=tau * u1 @ (ops.bjs @ u1),
        darcy=tau * p1 @ (ops.stiff_p @ p1),
        work=tau * (fu @ u1 + fp @ p1 + pi1 @ g),
    )


class TimeStepper:
    """Factor the step operator once and advance states by backsolves."""

    def __init__(self, disc, grid: TimeGrid, ordering=DEFAULT_ORDERING):
        self.disc = disc
        self.grid = grid
        self.tau = grid.dt if grid.scheme == "backward_euler" else 0.5 * grid.dt
        ops = disc.operators
        started = time.perf_counter()
        self.matrix = ops.matrix(self.tau)
        self.history = ops.history_operator(self.tau)
        dofs, _ = disc.constraints(0.0)
        self.constrained = dofs
        self.solver = ConstrainedSolver(self.matrix, dofs, ordering=ordering)
        self.setup_seconds = time.perf_counter() - started
        log.debug("factored %d unknowns (fill %d) in %.2fs", self.matrix.shape[0], self.solver.factor.fill,
                  self.setup_seconds)

    def implicit_step(self, x0, t_new, t_bc=None):
        """One implicit step of length ``tau`` ending at ``t_new``; returns (x1, load).

        Essential values are taken at ``t_new``, or averaged over the times
        in ``t_bc`` when given.
        """
        load = self.disc.load(t_new)
        times = (t_new,) if t_bc is None else tuple(t_bc)
        vals = 0.0
        for tb in times:
            dofs, v = self.disc.constraints(tb)
            if len(dofs) != len(self.constrained) or np.any(dofs != self.constrained):
                raise StepperError("constrained dofs changed between steps")
            vals = vals + v / len(times)
        x1 = self.solver.solve(load + self.history @ x0, vals)
        return x1, load

    def step(self, state: SolutionState, diagnostics=False):
        """Advance one full step; returns the new state and optionally a :class:`StepRecord`."""
        g = self.grid
        x0 = state.vector
        n1 = state.step + 1
        t1 = g.time(n1)
        if g.scheme == "backward_euler":
            x1, load = self.implicit_step(x0, t1)
            xs, xe = x1, x1
        else:
            t_half = (state.step + 0.5) * g.dt
            # averaged boundary data makes the extrapolated values hit g(t1)
            xh, load = self.implicit_step(x0, t_half, t_bc=(g.time(state.step), t1))
            x1 = 2.0 * xh - x0
            xs, xe = xh, x1
        new = state_from_vector(self.disc, x1, n1, t1)
        if not new.is_finite():
            raise StepperError(f"non-finite solution at step {n1}")
        if not diagnostics:
            return new, None
        reaction = np.zeros_like(x0)
        c = self.constrained
        reaction[c] = (self.matrix @ xs - load - self.history @ x0)[c]
        lo, hi = self.disc.offsets[1], self.disc.offsets[2]
        reaction[lo:hi] = 0.0  # pinned pressures vanish and do no work
        terms = identity_terms(self.disc, x0, xs, load, self.tau, reaction)
        # the constraint is enforced on the solved state; for the midpoint
        # scheme the extrapolated state inherits the initial divergence
        u1, _, _ = self.disc.split(xs)
        div = self.disc.operators.div @ u1 + self.disc.split(load)[1]
        lo, hi = self.disc.offsets[1], self.disc.offsets[2]
        pinned = self.constrained[(self.constrained >= lo) & (self.constrained < hi)] - lo
        div[pinned] = 0.0
        unorm = np.linalg.norm(u1)
        dofs, vals = self.disc.constraints(t1)
        rec = StepRecord(
            step=n1, t=t1, energy=energy(self.disc, xe),
            viscous_dissipation=terms.viscous, darcy_dissipation=terms.darcy, bjs_dissipation=terms.bjs,
            energy_identity_residual=terms.residual,
            div_residual=float(np.abs(div).max() / unorm) if unorm > 0 and len(div) else 0.0,
            bc_residual=float(np.abs(x1[dofs] - vals).max()) if len(dofs) else 0.0,
            solver_residual=self.solver.last_residual,
        )
        return new, rec

    def run(self, state: SolutionState, n_steps=None, diagnostics=False, callback=None):
        """Take ``n_steps`` steps (default: up to the final time).

        Returns ``(final_state, records)``; ``callback(state)`` is called after
        each step.
        """
        if n_steps is None:
            n_steps = self.grid.N - state.step
        records = []
        for _ in range(int(n_steps)):
            state, rec = self.step(state, diagnostics)
            if rec is not None:
                records.append(rec)
            if callback is not None:
                callback(state)
        return state, records


def run(disc, grid: TimeGrid, diagnostics=False, state=None, callback=None, ordering=DEFAULT_ORDERING):
    """Integrate from the initial state (or ``state``) to the final time."""
    stepper = TimeStepper(disc, grid, ordering=ordering)
    if state is None:
        state = init_state(disc)
    return stepper.run(state, diagnostics=diagnostics, callback=callback)


def write_diagnostics(path, records):
    names = [f.name for f in fields(StepRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow([getattr(r, n) if isinstance(getattr(r, n), int) else repr(float(getattr(r, n)))
                        for n in names])
