"""Problem description and its diffuse-interface discretisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .fem import DEFAULT_QUADRATURE_DEGREE, FunctionSpace, geometry
from .forms import (BoundaryFlux, CoupledOperators, PhysicalParams, assemble_energy_functional,
                    assemble_operators, assemble_rhs, sample_phase)
from .mesh import TriMesh


@dataclass
class Dirichlet:
    """Essential data ``func(x, y, t)`` on edges carrying ``tags``."""

    tags: Sequence[str]
    func: Optional[Callable] = None  # None means homogeneous


@dataclass
class Problem:
    """Everything needed to discretise and time-step one coupled problem.

    Callables take ``(x, y, t)``; vector-valued ones return arrays with a
    trailing axis of length two. ``phase`` is any object with ``phi``,
    ``psi``, ``grad_phi`` and ``frame`` methods.
    """

    mesh: TriMesh
    params: PhysicalParams
    phase: object
    name: str = "custom"
    velocity_element: str = "P2"
    pressure_element: str = "P1"
    darcy_element: str = "P2"
    forcing: Optional[Callable] = None
    source: Optional[Callable] = None
    velocity_dirichlet: Optional[Dirichlet] = None
    darcy_dirichlet: Optional[Dirichlet] = None
    traction: Optional[BoundaryFlux] = None
    darcy_flux: Optional[BoundaryFlux] = None
    initial_velocity: Optional[Callable] = None
    initial_fluid_pressure: Optional[Callable] = None
    initial_darcy_pressure: Optional[Callable] = None
    # "interpolate": nodal interpolation of the initial velocity;
    # "stokes": its weighted Stokes projection (discretely divergence free)
    initial_projection: str = "interpolate"
    # gradient (..., 2, 2) of the initial velocity, needed by the projection
    initial_velocity_gradient: Optional[Callable] = None
    exact: object = None
    weighted_divergence: bool = True
    interface_form: str = "gradient"
    quadrature_degree: int = DEFAULT_QUADRATURE_DEGREE
    metadata: dict = field(default_factory=dict)


class Discretization:
    """Spaces, time-independent operators, loads and constraints of a problem."""

    kind = "diffuse"

    def __init__(self, problem: Problem):
        self.problem = problem
        mesh = problem.mesh
        self.space_u = FunctionSpace(mesh, problem.velocity_element, 2)
        self.space_q = FunctionSpace(mesh, problem.pressure_element, 1)
        self.space_p = FunctionSpace(mesh, problem.darcy_element, 1)
        self.geom = geometry(mesh, problem.quadrature_degree)
        self.sample = self._sample()
        self.operators: CoupledOperators = self._operators()
        nu, nq, npp = self.operators.sizes
        self.offsets = np.array([0, nu, nu + nq, nu + nq + npp])
        self._fixed = self._fixed_dofs()

    @property
    def phase(self):
        return self.problem.phase

    def _sample(self):
        return sample_phase(self.problem.phase, self.geom, self.problem.interface_form)

    def _operators(self):
        p = self.problem
        return assemble_operators(self.space_u, self.space_q, self.space_p, self.sample, p.params,
                                  p.weighted_divergence, p.quadrature_degree)

    def edge_weight(self, eq):
        return np.asarray(self.problem.phase.phi(eq.x, eq.y), dtype=float)

    @property
    def size(self):
        return int(self.offsets[-1])

    def split(self, x):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]

    def join(self, u, pi, p):
        return np.concatenate([u, pi, p])

    # -- data ------------------------------------------------------------------

    def load(self, t):
        # the momentum forcing already carries rho
        p = self.problem
        return assemble_rhs(self.space_u, self.space_q, self.space_p, p.phase, t, p.forcing, p.source,
                            p.traction, p.darcy_flux, p.quadrature_degree, self.sample,
                            edge_weight=self.edge_weight)

    def _fixed_dofs(self):
        """Constrained dofs that never change (inactive dofs), value zero."""
        return np.zeros(0, dtype=np.int64)

    def constraints(self, t):
        """``(dofs, values)`` of all essential conditions at time ``t``."""
        p = self.problem
        dofs, vals = [self._fixed], [np.zeros(len(self._fixed))]
        if p.velocity_dirichlet is not None:
            d = self.space_u.dirichlet_dofs(p.velocity_dirichlet.tags)
            dofs.append(d)
            vals.append(self._dirichlet_values(self.space_u, d, p.velocity_dirichlet.func, t))
        if p.darcy_dirichlet is not None:
            d = self.space_p.dirichlet_dofs(p.darcy_dirichlet.tags)
            dofs.append(d + self.offsets[2])
            vals.append(self._dirichlet_values(self.space_p, d, p.darcy_dirichlet.func, t))
        dofs = np.concatenate(dofs).astype(np.int64)
        vals = np.concatenate(vals)
        order = np.argsort(dofs, kind="stable")
        dofs, vals = dofs[order], vals[order]
        keep = np.ones(len(dofs), dtype=bool)
        keep[1:] = dofs[1:] != dofs[:-1]
        return dofs[keep], vals[keep]

    @staticmethod
    def _dirichlet_values(space, dofs, func, t):
        if func is None or len(dofs) == 0:
            return np.zeros(len(dofs))
        scalar = dofs // space.components
        nodes = space.nodes[scalar]
        v = np.asarray(func(nodes[:, 0], nodes[:, 1], t), dtype=float)
        if space.components == 1:
            return np.broadcast_to(v, (len(dofs),)).copy()
        v = np.broadcast_to(v, (len(dofs), 2))
        return v[np.arange(len(dofs)), dofs % space.components]

    def initial_vector(self):
        p = self.problem
        u = self._interp(self.space_u, p.initial_velocity)
        pi = self._interp(self.space_q, p.initial_fluid_pressure)
        dp = self._interp(self.space_p, p.initial_darcy_pressure)
        x = self.join(u, pi, dp)
        x[self._fixed] = 0.0
        if p.initial_projection == "stokes":
            x[: self.offsets[1]] = self.stokes_projection(x[: self.offsets[1]])
        elif p.initial_projection != "interpolate":
            raise ValueError(f"unknown initial projection {p.initial_projection!r}")
        return x

    def stokes_projection(self, u, t=0.0):
        """Weighted Stokes projection of the initial velocity.

        Finds ``w`` with ``a(w, v) + b(v, r) = a(u0, v)`` for all ``v`` and the
        divergence row of the time stepper at ``t``, where ``a`` is the
        viscous plus slip form. ``a(u0, .)`` uses the exact initial velocity
        and its gradient when both are given, otherwise the coefficient
        vector ``u``. Boundary values are those of the velocity Dirichlet
        condition at ``t``.
        """
        from .linalg import ConstrainedSolver

        p = self.problem
        ops = self.operators
        nu, nuq = self.offsets[1], self.offsets[2]
        energy = (ops.viscous + ops.bjs).tocsr()
        if p.initial_velocity is not None and p.initial_velocity_gradient is not None:
            target = assemble_energy_functional(self.space_u, self.sample, p.params.mu, p.params.alpha_bjs,
                                                p.initial_velocity, p.initial_velocity_gradient,
                                                p.quadrature_degree)
            if self.kind == "sharp":
                # the sharp slip form lives on interface edges; use the interpolant there
                target = target + ops.bjs @ u
        else:
            target = energy @ u
        matrix = sp.bmat([[energy, ops.div.T], [-ops.div, None]], format="csr")
        rhs = np.concatenate([target, self.load(t)[nu:nuq]])
        dofs, vals = self.constraints(t)
        keep = dofs < nuq
        return ConstrainedSolver(matrix, dofs[keep]).solve(rhs, vals[keep])[:nu]

    @staticmethod
    def _interp(space, func):
        if func is None:
            return np.zeros(space.dof_count)
        return space.interpolate(lambda x, y: func(x, y))
