"""Ready-made problems: the manufactured channel and the sine-shaped interface."""
from __future__ import annotations

import numpy as np

from .forms import BoundaryFlux, PhysicalParams
from .manufactured import stokes_darcy_benchmark
from .mesh import RectangleSpec, TriMesh, build_aligned, build_uniform
from .phasefield import FlatLevelSet, PhaseField, Profile, SineLevelSet
from .problem import Dirichlet, Problem

MANUFACTURED_DELTA = 1e-3
MANUFACTURED_COARSEST = 5


def manufactured_problem(n, epsilon=None, delta=None, profile="tanh", params=None, mesh: TriMesh = None,
                         velocity_element="P2", darcy_element="P2", pressure_element="P1",
                         weighted_divergence=True, homogeneous=False, interface_form="gradient",
                         quadrature_degree=6, alpha=0.5, delta_schedule="halving",
                         initial_projection="interpolate"):
    """Manufactured problem on ``(0,1) x (0,2)`` with the fluid above ``y = 1``.

    ``n`` is the number of cells across the unit width (``h = 1/n``). By
    default ``epsilon = 1/n`` and ``delta`` halves with ``h`` starting from
    ``1e-3`` at ``n = 5``; ``delta_schedule="fixed"`` keeps ``1e-3`` and
    ``"eps_cubed"`` uses ``epsilon**3``.

    Stokes velocity is prescribed on the top, Darcy pressure on the bottom,
    and natural (traction and flux) data on the sides. With ``homogeneous``
    the essential data are zero, which is the setting of the discrete
    energy balance.
    """
    params = params or PhysicalParams()
    if mesh is None:
        mesh = build_uniform(RectangleSpec((0.0, 1.0), (0.0, 2.0), n, 2 * n))
    if epsilon is None:
        epsilon = 1.0 / n
    if delta is None:
        if delta_schedule == "halving":
            delta = MANUFACTURED_DELTA * MANUFACTURED_COARSEST / n
        elif delta_schedule == "fixed":
            delta = MANUFACTURED_DELTA
        elif delta_schedule == "eps_cubed":
            delta = epsilon ** 3
        else:
            raise ValueError(f"unknown delta schedule {delta_schedule!r}")
    case = stokes_darcy_benchmark(params)
    phase = PhaseField(epsilon, delta, Profile(profile, alpha) if profile == "power" else Profile(profile),
                       FlatLevelSet(1.0))
    u_bc = None if homogeneous else case.velocity
    p_bc = None if homogeneous else case.darcy_pressure
    return Problem(
        mesh=mesh, params=params, phase=phase, name="manufactured",
        velocity_element=velocity_element, pressure_element=pressure_element, darcy_element=darcy_element,
        forcing=case.forcing, source=case.source,
        velocity_dirichlet=Dirichlet(("top",), u_bc),
        darcy_dirichlet=Dirichlet(("bottom",), p_bc),
        traction=BoundaryFlux(("left", "right"), case.traction),
        darcy_flux=BoundaryFlux(("left", "right"), case.darcy_flux),
        initial_velocity=lambda x, y: case.velocity(x, y, 0.0),
        initial_velocity_gradient=lambda x, y: case.velocity_gradient(x, y, 0.0),
        initial_fluid_pressure=lambda x, y: case.fluid_pressure(x, y, 0.0),
        initial_darcy_pressure=lambda x, y: case.darcy_pressure(x, y, 0.0),
        exact=case, weighted_divergence=weighted_divergence, interface_form=interface_form,
        quadrature_degree=quadrature_degree, initial_projection=initial_projection,
        metadata={"n": n, "h": 1.0 / n, "epsilon": epsilon, "delta": delta, "profile": profile},
    )


SINE_PARAMS = dict(rho=1.0, mu=0.035, c0=1e-3, kappa=1e-5, alpha_bjs=1e3)
SINE_INFLOW = 10.0


def sine_levelset():
    """Level set ``-y + 0.1 sin(4 pi x)``: fluid below the curve."""
    return SineLevelSet(0.1, 4.0, 0.0)


def sine_mesh(n):
    """Interface-aligned structured mesh of ``(0,1) x (-1,1)`` with ``n`` cells per unit."""
    ls = sine_levelset()
    return build_aligned((0.0, 1.0), (-1.0, 1.0), n, n, n, ls.curve)


def sine_problem(mesh: TriMesh, epsilon, delta=1e-3, profile="tanh", params=None, inflow=SINE_INFLOW,
                 velocity_element="P1+bubble", pressure_element="P1", darcy_element="P1",
                 quadrature_degree=6):
    """Channel flow below a sine-shaped porous interface.

    A parabolic inflow enters on the left below ``y = 0``; the bottom wall is
    no-slip, the right side is traction free and the Darcy pressure vanishes
    on the top.
    """
    params = params or PhysicalParams(**{k: (v if k != "kappa" else v * np.eye(2)) for k, v in SINE_PARAMS.items()})

    def inflow_profile(x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        ux = np.where(y < 0.0, -inflow * y * (1.0 + y) / 0.25, 0.0)
        return np.stack([ux, np.zeros_like(ux)], axis=-1)

    def wall_or_inflow(x, y, t):
        v = inflow_profile(x, y, t)
        return np.where((np.asarray(x) <= 1e-12)[..., None], v, 0.0)

    phase = PhaseField(epsilon, delta, Profile(profile), sine_levelset())
    return Problem(
        mesh=mesh, params=params, phase=phase, name="sine_interface",
        velocity_element=velocity_element, pressure_element=pressure_element, darcy_element=darcy_element,
        velocity_dirichlet=Dirichlet(("left", "bottom"), wall_or_inflow),
        darcy_dirichlet=Dirichlet(("top",), None),
        quadrature_degree=quadrature_degree,
        metadata={"epsilon": epsilon, "delta": delta, "profile": profile, "inflow": inflow},
    )
