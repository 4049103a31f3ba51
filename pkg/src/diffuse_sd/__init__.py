"""Diffuse-interface Stokes-Darcy finite element solver.

A phase field blends a Stokes region and a Darcy region on one fixed mesh;
a sharp-interface solver on interface-aligned meshes serves as reference.
"""
from .analysis import ConvergenceReport, manufactured_h_sweep, relative_errors, run_sweep
from .forms import PhysicalParams
from .mesh import RectangleSpec, TriMesh, build_aligned, build_uniform, export_mesh, import_mesh
from .phasefield import PhaseField, Profile, levelset_from_string
from .problem import Dirichlet, Discretization, Problem
from .problems import manufactured_problem, sine_mesh, sine_problem
from .sharp import SharpDiscretization
from .stepper import TimeGrid, TimeStepper, init_state, run

__all__ = [
    "ConvergenceReport", "Dirichlet", "Discretization", "PhaseField", "PhysicalParams", "Problem", "Profile",
    "RectangleSpec", "SharpDiscretization", "TimeGrid", "TimeStepper", "TriMesh", "build_aligned",
    "build_uniform", "export_mesh", "import_mesh", "init_state", "levelset_from_string", "manufactured_h_sweep",
    "manufactured_problem", "relative_errors", "run", "run_sweep", "sine_mesh", "sine_problem",
]
