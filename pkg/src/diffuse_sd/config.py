"""Run configuration: a flat ``key = value`` text file.

Values are Python literals (numbers, strings, lists, booleans, where
``true``/``false`` are accepted in any case); anything that
is not a literal is kept as a bare string, so ``scheme = midpoint`` and
``scheme = "midpoint"`` are equivalent. ``#`` starts a comment. Unknown keys
are rejected.
"""
from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, fields, asdict
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr
from .fem import ELEMENT_KINDS, canonical_kind
from .phasefield import PROFILES
from .analysis import DELTA_SCHEDULES, REFERENCES
from .stepper import SCHEMES

log = logging.getLogger(__name__)

PROBLEMS = ("manufactured_6_1", "sine_interface_6_2", "custom")
SWEEPS = ("none", "h", "epsilon", "delta")


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclass
class RunConfig:
    problem: str = "manufactured_6_1"
    # mesh: cells per unit length, or a mesh file
    mesh_n: int = 5
    mesh_file: Optional[str] = None
    x_range: tuple = (0.0, 1.0)
    y_range: tuple = (0.0, 2.0)
    refine_levels: int = 0
    refine_band: float = 0.0
    velocity_element: str = "P2"
    pressure_element: str = "P1"
    darcy_element: str = "P2"
    rho: float = 1.0
    mu: float = 1.0
    c0: float = 1.0
    kappa: object = 1.0
    alpha_bjs: float = 1.0
    profile: str = "tanh"
    alpha: float = 0.5
    epsilon: Optional[float] = None
    delta: float = 1e-3
    delta_schedule: str = "halving"
    levelset: Optional[str] = None
    T_final: float = 1.0
    dt: Optional[float] = None
    scheme: str = "backward_euler"
    sweep: str = "none"
    levels: int = 1
    sweep_values: Optional[list] = None
    reference: str = "exact"
    divergence: str = "weighted"
    initial_projection: str = "interpolate"
    interface_form: str = "gradient"
    quadrature_degree: int = 6
    ordering: str = "MMD_AT_PLUS_A"
    inflow: float = 10.0
    diagnostics: bool = False
    snapshots: int = 0
    timings: bool = True
    # custom problem data: expressions in x, y, t
    forcing_x: str = "0"
    forcing_y: str = "0"
    source: str = "0"
    velocity_dirichlet_tags: list = field(default_factory=list)
    velocity_dirichlet_x: str = "0"
    velocity_dirichlet_y: str = "0"
    darcy_dirichlet_tags: list = field(default_factory=list)
    darcy_dirichlet: str = "0"
    out: str = "out"

    def as_dict(self):
        d = asdict(self)
        d["kappa"] = np.asarray(self.kappa, dtype=float).tolist()
        return d

    @property
    def steps(self):
        return int(round(self.T_final / self.dt))

    @property
    def kappa_tensor(self):
        k = np.asarray(self.kappa, dtype=float)
        return k * np.eye(2) if k.ndim == 0 else k


PROBLEM_DEFAULTS = {
    "manufactured_6_1": dict(mesh_n=5, x_range=(0.0, 1.0), y_range=(0.0, 2.0), rho=1.0, mu=1.0, c0=1.0,
                             kappa=1.0, alpha_bjs=1.0, T_final=1.0, delta=1e-3, profile="tanh",
                             velocity_element="P2", pressure_element="P1", darcy_element="P2",
                             levelset="flat(1)"),
    "sine_interface_6_2": dict(mesh_n=20, x_range=(0.0, 1.0), y_range=(-1.0, 1.0), rho=1.0, mu=0.035, c0=1e-3,
                               kappa=1e-5, alpha_bjs=1e3, T_final=3.0, dt=1e-2, delta=1e-3, inflow=10.0,
                               profile="tanh", velocity_element="P1+bubble", pressure_element="P1",
                               darcy_element="P1", levelset="sine(0.1, 4, 0)", reference="sharp",
                               delta_schedule="fixed"),
    "custom": dict(),
}

_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _literal(text):
    if text.strip().lower() in ("true", "false"):
        return text.strip().lower() == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def read_pairs(text):
    """Parse ``key = value`` lines into a dict of literal values."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(None, f"cannot parse configuration: {exc}") from None
    return {k.strip(): _literal(v) for k, v in cp["run"].items()}


def parse_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    raw = read_pairs(path.read_text())
    raw.update(overrides or {})
    return build_config(raw, base_dir=path.parent)


def build_config(raw: dict, base_dir=Path(".")) -> RunConfig:
    unknown = sorted(set(raw) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    problem = raw.get("problem", "manufactured_6_1")
    if problem not in PROBLEMS:
        raise ConfigError("problem", f"must be one of {PROBLEMS}, got {problem!r}")
    values = dict(PROBLEM_DEFAULTS[problem])
    values.update(raw)
    cfg = RunConfig(**values)
    defaulted = sorted(set(_FIELD_NAMES) - set(raw))
    _resolve(cfg, base_dir)
    _validate(cfg)
    if defaulted:
        log.info("defaults: %s", ", ".join(f"{k}={getattr(cfg, k)!r}" for k in defaulted))
    return cfg


def _resolve(cfg: RunConfig, base_dir):
    if cfg.epsilon is None:
        cfg.epsilon = 1.0 / _num("mesh_n", cfg.mesh_n)
    if cfg.dt is None:
        cfg.dt = 1.0 / _num("mesh_n", cfg.mesh_n)
    if cfg.mesh_file:
        p = Path(cfg.mesh_file)
        cfg.mesh_file = str(p if p.is_absolute() else Path(base_dir) / p)
    for key in ("velocity_element", "pressure_element", "darcy_element"):
        try:
            setattr(cfg, key, canonical_kind(getattr(cfg, key)))
        except ValueError:
            raise ConfigError(key, f"must be one of {ELEMENT_KINDS}") from None
    for key in ("x_range", "y_range"):
        setattr(cfg, key, tuple(getattr(cfg, key)))


def _num(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a number, got {v!r}")
    return v


def _choice(key, v, options):
    if v not in options:
        raise ConfigError(key, f"must be one of {tuple(options)}, got {v!r}")


def _validate(cfg: RunConfig):
    for key in ("rho", "mu", "c0", "T_final", "dt", "epsilon", "inflow"):
        if _num(key, getattr(cfg, key)) <= 0:
            raise ConfigError(key, "must be positive")
    if _num("alpha_bjs", cfg.alpha_bjs) < 0:
        raise ConfigError("alpha_bjs", "must be nonnegative")
    if not 0.0 <= _num("delta", cfg.delta) < 0.5:
        raise ConfigError("delta", f"must lie in [0, 1/2), got {cfg.delta}")
    if not 0.0 < _num("alpha", cfg.alpha) < 1.0:
        raise ConfigError("alpha", "power-profile exponent must lie in (0, 1)")
    for key in ("diagnostics", "timings"):
        if not isinstance(getattr(cfg, key), bool):
            raise ConfigError(key, f"expected true or false, got {getattr(cfg, key)!r}")
    for key in ("mesh_n", "levels", "quadrature_degree", "refine_levels", "snapshots"):
        v = getattr(cfg, key)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(key, f"expected an integer, got {v!r}")
    if cfg.mesh_n < 1 or cfg.levels < 1 or cfg.refine_levels < 0 or cfg.snapshots < 0:
        raise ConfigError("mesh_n" if cfg.mesh_n < 1 else "levels", "out of range")
    if not 1 <= cfg.quadrature_degree <= 10:
        raise ConfigError("quadrature_degree", "must lie in [1, 10]")
    k = np.asarray(cfg.kappa, dtype=float) if not isinstance(cfg.kappa, str) else None
    if k is None or not (k.ndim == 0 or k.shape == (2, 2)):
        raise ConfigError("kappa", "expected a number or a 2x2 nested list")
    kt = cfg.kappa_tensor
    if not np.allclose(kt, kt.T) or np.linalg.eigvalsh(kt).min() <= 0:
        raise ConfigError("kappa", "must be symmetric positive definite")
    _choice("profile", cfg.profile, PROFILES)
    _choice("scheme", cfg.scheme, SCHEMES)
    _choice("sweep", cfg.sweep, SWEEPS)
    _choice("reference", cfg.reference, REFERENCES)
    _choice("divergence", cfg.divergence, ("weighted", "unweighted"))
    _choice("interface_form", cfg.interface_form, ("gradient", "distance"))
    _choice("delta_schedule", cfg.delta_schedule, DELTA_SCHEDULES)
    _choice("initial_projection", cfg.initial_projection, ("interpolate", "stokes"))
    _choice("ordering", cfg.ordering, ("nested_dissection", "COLAMD", "MMD_AT_PLUS_A", "NATURAL"))
    if cfg.interface_form == "distance" and cfg.profile != "clamp":
        raise ConfigError("interface_form", "the distance form requires profile = clamp")
    n = cfg.T_final / cfg.dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
        raise ConfigError("dt", f"T_final / dt = {n} is not a positive integer")
    if cfg.sweep in ("epsilon", "delta"):
        if not isinstance(cfg.sweep_values, (list, tuple)) or len(cfg.sweep_values) < 1:
            raise ConfigError("sweep_values", "a list of values is required for this sweep")
    if cfg.mesh_file and not Path(cfg.mesh_file).is_file():
        raise ConfigError("mesh_file", f"file not found: {cfg.mesh_file}")
    if cfg.problem == "custom":
        if cfg.levelset is None:
            raise ConfigError("levelset", "required for custom problems")
        for key in ("forcing_x", "forcing_y", "source", "velocity_dirichlet_x", "velocity_dirichlet_y",
                    "darcy_dirichlet"):
            try:
                expr.parse(str(getattr(cfg, key)), variables=("x", "y", "t"))
            except expr.ExpressionError as exc:
                raise ConfigError(key, str(exc)) from None
    if cfg.sweep == "h" and cfg.mesh_file:
        raise ConfigError("sweep", "an h sweep needs a generated mesh, not mesh_file")
    if cfg.problem != "manufactured_6_1" and cfg.reference == "exact":
        raise ConfigError("reference", "an exact solution exists only for manufactured_6_1")
    if cfg.levelset is not None:
        from .phasefield import PhaseFieldError, levelset_from_string
        try:
            levelset_from_string(cfg.levelset)
        except (PhaseFieldError, expr.ExpressionError) as exc:
            raise ConfigError("levelset", str(exc)) from None
