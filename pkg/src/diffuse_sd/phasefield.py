"""Phase fields built from a signed level set of the Stokes-Darcy interface.

The level set is positive in the fluid (Stokes) region, so the phase field is
close to one there and close to zero in the porous (Darcy) region:

    Phi_eps(x)       = (1 + S(levelset(x) / eps)) / 2
    Phi_{eps,delta}  = (1 - 2 delta) Phi_eps + delta
    Psi_{eps,delta}  = 1 - Phi_{eps,delta}

``S`` is one of three odd transition profiles (power, clamp, tanh).
"""
from __future__ import annotations

from dataclasses import dataclass
import re

import numpy as np
import sympy

from . import expr

PROFILES = ("power", "clamp", "tanh")


class PhaseFieldError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    kind: str = "tanh"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in PROFILES:
            raise PhaseFieldError(f"unknown profile {self.kind!r}; expected one of {PROFILES}")
        if self.kind == "power" and not 0.0 < self.alpha < 1.0:
            raise PhaseFieldError(f"power profile needs alpha in (0, 1), got {self.alpha}")


def eval_S(profile: Profile, t):
    """Transition profile S(t): odd, nondecreasing, equal to +-1 for |t| >= 1 (power/clamp)."""
    t = np.asarray(t, dtype=float)
    if profile.kind == "tanh":
        return np.tanh(t)
    if profile.kind == "clamp":
        return np.clip(t, -1.0, 1.0)
    a = profile.alpha
    s = np.clip(t, -1.0, 1.0)
    neg = np.power(np.maximum(s + 1.0, 0.0), a) - 1.0
    pos = 1.0 - np.power(np.maximum(1.0 - s, 0.0), a)
    return np.where(s <= 0.0, neg, pos)


def eval_dS(profile: Profile, t):
    """Derivative of S. At the kinks |t| = 1 the outer one-sided value (zero) is used."""
    t = np.asarray(t, dtype=float)
    if profile.kind == "tanh":
        return 1.0 / np.cosh(np.clip(t, -350.0, 350.0)) ** 2
    inside = np.abs(t) < 1.0
    if profile.kind == "clamp":
        return inside.astype(float)
    a = profile.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(t <= 0.0, t + 1.0, 1.0 - t)
        d = a * np.power(np.where(inside, base, 1.0), a - 1.0)
    return np.where(inside, d, 0.0)


# -- level sets -----------------------------------------------------------------

class LevelSet:
    """Signed level set, positive in the fluid region, with analytic gradient."""

    description = "levelset"

    def __call__(self, x, y):
        return self.value(x, y)

    def value(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        raise NotImplementedError


class FlatLevelSet(LevelSet):
    """``sign * (y - y0)``: with sign=+1 the fluid lies above ``y = y0``."""

    def __init__(self, y0=0.0, sign=1.0):
        self.y0 = float(y0)
        self.sign = 1.0 if sign >= 0 else -1.0
        self.description = f"flat({self.y0:g})" if self.sign > 0 else f"flat({self.y0:g}, -1)"

    def value(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self.sign * (y - self.y0)

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        g = np.zeros(x.shape + (2,))
        g[..., 1] = self.sign
        return g


class SineLevelSet(LevelSet):
    """``-y + y0 + a sin(k pi x)``: fluid below the curve ``y = y0 + a sin(k pi x)``."""

    def __init__(self, a=0.1, k=4.0, y0=0.0):
        self.a, self.k, self.y0 = float(a), float(k), float(y0)
        self.description = f"sine({self.a:g}, {self.k:g}, {self.y0:g})"

    def curve(self, x):
        return self.y0 + self.a * np.sin(self.k * np.pi * np.asarray(x, float))

    def value(self, x, y):
        return -np.asarray(y, float) + self.curve(x)

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        g = np.empty(x.shape + (2,))
        g[..., 0] = self.a * self.k * np.pi * np.cos(self.k * np.pi * x)
        g[..., 1] = -1.0
        return g


class ExpressionLevelSet(LevelSet):
    def __init__(self, text):
        e = expr.parse(text)
        X, Y = sympy.symbols("x y")
        self._f = expr.lambdify(e)
        self._fx = expr.lambdify(sympy.diff(e, X))
        self._fy = expr.lambdify(sympy.diff(e, Y))
        self.description = f"expression({text})"

    def value(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self._f(x, y)

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([self._fx(x, y), self._fy(x, y)], axis=-1)


_CALL = re.compile(r"^\s*(flat|sine|expression)\s*\((.*)\)\s*$", re.S)


def levelset_from_string(text) -> LevelSet:
    """Build a level set from ``flat(y0[, sign])``, ``sine(a, k, y0)`` or ``expression(...)``.

    A bare expression string is also accepted.
    """
    m = _CALL.match(str(text))
    if not m:
        return ExpressionLevelSet(text)
    name, args = m.group(1), m.group(2)
    if name == "expression":
        return ExpressionLevelSet(args.strip().strip("'\""))
    try:
        vals = [float(expr.parse(a, variables=())) for a in args.split(",") if a.strip()]
    except (TypeError, expr.ExpressionError) as exc:
        raise PhaseFieldError(f"bad level-set arguments in {text!r}: {exc}") from None
    if name == "flat":
        if not 1 <= len(vals) <= 2:
            raise PhaseFieldError("flat(y0[, sign]) takes one or two arguments")
        return FlatLevelSet(*vals)
    if len(vals) != 3:
        raise PhaseFieldError("sine(a, k, y0) takes three arguments")
    return SineLevelSet(*vals)


# -- phase fields ---------------------------------------------------------------

@dataclass(frozen=True)
class DiffuseFrame:
    """Phase-field gradient, its norm, the unit tangent and a validity mask."""

    gradient: np.ndarray
    norm: np.ndarray
    tangent: np.ndarray
    valid: np.ndarray


def rot90(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


class PhaseField:
    """Regularised diffuse-interface indicator of the fluid region."""

    def __init__(self, epsilon, delta=0.0, profile=Profile(), levelset: LevelSet = None,
                 grad_floor=None):
        if not epsilon > 0:
            raise PhaseFieldError(f"epsilon must be positive, got {epsilon}")
        if not 0.0 <= delta < 0.5:
            raise PhaseFieldError(f"delta must lie in [0, 1/2), got {delta}")
        if isinstance(profile, str):
            profile = Profile(profile)
        if levelset is None:
            raise PhaseFieldError("a level set is required")
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.profile = profile
        self.levelset = levelset
        self.grad_floor = 1e-10 / self.epsilon if grad_floor is None else float(grad_floor)

    def __repr__(self):
        return (f"PhaseField(eps={self.epsilon:g}, delta={self.delta:g}, profile={self.profile.kind}, "
                f"levelset={self.levelset.description})")

    def phi_raw(self, x, y):
        """Unregularised Phi_eps."""
        return 0.5 * (1.0 + eval_S(self.profile, self.levelset.value(x, y) / self.epsilon))

    def phi(self, x, y):
        return (1.0 - 2.0 * self.delta) * self.phi_raw(x, y) + self.delta

    def psi(self, x, y):
        return 1.0 - self.phi(x, y)

    def grad_phi(self, x, y):
        s = self.levelset.value(x, y) / self.epsilon
        scale = (1.0 - 2.0 * self.delta) * 0.5 * eval_dS(self.profile, s) / self.epsilon
        return scale[..., None] * self.levelset.gradient(x, y)

    def frame(self, x, y) -> DiffuseFrame:
        g = self.grad_phi(x, y)
        norm = np.linalg.norm(g, axis=-1)
        valid = norm >= self.grad_floor
        safe = np.where(valid, norm, 1.0)
        tangent = rot90(g / safe[..., None]) * valid[..., None]
        return DiffuseFrame(g, norm, tangent, valid)

    def with_params(self, epsilon=None, delta=None):
        return PhaseField(self.epsilon if epsilon is None else epsilon,
                          self.delta if delta is None else delta,
                          self.profile, self.levelset)


class UniformPhase:
    """Constant phase field (no interface): Phi = value, zero gradient.

    Useful for reduction checks (value 1 gives pure Stokes weights, value 0
    pure Darcy weights) and for the sharp-interface subdomain forms.
    """

    def __init__(self, value=1.0):
        self.value = float(value)
        self.epsilon = np.inf
        self.delta = 0.0

    def __repr__(self):
        return f"UniformPhase({self.value:g})"

    def phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.full(x.shape, self.value)

    phi_raw = phi

    def psi(self, x, y):
        return 1.0 - self.phi(x, y)

    def grad_phi(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.zeros(x.shape + (2,))

    def frame(self, x, y):
        g = self.grad_phi(x, y)
        zero = np.zeros(g.shape[:-1])
        return DiffuseFrame(g, zero, g.copy(), zero.astype(bool))


def diffuse_frame(pf, x, y) -> DiffuseFrame:
    return pf.frame(x, y)


def layer_area(pf: PhaseField, geom, threshold=0.0):
    """Quadrature estimate of ``|{threshold < Phi_eps < 1 - threshold}|`` (unregularised)."""
    p = pf.phi_raw(geom.x, geom.y)
    inside = (p > threshold) & (p < 1.0 - threshold)
    return float(np.sum(geom.jw * inside))


def tanh_layer_threshold():
    """Diagnostic layer cut-off for the unbounded tanh profile."""
    return 0.01
