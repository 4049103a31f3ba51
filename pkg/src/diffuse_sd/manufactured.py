"""Closed-form solutions and the data they induce, derived symbolically."""
from __future__ import annotations

import numpy as np
import sympy

X, Y, T = sympy.symbols("x y t", real=True)


def _vec_fn(exprs):
    f = sympy.lambdify((X, Y, T), list(exprs), modules="numpy")

    def call(x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        parts = [np.broadcast_to(np.asarray(v, float), x.shape) for v in f(x, y, t)]
        return np.stack(parts, axis=-1)

    return call


def _scalar_fn(expr):
    f = sympy.lambdify((X, Y, T), expr, modules="numpy")

    def call(x, y, t):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.broadcast_to(np.asarray(f(x, y, t), float), x.shape).copy()

    return call


class ManufacturedCase:
    """Exact velocity, fluid pressure and Darcy pressure with derived data.

    The momentum forcing is ``f = rho du/dt - div(sigma)`` with
    ``sigma = 2 mu D(u) - pi I``; the Darcy source is
    ``g = c0 dp/dt - div(kappa grad p)``.
    """

    def __init__(self, u, pi, p, params):
        self.params = params
        self.u_expr = [sympy.sympify(c) for c in u]
        self.pi_expr = sympy.sympify(pi)
        self.p_expr = sympy.sympify(p)
        rho, mu, c0 = (sympy.nsimplify(v) if float(v).is_integer() else sympy.Float(v)
                       for v in (params.rho, params.mu, params.c0))
        kappa = sympy.Matrix(2, 2, [sympy.Float(v) if not float(v).is_integer() else sympy.Integer(int(v))
                                    for v in np.asarray(params.kappa).ravel()])
        u1, u2 = self.u_expr
        grad_u = sympy.Matrix([[sympy.diff(u1, X), sympy.diff(u1, Y)], [sympy.diff(u2, X), sympy.diff(u2, Y)]])
        strain = (grad_u + grad_u.T) / 2
        sigma = 2 * mu * strain - self.pi_expr * sympy.eye(2)
        div_sigma = [sympy.diff(sigma[i, 0], X) + sympy.diff(sigma[i, 1], Y) for i in range(2)]
        self.forcing_expr = [sympy.simplify(rho * sympy.diff(u_c, T) - d) for u_c, d in zip(self.u_expr, div_sigma)]
        grad_p = sympy.Matrix([sympy.diff(self.p_expr, X), sympy.diff(self.p_expr, Y)])
        flux = kappa * grad_p
        self.source_expr = sympy.simplify(c0 * sympy.diff(self.p_expr, T)
                                          - sympy.diff(flux[0], X) - sympy.diff(flux[1], Y))
        self.divergence_expr = sympy.simplify(sympy.diff(u1, X) + sympy.diff(u2, Y))
        self.sigma_expr = sigma
        self.darcy_velocity_expr = [-flux[0], -flux[1]]

        self.velocity = _vec_fn(self.u_expr)
        self.fluid_pressure = _scalar_fn(self.pi_expr)
        self.darcy_pressure = _scalar_fn(self.p_expr)
        self.forcing = _vec_fn(self.forcing_expr)
        self.source = _scalar_fn(self.source_expr)
        self.darcy_velocity = _vec_fn(self.darcy_velocity_expr)
        self.divergence = _scalar_fn(self.divergence_expr)
        self._grad_u = _vec_fn([grad_u[0, 0], grad_u[0, 1], grad_u[1, 0], grad_u[1, 1]])
        self.darcy_gradient = _vec_fn([grad_p[0], grad_p[1]])
        self._sigma = _vec_fn([sigma[0, 0], sigma[0, 1], sigma[1, 0], sigma[1, 1]])
        self._flux = _vec_fn([flux[0], flux[1]])

    def velocity_gradient(self, x, y, t):
        """(..., 2, 2) with ``[..., i, j] = d u_i / d x_j``."""
        g = self._grad_u(x, y, t)
        return g.reshape(g.shape[:-1] + (2, 2))

    def traction(self, x, y, nx, ny, t):
        s = self._sigma(x, y, t)
        return np.stack([s[..., 0] * nx + s[..., 1] * ny, s[..., 2] * nx + s[..., 3] * ny], axis=-1)

    def darcy_flux(self, x, y, nx, ny, t):
        """``kappa grad p . n``."""
        f = self._flux(x, y, t)
        return f[..., 0] * nx + f[..., 1] * ny


def stokes_darcy_benchmark(params):
    """Time-periodic solution on the unit-width channel with the interface at ``y = 1``.

    The velocity is divergence free; together with the fluid region above
    the interface it satisfies mass conservation, the normal-stress balance
    and the slip law on ``y = 1`` for unit coefficients.
    """
    e = sympy.E
    pi_ = sympy.pi
    time = sympy.cos(2 * pi_ * T)
    u = [-(1 / pi_) * sympy.exp(Y) * sympy.sin(pi_ * X) * time,
         (sympy.exp(Y) - e) * sympy.cos(pi_ * X) * time]
    fluid_p = 2 * sympy.exp(Y) * sympy.cos(pi_ * X) * time
    darcy_p = (sympy.exp(Y) - Y * e) * sympy.cos(pi_ * X) * time
    return ManufacturedCase(u, fluid_p, darcy_p, params)
