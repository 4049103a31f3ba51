"""Sparse assembly of the weighted Stokes-Darcy forms.

Unknowns are ordered ``x = [u, pi, p]``: interleaved velocity, fluid
pressure and Darcy pressure. For a step of length ``dt`` the operator is

    [ rho/dt M_phi + 2 mu A_phi + alpha T    B^T    C_up               ]
    [ -B                                     0      0                  ]
    [ C_pu                                   0      c0/dt M_psi + K_psi ]

with ``C_pu = -C_up^T``. Every weighted form takes a :class:`PhaseSample`,
the phase field tabulated at the quadrature points, so diffuse and sharp
(indicator-weighted) discretisations share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import (DEFAULT_QUADRATURE_DEGREE, FunctionSpace, ElementGeometry, gauss_legendre_01,
                  geometry, scatter, scatter_vector, tabulate)
from .mesh import TriMesh
from .phasefield import rot90


class FormsError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    """Density, viscosity, storativity, conductivity tensor and slip coefficient."""

    rho: float = 1.0
    mu: float = 1.0
    c0: float = 1.0
    kappa: np.ndarray = field(default_factory=lambda: np.eye(2))
    alpha_bjs: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            k = float(k) * np.eye(2)
        if k.shape != (2, 2):
            raise FormsError(f"kappa must be a scalar or 2x2 tensor, got shape {k.shape}")
        object.__setattr__(self, "kappa", k)
        for name in ("rho", "mu", "c0"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise FormsError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.alpha_bjs) or self.alpha_bjs < 0:
            raise FormsError(f"alpha_bjs must be nonnegative, got {self.alpha_bjs}")
        check_spd(k)

    def as_dict(self):
        return {"rho": self.rho, "mu": self.mu, "c0": self.c0,
                "kappa": self.kappa.tolist(), "alpha_bjs": self.alpha_bjs}


def check_spd(kappa):
    k = np.asarray(kappa, dtype=float)
    if not np.allclose(k, k.T, rtol=0, atol=1e-14 * max(1.0, np.abs(k).max())):
        raise FormsError("kappa must be symmetric")
    if np.linalg.eigvalsh(k).min() <= 0:
        raise FormsError("kappa must be positive definite")


# -- phase data at quadrature points --------------------------------------------

@dataclass
class PhaseSample:
    """Phase field quantities on an (nt, nq) quadrature grid."""

    phi: np.ndarray
    psi: np.ndarray
    grad: np.ndarray       # (nt, nq, 2)
    tangent: np.ndarray    # (nt, nq, 2), zero where the frame is invalid
    grad_norm: np.ndarray  # (nt, nq), zero where invalid

    @classmethod
    def constant(cls, geom: ElementGeometry, value):
        phi = np.full(geom.jw.shape, float(value))
        z = np.zeros(geom.jw.shape + (2,))
        return cls(phi, 1.0 - phi, z, z.copy(), np.zeros(geom.jw.shape))


def sample_phase(pf, geom: ElementGeometry, interface_form="gradient") -> PhaseSample:
    """Tabulate ``pf`` at the quadrature points of ``geom``.

    ``interface_form="distance"`` replaces the coupling gradient by
    ``grad(levelset) / (2 eps)`` on the layer, which is only meaningful for
    the clamp profile (there it differs from grad Phi by the factor 1 - 2 delta).
    """
    x, y = geom.x, geom.y
    phi = np.asarray(pf.phi(x, y), dtype=float)
    fr = pf.frame(x, y)
    grad = fr.gradient
    if interface_form == "distance":
        if getattr(getattr(pf, "profile", None), "kind", None) != "clamp":
            raise FormsError("the distance interface form requires the clamp profile")
        grad = grad / (1.0 - 2.0 * pf.delta)
    elif interface_form != "gradient":
        raise FormsError(f"unknown interface form {interface_form!r}")
    norm = np.where(fr.valid, np.linalg.norm(grad, axis=-1), 0.0)
    return PhaseSample(phi, 1.0 - phi, grad, fr.tangent, norm)


def indicator_sample(geom: ElementGeometry, fluid_triangles) -> PhaseSample:
    """Piecewise-constant phase: one on ``fluid_triangles`` (bool mask), zero elsewhere."""
    mask = np.asarray(fluid_triangles, dtype=bool)
    phi = np.broadcast_to(mask[:, None].astype(float), geom.jw.shape).copy()
    z = np.zeros(geom.jw.shape + (2,))
    return PhaseSample(phi, 1.0 - phi, z, z.copy(), np.zeros(geom.jw.shape))


# -- volume forms -----------------------------------------------------------------

def _vec_local(local_scalar_pairs):
    """(nt, nl, 2, nl, 2) -> (nt, 2nl, 2nl) in interleaved local order."""
    nt, nl = local_scalar_pairs.shape[:2]
    return local_scalar_pairs.reshape(nt, 2 * nl, 2 * nl)


def assemble_stokes_viscous(space_u: FunctionSpace, sample: PhaseSample, mu,
                            degree=DEFAULT_QUADRATURE_DEGREE, weight=None):
    """``2 mu int D(u):D(v) w`` with weight ``w = Phi`` (or the given ``weight`` array)."""
    geom = geometry(space_u.mesh, degree)
    _, grads = space_u.tabulate(geom)
    w = sample.phi if weight is None else weight
    jw = geom.jw * w
    gg = np.einsum("tq,tqid,tqjd->tij", jw, grads, grads, optimize=True)
    cross = np.einsum("tq,tqib,tqja->tiajb", jw, grads, grads, optimize=True)
    nl = space_u.nloc
    local = cross.copy()
    for a in range(2):
        local[:, :, a, :, a] += gg
    local *= mu
    dofs = space_u.cell_global_dofs()
    n = space_u.dof_count
    return scatter(dofs, dofs, _vec_local(local.reshape(-1, nl, 2, nl, 2)), (n, n))


def assemble_energy_functional(space_u: FunctionSpace, sample: PhaseSample, mu, alpha_bjs, velocity, gradient,
                               degree=DEFAULT_QUADRATURE_DEGREE):
    """Load vector ``v -> a(w, v)`` for a velocity field ``w`` given by callables.

    ``a`` is the viscous form plus the slip form, as in
    :func:`assemble_stokes_viscous` and :func:`assemble_bjs`;
    ``velocity(x, y)`` returns (..., 2) and ``gradient(x, y)`` returns
    (..., 2, 2) with ``[..., i, j] = d w_i / d x_j``.
    """
    geom = geometry(space_u.mesh, degree)
    vals, grads = space_u.tabulate(geom)
    grad_w = np.asarray(gradient(geom.x, geom.y), dtype=float)
    sym = mu * (grad_w + np.swapaxes(grad_w, -1, -2))
    local = np.einsum("tq,tqab,tqib->tia", geom.jw * sample.phi, sym, grads, optimize=True)
    if alpha_bjs != 0:
        w = np.asarray(velocity(geom.x, geom.y), dtype=float)
        slip = np.einsum("tqa,tqa->tq", w, sample.tangent)
        local += alpha_bjs * np.einsum("tq,qi,tqa->tia", geom.jw * sample.grad_norm * slip, vals, sample.tangent,
                                       optimize=True)
    return scatter_vector(space_u.cell_global_dofs(), local.reshape(space_u.mesh.nt, -1), space_u.dof_count)


def assemble_velocity_mass(space_u: FunctionSpace, sample: PhaseSample, rho=1.0,
                           degree=DEFAULT_QUADRATURE_DEGREE):
    """``rho int u.v Phi`` for the interleaved vector space."""
    geom = geometry(space_u.mesh, degree)
    vals, _ = tabulate(space_u.kind, geom.rule.points)
    local = rho * np.einsum("tq,qi,qj->tij", geom.jw * sample.phi, vals, vals, optimize=True)
    n = space_u.n_scalar
    m = scatter(space_u.cell_dofs, space_u.cell_dofs, local, (n, n))
    return sp.kron(m, sp.identity(2), format="csr")


def assemble_darcy(space_p: FunctionSpace, sample: PhaseSample, kappa, c0=1.0,
                   degree=DEFAULT_QUADRATURE_DEGREE):
    """Return ``(K, M)`` with ``K = int kappa grad p . grad q Psi`` and ``M = c0 int p q Psi``."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.ndim == 0:
        kappa = float(kappa) * np.eye(2)
    check_spd(kappa)
    geom = geometry(space_p.mesh, degree)
    vals, grads = space_p.tabulate(geom)
    jw = geom.jw * sample.psi
    kg = np.einsum("de,tqje->tqjd", kappa, grads)
    stiff = np.einsum("tq,tqid,tqjd->tij", jw, grads, kg, optimize=True)
    mass = c0 * np.einsum("tq,qi,qj->tij", jw, vals, vals, optimize=True)
    n = space_p.n_scalar
    d = space_p.cell_dofs
    return scatter(d, d, stiff, (n, n)), scatter(d, d, mass, (n, n))


def assemble_interface_coupling(space_u: FunctionSpace, space_p: FunctionSpace, sample: PhaseSample,
                                degree=DEFAULT_QUADRATURE_DEGREE):
    """Return ``(C_pu, C_up)``.

    ``C_up[v, p] = -int p v . grad Phi`` enters the momentum rows and
    ``C_pu = -C_up^T`` the Darcy rows; both come from one element loop, so
    the skew relation is exact.
    """
    geom = geometry(space_u.mesh, degree)
    vu, _ = tabulate(space_u.kind, geom.rule.points)
    vp, _ = tabulate(space_p.kind, geom.rule.points)
    local = -np.einsum("tq,qi,tqa,qj->tiaj", geom.jw, vu, sample.grad, vp, optimize=True)
    nt = local.shape[0]
    local = local.reshape(nt, 2 * space_u.nloc, space_p.nloc)
    c_up = scatter(space_u.cell_global_dofs(), space_p.cell_dofs, local,
                   (space_u.dof_count, space_p.dof_count))
    return (-c_up.T).tocsr(), c_up


def assemble_bjs(space_u: FunctionSpace, sample: PhaseSample, alpha_bjs,
                 degree=DEFAULT_QUADRATURE_DEGREE):
    """``alpha int (u . tau)(v . tau) |grad Phi|`` with the diffuse tangent ``tau``."""
    geom = geometry(space_u.mesh, degree)
    n = space_u.dof_count
    if alpha_bjs == 0:
        return sp.csr_matrix((n, n))
    vals, _ = tabulate(space_u.kind, geom.rule.points)
    jw = geom.jw * sample.grad_norm
    tt = sample.tangent
    local = alpha_bjs * np.einsum("tq,qi,tqa,tqb,qj->tiajb", jw, vals, tt, tt, vals, optimize=True)
    dofs = space_u.cell_global_dofs()
    return scatter(dofs, dofs, _vec_local(local), (n, n))


def assemble_divergence(space_u: FunctionSpace, space_q: FunctionSpace, sample: Optional[PhaseSample] = None,
                        weighted=True, degree=DEFAULT_QUADRATURE_DEGREE):
    """``B[q, v] = -int div(v) q [Phi]``; the weight is dropped when ``weighted`` is False."""
    geom = geometry(space_u.mesh, degree)
    _, gu = space_u.tabulate(geom)
    vq, _ = tabulate(space_q.kind, geom.rule.points)
    jw = geom.jw * sample.phi if weighted else geom.jw
    local = -np.einsum("tq,qi,tqja->tija", jw, vq, gu, optimize=True)
    nt = local.shape[0]
    local = local.reshape(nt, space_q.nloc, 2 * space_u.nloc)
    return scatter(space_q.cell_dofs, space_u.cell_global_dofs(), local,
                   (space_q.dof_count, space_u.dof_count))


# -- edge quadrature ----------------------------------------------------------------

@dataclass
class EdgeQuadrature:
    """Gauss points on a set of edges, located inside one owning triangle each."""

    triangles: np.ndarray  # (ne,)
    lam: np.ndarray        # (ne, nqe, 3)
    points: np.ndarray     # (ne, nqe, 2)
    jw: np.ndarray         # (ne, nqe)
    normal: np.ndarray     # (ne, 2) outward from the owning triangle

    @property
    def x(self):
        return self.points[..., 0]

    @property
    def y(self):
        return self.points[..., 1]

    @property
    def tangent(self):
        return rot90(self.normal)


def edge_quadrature(mesh: TriMesh, edges, owners=None, degree=DEFAULT_QUADRATURE_DEGREE) -> EdgeQuadrature:
    """Quadrature on ``edges`` (vertex pairs).

    ``owners`` optionally selects which incident triangle hosts each edge
    (and so fixes the normal orientation); by default the first owner is used.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    s, w = gauss_legendre_01(degree // 2 + 1)
    if len(edges) == 0:
        z = np.zeros((0, len(s)))
        return EdgeQuadrature(np.zeros(0, np.int64), np.zeros((0, len(s), 3)), np.zeros((0, len(s), 2)),
                              z, np.zeros((0, 2)))
    idx = mesh.edge_index(edges)
    if np.any(idx < 0):
        raise FormsError("edge not present in triangulation")
    own, slots = mesh.edge_triangles
    if owners is None:
        tri = own[idx, 0]
        slot = slots[idx, 0]
    else:
        tri = np.asarray(owners, dtype=np.int64)
        slot = np.where(own[idx, 0] == tri, slots[idx, 0], slots[idx, 1])
        if np.any((own[idx, 0] != tri) & (own[idx, 1] != tri)):
            raise FormsError("owner triangle does not contain the edge")
    k0 = slot
    k1 = (slot + 1) % 3
    ne, nq = len(edges), len(s)
    lam = np.zeros((ne, nq, 3))
    rows = np.arange(ne)[:, None]
    lam[rows, np.arange(nq)[None, :], k0[:, None]] = 1.0 - s[None, :]
    lam[rows, np.arange(nq)[None, :], k1[:, None]] = s[None, :]
    tv = mesh.vertices[mesh.triangles[tri]]  # (ne,3,2)
    a = tv[np.arange(ne), k0]
    b = tv[np.arange(ne), k1]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    pts = np.einsum("eqk,ekd->eqd", lam, tv)
    return EdgeQuadrature(tri, lam, pts, length[:, None] * w[None, :], normal)


def _edge_basis(space: FunctionSpace, eq: EdgeQuadrature):
    ne, nq = eq.jw.shape
    vals, _ = tabulate(space.kind, eq.lam.reshape(-1, 3))
    return vals.reshape(ne, nq, space.nloc)


def assemble_sharp_coupling(space_u, space_p, eq: EdgeQuadrature):
    """Interface coupling on edges: ``C_up[v, p] = +int_G p v.n`` and ``C_pu = -C_up^T``.

    ``eq.normal`` must point from the fluid into the porous side.
    """
    bu = _edge_basis(space_u, eq)
    bp = _edge_basis(space_p, eq)
    local = np.einsum("eq,eqi,ea,eqj->eiaj", eq.jw, bu, eq.normal, bp, optimize=True)
    ne = local.shape[0]
    local = local.reshape(ne, 2 * space_u.nloc, space_p.nloc)
    c_up = scatter(space_u.cell_global_dofs()[eq.triangles], space_p.cell_dofs[eq.triangles], local,
                   (space_u.dof_count, space_p.dof_count))
    return (-c_up.T).tocsr(), c_up


def assemble_sharp_bjs(space_u, eq: EdgeQuadrature, alpha_bjs):
    """``alpha int_G (u.tau)(v.tau)`` with the exact edge tangent."""
    n = space_u.dof_count
    if alpha_bjs == 0 or len(eq.jw) == 0:
        return sp.csr_matrix((n, n))
    bu = _edge_basis(space_u, eq)
    t = eq.tangent
    local = alpha_bjs * np.einsum("eq,eqi,ea,eb,eqj->eiajb", eq.jw, bu, t, t, bu, optimize=True)
    dofs = space_u.cell_global_dofs()[eq.triangles]
    return scatter(dofs, dofs, _vec_local(local), (n, n))


# -- right-hand side -----------------------------------------------------------------

@dataclass
class BoundaryFlux:
    """Natural boundary data on tagged edges.

    ``func(x, y, nx, ny, t)`` returns the traction vector (shape (..., 2))
    for velocity or the scalar flux ``kappa grad p . n`` for Darcy.
    """

    tags: Sequence[str]
    func: Callable


def assemble_rhs(space_u, space_q, space_p, pf, t, forcing=None, source=None,
                 traction: Optional[BoundaryFlux] = None, darcy_flux: Optional[BoundaryFlux] = None,
                 degree=DEFAULT_QUADRATURE_DEGREE, sample: Optional[PhaseSample] = None,
                 edge_weight=None):
    """Load vector ``[f_u, 0, f_p]`` at time ``t``.

    ``f_u = int F . v Phi + int_N (sigma n) . v Phi`` and
    ``f_p = int g q Psi + int_N (kappa grad p . n) q Psi``. ``forcing(x, y, t)``
    returns (..., 2) and ``source(x, y, t)`` a scalar. ``edge_weight(eq)``
    gives Phi at the points of an :class:`EdgeQuadrature`; it defaults to
    ``pf.phi`` evaluated there.
    """
    mesh = space_u.mesh
    geom = geometry(mesh, degree)
    if sample is None:
        sample = sample_phase(pf, geom)
    nu, nq_, npp = space_u.dof_count, space_q.dof_count, space_p.dof_count
    fu = np.zeros(nu)
    fp = np.zeros(npp)
    if forcing is not None:
        vals, _ = tabulate(space_u.kind, geom.rule.points)
        F = np.asarray(forcing(geom.x, geom.y, t), dtype=float)
        F = np.broadcast_to(F, geom.jw.shape + (2,))
        local = np.einsum("tq,qi,tqa->tia", geom.jw * sample.phi, vals, F, optimize=True)
        fu += scatter_vector(space_u.cell_global_dofs(), local.reshape(mesh.nt, -1), nu)
    if source is not None:
        vals, _ = tabulate(space_p.kind, geom.rule.points)
        g = np.broadcast_to(np.asarray(source(geom.x, geom.y, t), dtype=float), geom.jw.shape)
        local = np.einsum("tq,qi->ti", geom.jw * sample.psi * g, vals, optimize=True)
        fp += scatter_vector(space_p.cell_dofs, local, npp)
    if edge_weight is None:
        def edge_weight(eq):
            return np.asarray(pf.phi(eq.x, eq.y), dtype=float)
    if traction is not None:
        eq = edge_quadrature(mesh, mesh.tagged_edges(traction.tags), degree=degree)
        if len(eq.jw):
            bu = _edge_basis(space_u, eq)
            nx = np.broadcast_to(eq.normal[:, None, 0], eq.jw.shape)
            ny = np.broadcast_to(eq.normal[:, None, 1], eq.jw.shape)
            tr = np.broadcast_to(np.asarray(traction.func(eq.x, eq.y, nx, ny, t), float), eq.jw.shape + (2,))
            w = eq.jw * edge_weight(eq)
            local = np.einsum("eq,eqi,eqa->eia", w, bu, tr, optimize=True)
            fu += scatter_vector(space_u.cell_global_dofs()[eq.triangles], local.reshape(len(eq.jw), -1), nu)
    if darcy_flux is not None:
        eq = edge_quadrature(mesh, mesh.tagged_edges(darcy_flux.tags), degree=degree)
        if len(eq.jw):
            bp = _edge_basis(space_p, eq)
            nx = np.broadcast_to(eq.normal[:, None, 0], eq.jw.shape)
            ny = np.broadcast_to(eq.normal[:, None, 1], eq.jw.shape)
            fl = np.broadcast_to(np.asarray(darcy_flux.func(eq.x, eq.y, nx, ny, t), float), eq.jw.shape)
            w = eq.jw * (1.0 - edge_weight(eq)) * fl
            local = np.einsum("eq,eqi->ei", w, bp)
            fp += scatter_vector(space_p.cell_dofs[eq.triangles], local, npp)
    return np.concatenate([fu, np.zeros(nq_), fp])


# -- block operators --------------------------------------------------------------------

@dataclass
class CoupledOperators:
    """Time-independent blocks of the coupled system.

    ``mass_u`` already contains ``rho`` and ``mass_p`` contains ``c0``.
    """

    mass_u: sp.csr_matrix
    viscous: sp.csr_matrix
    bjs: sp.csr_matrix
    div: sp.csr_matrix
    c_up: sp.csr_matrix
    c_pu: sp.csr_matrix
    mass_p: sp.csr_matrix
    stiff_p: sp.csr_matrix

    @property
    def sizes(self):
        return self.mass_u.shape[0], self.div.shape[0], self.mass_p.shape[0]

    @property
    def offsets(self):
        nu, nq, npp = self.sizes
        return np.array([0, nu, nu + nq, nu + nq + npp])

    def velocity_block(self, dt):
        return (self.mass_u / dt + self.viscous + self.bjs).tocsr()

    def darcy_block(self, dt):
        return (self.mass_p / dt + self.stiff_p).tocsr()

    def matrix(self, dt) -> sp.csr_matrix:
        return sp.bmat([[self.velocity_block(dt), self.div.T, self.c_up],
                        [-self.div, None, None],
                        [self.c_pu, None, self.darcy_block(dt)]], format="csr")

    def history_operator(self, dt):
        """``blockdiag(M_u, 0, M_p) / dt`` applied to the previous state."""
        nq = self.div.shape[0]
        return sp.block_diag([self.mass_u / dt, sp.csr_matrix((nq, nq)), self.mass_p / dt], format="csr")


@dataclass
class BlockSystem:
    """Assembled operator, right-hand side, block offsets and Dirichlet constraints."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def block(self, i, j):
        o = self.offsets
        return self.matrix[o[i]:o[i + 1], o[j]:o[j + 1]]

    def reduced(self):
        """Symmetric elimination: ``(K_ff, b_f - K_fc g, free)``."""
        n = self.matrix.shape[0]
        mask = np.ones(n, dtype=bool)
        mask[self.constrained] = False
        free = np.nonzero(mask)[0]
        g = np.zeros(n)
        g[self.constrained] = self.values
        b = self.rhs - self.matrix @ g
        return self.matrix[free][:, free].tocsc(), b[free], free

    def dump(self, path):
        """Write the operator in Matrix Market coordinate format."""
        scipy.io.mmwrite(str(path), self.matrix)


def assemble_operators(space_u, space_q, space_p, sample: PhaseSample, params: PhysicalParams,
                       weighted_divergence=True, degree=DEFAULT_QUADRATURE_DEGREE,
                       interface_edges: Optional[EdgeQuadrature] = None) -> CoupledOperators:
    """Assemble every time-independent block.

    With ``interface_edges`` the interface coupling and slip terms are taken
    as edge integrals (sharp interface) instead of layer integrals.
    """
    mass_u = assemble_velocity_mass(space_u, sample, params.rho, degree)
    visc = assemble_stokes_viscous(space_u, sample, params.mu, degree)
    div = assemble_divergence(space_u, space_q, sample, weighted_divergence, degree)
    stiff, mass_p = assemble_darcy(space_p, sample, params.kappa, params.c0, degree)
    if interface_edges is None:
        bjs = assemble_bjs(space_u, sample, params.alpha_bjs, degree)
        c_pu, c_up = assemble_interface_coupling(space_u, space_p, sample, degree)
    else:
        bjs = assemble_sharp_bjs(space_u, interface_edges, params.alpha_bjs)
        c_pu, c_up = assemble_sharp_coupling(space_u, space_p, interface_edges)
    return CoupledOperators(mass_u, visc, bjs, div, c_up, c_pu, mass_p, stiff)
