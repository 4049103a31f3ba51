"""Reference elements, quadrature, degrees of freedom and assembly helpers.

Supported scalar elements on triangles: ``P1``, ``P2`` and ``P1+bubble``
(MINI velocity). Vector spaces interleave components per scalar dof, so the
global index of component ``c`` of scalar dof ``i`` is ``2*i + c``.

Basis functions are written as polynomials in the barycentric coordinates
``(l0, l1, l2)``; physical gradients follow from the chain rule with the
constant barycentric gradients of each triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import TriMesh

ELEMENT_KINDS = ("P1", "P2", "P1+bubble")
_ALIASES = {"p1": "P1", "p2": "P2", "p1+bubble": "P1+bubble", "mini": "P1+bubble", "p1b": "P1+bubble"}
DEFAULT_QUADRATURE_DEGREE = 6


def canonical_kind(kind):
    try:
        return _ALIASES[str(kind).lower()]
    except KeyError:
        raise ValueError(f"unknown element kind {kind!r}; expected one of {ELEMENT_KINDS}") from None


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum to one
    degree: int

    @property
    def n(self):
        return len(self.weights)


_RULES = {}


def make_quadrature(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi (Stroud conical product) rule exact to ``degree``.

    The rule integrates every bivariate polynomial of total degree
    ``<= degree`` exactly; weights are positive and normalised to sum to one.
    The conical product favours one vertex, so it is averaged over the three
    cyclic rotations of the barycentric coordinates: assembled forms then do
    not depend on which vertex a triangle lists first.
    """
    degree = int(degree)
    if not 1 <= degree <= 10:
        raise ValueError(f"quadrature degree must be in [1, 10], got {degree}")
    if degree in _RULES:
        return _RULES[degree]
    n = (degree + 2) // 2
    # weight (1-s)^1 absorbs the Duffy Jacobian in the collapsed direction
    sa, wa = roots_jacobi(n, 1.0, 0.0)
    sb, wb = roots_jacobi(n, 0.0, 0.0)
    u = 0.5 * (1.0 + sa)
    v = 0.5 * (1.0 + sb)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wa, wb) * 0.125  # jacobian 1/4 (s->u) * 1/2 (t->v)
    x = U.ravel()
    y = ((1.0 - U) * V).ravel()
    w = W.ravel() / 0.5  # normalise by reference area
    w = w / w.sum()
    pts = np.column_stack([1.0 - x - y, x, y])
    pts = np.vstack([np.roll(pts, k, axis=1) for k in range(3)])
    w = np.tile(w, 3) / 3.0
    rule = QuadratureRule(pts, w, degree)
    _RULES[degree] = rule
    return rule


def gauss_legendre_01(n):
    """Gauss-Legendre points and weights on [0, 1] (weights sum to one)."""
    s, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (s + 1.0), 0.5 * w


# -- reference bases -------------------------------------------------------

def _p1(lam):
    vals = lam.copy()
    d = np.broadcast_to(np.eye(3), (len(lam), 3, 3)).copy()
    return vals, d


def _p2(lam):
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    nq = len(lam)
    vals = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                            4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
    d = np.zeros((nq, 6, 3))
    d[:, 0, 0] = 4 * l0 - 1
    d[:, 1, 1] = 4 * l1 - 1
    d[:, 2, 2] = 4 * l2 - 1
    d[:, 3, 0], d[:, 3, 1] = 4 * l1, 4 * l0
    d[:, 4, 1], d[:, 4, 2] = 4 * l2, 4 * l1
    d[:, 5, 2], d[:, 5, 0] = 4 * l0, 4 * l2
    return vals, d


def _mini(lam):
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    v1, d1 = _p1(lam)
    vals = np.column_stack([v1, 27 * l0 * l1 * l2])
    d = np.zeros((len(lam), 4, 3))
    d[:, :3] = d1
    d[:, 3, 0] = 27 * l1 * l2
    d[:, 3, 1] = 27 * l0 * l2
    d[:, 3, 2] = 27 * l0 * l1
    return vals, d


_BASES = {"P1": (_p1, 3), "P2": (_p2, 6), "P1+bubble": (_mini, 4)}

# barycentric derivative -> reference (x, y) derivative, with l1 = x, l2 = y
_BARY_TO_REF = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def tabulate(kind, lam):
    """Values (nq, nloc) and barycentric derivatives (nq, nloc, 3) at points ``lam``."""
    fn, _ = _BASES[canonical_kind(kind)]
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    return fn(lam)


def local_size(kind):
    return _BASES[canonical_kind(kind)][1]


def eval_basis(kind, point):
    """Basis values and reference-coordinate gradients at one barycentric point."""
    vals, d = tabulate(kind, np.asarray(point, dtype=float).reshape(1, 3))
    return vals[0], d[0] @ _BARY_TO_REF


# -- geometry ---------------------------------------------------------------

class ElementGeometry:
    """Per-triangle affine data and mapped quadrature points for one rule."""

    def __init__(self, mesh: TriMesh, rule: QuadratureRule):
        self.mesh = mesh
        self.rule = rule
        p = mesh.vertices[mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        # rows of J^{-1} are grad l1 and grad l2
        g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        self.gradlam = np.stack([-g1 - g2, g1, g2], axis=1)  # (nt, 3, 2)
        self.area = 0.5 * np.abs(det)
        self.points = np.einsum("qk,tkd->tqd", rule.points, p)  # (nt, nq, 2)
        self.jw = self.area[:, None] * rule.weights[None, :]  # (nt, nq)

    @property
    def x(self):
        return self.points[..., 0]

    @property
    def y(self):
        return self.points[..., 1]


_GEOM_CACHE = {}


def geometry(mesh, degree=DEFAULT_QUADRATURE_DEGREE):
    key = (id(mesh), int(degree))
    hit = _GEOM_CACHE.get(key)
    if hit is not None and hit.mesh is mesh:
        return hit
    if len(_GEOM_CACHE) > 32:
        _GEOM_CACHE.clear()
    g = ElementGeometry(mesh, make_quadrature(degree))
    _GEOM_CACHE[key] = g
    return g


# -- function spaces ------------------------------------------------------------

class FunctionSpace:
    """Lagrange-type space on a mesh.

    Scalar dofs are numbered vertices first, then edges (P2), then bubbles.
    """

    def __init__(self, mesh: TriMesh, kind="P1", components=1):
        self.mesh = mesh
        self.kind = canonical_kind(kind)
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.components = components
        nv, nt = mesh.nv, mesh.nt
        if self.kind == "P1":
            self.cell_dofs = mesh.triangles.copy()
            self.nodes = mesh.vertices.copy()
        elif self.kind == "P2":
            self.cell_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
            mids = mesh.vertices[mesh.edges].mean(axis=1)
            self.nodes = np.vstack([mesh.vertices, mids])
        else:
            self.cell_dofs = np.hstack([mesh.triangles, nv + np.arange(nt)[:, None]])
            self.nodes = np.vstack([mesh.vertices, mesh.centroids()])
        self.n_scalar = len(self.nodes)
        self.nloc = self.cell_dofs.shape[1]

    @property
    def dof_count(self):
        return self.components * self.n_scalar

    def entity(self, dof):
        """(entity kind, entity index, component) of a global dof."""
        scalar, comp = divmod(int(dof), self.components)
        nv = self.mesh.nv
        if scalar < nv:
            return "vertex", scalar, comp
        return ("edge" if self.kind == "P2" else "cell"), scalar - nv, comp

    def __repr__(self):
        return f"FunctionSpace({self.kind}, components={self.components}, dofs={self.dof_count})"

    def boundary_scalar_dofs(self, tags):
        """Scalar dofs lying on edges tagged with any of ``tags``."""
        edges = self.mesh.tagged_edges(tags)
        if len(edges) == 0:
            return np.zeros(0, dtype=np.int64)
        dofs = [edges.ravel()]
        if self.kind == "P2":
            dofs.append(self.mesh.nv + self.mesh.edge_index(edges))
        return np.unique(np.concatenate(dofs))

    def dirichlet_dofs(self, tags, components=None):
        """Global dof indices for the given boundary tags and components."""
        s = self.boundary_scalar_dofs(tags)
        if self.components == 1:
            return s
        comps = range(self.components) if components is None else components
        return np.sort(np.concatenate([self.components * s + c for c in comps]))

    def cell_global_dofs(self):
        """(nt, nloc*components) global dofs in local order (scalar-major, component-minor)."""
        if self.components == 1:
            return self.cell_dofs
        c = self.components
        return (c * self.cell_dofs[:, :, None] + np.arange(c)[None, None, :]).reshape(self.mesh.nt, -1)

    def interpolate(self, func):
        """Nodal interpolant of ``func(x, y)``; returns a flat coefficient vector.

        For vector spaces ``func`` returns an array whose last axis has length 2.
        """
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        vals = np.asarray(func(x, y), dtype=float)
        if self.components == 1:
            vals = np.broadcast_to(vals, (self.n_scalar,)).copy()
        else:
            vals = np.broadcast_to(vals, (self.n_scalar, 2)).copy()
        if self.kind == "P1+bubble":
            nv = self.mesh.nv
            # bubble equals one at the centroid, where the P1 part is the vertex mean
            p1_mean = vals[self.mesh.triangles].mean(axis=1)
            vals[nv:] = vals[nv:] - p1_mean
        return vals.ravel()

    def tabulate(self, geom: ElementGeometry):
        """Basis values (nq, nloc) and physical gradients (nt, nq, nloc, 2)."""
        vals, d = tabulate(self.kind, geom.rule.points)
        grads = np.einsum("qlk,tkd->tqld", d, geom.gradlam)
        return vals, grads

    def evaluate(self, coeffs, geom: ElementGeometry, gradient=False):
        """Evaluate an FE function at the quadrature points of ``geom``.

        Returns (nt, nq) for scalars or (nt, nq, 2) for vectors; with
        ``gradient`` also the gradient (nt, nq, 2) or (nt, nq, 2, 2) where the
        last axis is the derivative direction.
        """
        vals, grads = self.tabulate(geom)
        c = np.asarray(coeffs, dtype=float)
        if self.components == 1:
            loc = c[self.cell_dofs]  # (nt, nloc)
            v = loc @ vals.T
            if gradient:
                return v, np.einsum("tqld,tl->tqd", grads, loc)
            return v
        loc = c.reshape(-1, 2)[self.cell_dofs]  # (nt, nloc, 2)
        v = np.einsum("ql,tlc->tqc", vals, loc)
        if gradient:
            return v, np.einsum("tqld,tlc->tqcd", grads, loc)
        return v

    def evaluate_at(self, coeffs, tri_ids, lam, gradient=False):
        """Evaluate at barycentric points ``lam`` (n, 3) inside triangles ``tri_ids`` (n,)."""
        vals, d = tabulate(self.kind, lam)
        geom = geometry(self.mesh, 1)
        gl = geom.gradlam[tri_ids]  # (n,3,2)
        grads = np.einsum("nlk,nkd->nld", d, gl)
        dofs = self.cell_dofs[tri_ids]
        c = np.asarray(coeffs, dtype=float)
        if self.components == 1:
            loc = c[dofs]
            v = np.sum(vals * loc, axis=1)
            g = np.einsum("nld,nl->nd", grads, loc)
        else:
            loc = c.reshape(-1, 2)[dofs]
            v = np.einsum("nl,nlc->nc", vals, loc)
            g = np.einsum("nld,nlc->ncd", grads, loc)
        return (v, g) if gradient else v


def scatter(row_dofs, col_dofs, local, shape):
    """Sum element matrices ``local`` (nt, nr, nc) into a CSR matrix.

    Duplicates are merged by the COO->CSR conversion in input order, so the
    result is reproducible for a fixed mesh.
    """
    nt, nr = row_dofs.shape
    nc = col_dofs.shape[1]
    rows = np.broadcast_to(row_dofs[:, :, None], (nt, nr, nc)).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], (nt, nr, nc)).ravel()
    m = sp.coo_matrix((np.asarray(local).ravel(), (rows, cols)), shape=shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def scatter_vector(dofs, local, n):
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), np.asarray(local).ravel())
    return out


def weight_at_quadrature(weight, geom: ElementGeometry, name="weight"):
    """Resolve a weight given as a constant, a callable ``f(x, y)`` or an (nt, nq) array."""
    if callable(weight):
        w = np.asarray(weight(geom.x, geom.y), dtype=float)
    else:
        w = np.asarray(weight, dtype=float)
    return np.broadcast_to(w, geom.jw.shape)


def assemble_scalar_mass(space: FunctionSpace, weight_field=1.0, degree=DEFAULT_QUADRATURE_DEGREE,
                         allow_negative=False):
    """Weighted mass matrix ``int w u v`` for a scalar space (or each vector component)."""
    geom = geometry(space.mesh, degree)
    w = weight_at_quadrature(weight_field, geom)
    if not allow_negative and np.any(w < 0):
        raise ValueError("negative weight at a quadrature point")
    vals, _ = tabulate(space.kind, geom.rule.points)
    local = np.einsum("tq,qi,qj->tij", geom.jw * w, vals, vals)
    n = space.n_scalar
    m = scatter(space.cell_dofs, space.cell_dofs, local, (n, n))
    if space.components == 1:
        return m
    return vector_expand(m)


def vector_expand(m):
    """Block-diagonal interleaved expansion of a scalar matrix to two components."""
    return sp.kron(m, sp.identity(2), format="csr")


def monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
