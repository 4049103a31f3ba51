"""Sharp-interface reference discretisation on interface-aligned meshes.

The fluid and porous subdomains are unions of triangles of one mesh. Volume
forms use the indicator of the fluid triangles as phase weight, so they are
the standard subdomain forms; coupling and slip terms are edge integrals on
the interface with the exact edge normal (pointing from fluid to porous
side) and tangent. Unknowns with no support in their subdomain are pinned to
zero, which leaves the time-stepping stack unchanged.
"""
from __future__ import annotations

import numpy as np

from .fem import FunctionSpace
from .forms import assemble_operators, edge_quadrature, indicator_sample
from .mesh import MeshError, submesh
from .problem import Discretization, Problem


class SharpDiscretization(Discretization):
    kind = "sharp"

    def __init__(self, problem: Problem, fluid_mask=None, align_tol=1e-9):
        mesh = problem.mesh
        if fluid_mask is None:
            c = mesh.centroids()
            fluid_mask = np.asarray(problem.phase.levelset.value(c[:, 0], c[:, 1])) > 0
        self.fluid_mask = np.asarray(fluid_mask, dtype=bool)
        if self.fluid_mask.all() or not self.fluid_mask.any():
            raise MeshError("both subdomains must contain triangles")
        self.interface_pairs, fluid_owner = interface_edges(mesh, self.fluid_mask)
        levelset = getattr(problem.phase, "levelset", None)
        if levelset is not None and len(self.interface_pairs):
            pts = mesh.vertices[np.unique(self.interface_pairs)]
            gap = np.abs(levelset.value(pts[:, 0], pts[:, 1]))
            if gap.max() > align_tol * max(1.0, mesh.h_max):
                raise MeshError(f"mesh is not aligned with the interface (vertex offset {gap.max():.2e})")
        self.interface_quadrature = edge_quadrature(mesh, self.interface_pairs, owners=fluid_owner,
                                                    degree=problem.quadrature_degree)
        super().__init__(problem)

    def _sample(self):
        return indicator_sample(self.geom, self.fluid_mask)

    def _operators(self):
        p = self.problem
        return assemble_operators(self.space_u, self.space_q, self.space_p, self.sample, p.params,
                                  p.weighted_divergence, p.quadrature_degree,
                                  interface_edges=self.interface_quadrature)

    def edge_weight(self, eq):
        return np.broadcast_to(self.fluid_mask[eq.triangles][:, None].astype(float), eq.jw.shape)

    def _fixed_dofs(self):
        def inactive(space: FunctionSpace, tri_mask, offset):
            used = np.zeros(space.n_scalar, dtype=bool)
            used[space.cell_dofs[tri_mask].ravel()] = True
            scalar = np.nonzero(~used)[0]
            if space.components == 2:
                scalar = np.sort(np.concatenate([2 * scalar, 2 * scalar + 1]))
            return scalar + offset

        return np.concatenate([
            inactive(self.space_u, self.fluid_mask, 0),
            inactive(self.space_q, self.fluid_mask, self.offsets[1]),
            inactive(self.space_p, ~self.fluid_mask, self.offsets[2]),
        ]).astype(np.int64)

    def subdomain_meshes(self):
        """``(fluid, porous)`` submeshes as returned by :func:`submesh`."""
        return submesh(self.problem.mesh, self.fluid_mask), submesh(self.problem.mesh, ~self.fluid_mask)


def interface_edges(mesh, fluid_mask):
    """Edges shared by a fluid and a porous triangle, with the fluid-side owner."""
    owner, _ = mesh.edge_triangles
    both = owner[:, 1] >= 0
    a = np.where(both, fluid_mask[owner[:, 0]], False)
    b = np.where(both, fluid_mask[np.maximum(owner[:, 1], 0)], False)
    cross = both & (a != b)
    idx = np.nonzero(cross)[0]
    fluid_owner = np.where(a[idx], owner[idx, 0], owner[idx, 1])
    return mesh.edges[idx], fluid_owner
