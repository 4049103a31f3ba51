"""Legacy ASCII VTK snapshots of total velocity, total pressure and phase field."""
from __future__ import annotations

import numpy as np


def vertex_fields(disc, state):
    """Total velocity (nv, 2), total pressure (nv,) and phase (nv,) at mesh vertices.

    Vertex values of Lagrange coefficients are read directly (bubbles vanish
    at vertices); the Darcy velocity uses the gradient averaged over the
    triangles around each vertex.
    """
    mesh = disc.problem.mesh
    nv = mesh.nv
    u = state.u.reshape(-1, 2)[:nv]
    pi = state.pi[:nv]
    p = state.p[:nv]
    tri = np.repeat(np.arange(mesh.nt), 3)
    corner = np.tile(np.eye(3), (mesh.nt, 1))
    _, grad = disc.space_p.evaluate_at(state.p, tri, corner, gradient=True)
    acc = np.zeros((nv, 2))
    cnt = np.zeros(nv)
    verts = mesh.triangles.ravel()
    np.add.at(acc, verts, grad)
    np.add.at(cnt, verts, 1.0)
    q = -(acc / cnt[:, None]) @ disc.problem.params.kappa.T
    if disc.kind == "sharp":
        phi = np.zeros(nv)
        np.add.at(phi, verts, np.repeat(disc.fluid_mask.astype(float), 3))
        phi /= cnt
    else:
        phi = np.asarray(disc.problem.phase.phi(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
    psi = 1.0 - phi
    return u * phi[:, None] + q * psi[:, None], pi * phi + p * psi, phi


def write_vtk(path, disc, state, title="diffuse_sd snapshot"):
    mesh = disc.problem.mesh
    utot, ptot, phi = vertex_fields(disc, state)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title} t={float(state.t)!r}\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.nv} double\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"CELLS {mesh.nt} {4 * mesh.nt}\n")
        for a, b, c in mesh.triangles.tolist():
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {mesh.nt}\n")
        fh.write("5\n" * mesh.nt)
        fh.write(f"POINT_DATA {mesh.nv}\n")
        fh.write("VECTORS u_tot double\n")
        for ux, uy in utot.tolist():
            fh.write(f"{ux!r} {uy!r} 0.0\n")
        for name, vals in (("p_tot", ptot), ("phi", phi)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("".join(f"{v!r}\n" for v in vals.tolist()))
