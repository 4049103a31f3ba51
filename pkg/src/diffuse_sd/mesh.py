"""Conforming triangular meshes of rectangles with tagged boundary edges.

Meshes are plain containers of numpy arrays. Derived connectivity (edges,
triangle-to-edge maps, boundary ownership) is computed lazily and cached;
a mesh is never mutated after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

STANDARD_TAGS = ("bottom", "top", "left", "right")
INTERFACE_TAG = "interface"


class MeshError(ValueError):
    """Raised when a mesh violates conformity or tagging invariants."""


class MeshParseError(MeshError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RectangleSpec:
    x_range: tuple
    y_range: tuple
    nx: int
    ny: int
    # optional (levelset, band_width, levels) for local refinement after build
    grading: Optional[tuple] = None

    def __post_init__(self):
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        if not (x1 > x0 and y1 > y0):
            raise ValueError("rectangle must satisfy x1 > x0 and y1 > y0")
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError(f"subdivisions must be >= 1, got nx={self.nx}, ny={self.ny}")


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation with counter-clockwise triangles.

    ``boundary_edges`` holds edges on the topological boundary together with
    ``boundary_tags``; ``interface_edges`` holds interior edges tagged
    ``interface`` (used by interface-aligned meshes).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    interface_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.asarray(self.boundary_tags, dtype=object).reshape(-1))
        object.__setattr__(self, "interface_edges", np.ascontiguousarray(self.interface_edges, dtype=np.int64).reshape(-1, 2))
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.interface_edges):
            arr.setflags(write=False)
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge is required")

    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nt(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def edge_lengths(self):
        p = self.vertices[self.triangles]
        return np.stack([np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], axis=1)

    @property
    def h_max(self):
        return float(self.edge_lengths.max())

    @cached_property
    def _edge_data(self):
        # local edge k joins local vertices k and k+1
        local = np.stack([self.triangles[:, [k, (k + 1) % 3]] for k in range(3)], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self):
        """Unique edges (ne, 2) with sorted vertex indices."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """(nt, 3) global edge index of local edge k = (v_k, v_{k+1})."""
        return self._edge_data[1]

    @property
    def edge_counts(self):
        return self._edge_data[2]

    @property
    def ne(self):
        return len(self.edges)

    @cached_property
    def edge_triangles(self):
        """(ne, 2) owning triangles and (ne, 2) local edge slots; -1 where absent."""
        owner = -np.ones((self.ne, 2), dtype=np.int64)
        slot = -np.ones((self.ne, 2), dtype=np.int64)
        e = self.tri_edges.ravel()
        t = np.repeat(np.arange(self.nt), 3)
        k = np.tile(np.arange(3), self.nt)
        order = np.argsort(e, kind="stable")
        e, t, k = e[order], t[order], k[order]
        first = np.ones(len(e), dtype=bool)
        first[1:] = e[1:] != e[:-1]
        owner[e[first], 0] = t[first]
        slot[e[first], 0] = k[first]
        second = ~first
        owner[e[second], 1] = t[second]
        slot[e[second], 1] = k[second]
        return owner, slot

    def edge_index(self, pairs):
        """Global edge indices of vertex pairs; -1 for pairs that are not edges."""
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        if len(pairs) == 0:
            return np.zeros(0, dtype=np.int64)
        nv = max(self.nv, 1)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = pairs[:, 0] * nv + pairs[:, 1]
        pos = np.searchsorted(keys, q)
        pos = np.clip(pos, 0, len(keys) - 1)
        found = keys[pos] == q
        return np.where(found, pos, -1)

    def tagged_edges(self, tags):
        """Boundary edges (and interface edges if requested) carrying any of ``tags``."""
        if isinstance(tags, str):
            tags = (tags,)
        tags = tuple(tags)
        mask = np.isin(self.boundary_tags.astype(str), tags) if len(self.boundary_tags) else np.zeros(0, bool)
        out = self.boundary_edges[mask]
        if INTERFACE_TAG in tags and len(self.interface_edges):
            out = np.vstack([out, self.interface_edges])
        return out

    @property
    def tags(self):
        found = sorted(set(self.boundary_tags.astype(str)))
        if len(self.interface_edges):
            found.append(INTERFACE_TAG)
        return tuple(found)

    def edge_owner(self, pairs):
        """For each boundary-type edge, (triangle, local slot) of its first owner."""
        idx = self.edge_index(pairs)
        if np.any(idx < 0):
            raise MeshError("edge not present in triangulation")
        owner, slot = self.edge_triangles
        return owner[idx, 0], slot[idx, 0]

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def permuted(self, vperm, tperm=None):
        """Renumber vertices by ``vperm`` (new index of old vertex i is vperm[i])."""
        vperm = np.asarray(vperm)
        inv = np.empty_like(vperm)
        inv[vperm] = np.arange(len(vperm))
        tris = vperm[self.triangles]
        if tperm is not None:
            tris = tris[np.asarray(tperm)]
        return TriMesh(
            self.vertices[inv], tris, vperm[self.boundary_edges], self.boundary_tags.copy(),
            vperm[self.interface_edges],
        )

    def audit(self):
        """Check every TriMesh invariant; raise MeshError on the first violation."""
        if self.nt == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= self.nv:
            raise MeshError("triangle references a missing vertex")
        bad = np.nonzero(self.signed_areas <= 0)[0]
        if len(bad):
            raise MeshError(f"triangle {bad[0]} has non-positive signed area")
        counts = self.edge_counts
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        owner, slot = self.edge_triangles
        interior = counts == 2
        # conforming neighbours traverse a shared edge in opposite directions
        t0, k0 = owner[interior, 0], slot[interior, 0]
        t1, k1 = owner[interior, 1], slot[interior, 1]
        a0 = self.triangles[t0, k0]
        a1 = self.triangles[t1, k1]
        if np.any(a0 == a1):
            raise MeshError("inconsistent triangle orientation across an interior edge")
        boundary = set(map(tuple, self.edges[counts == 1]))
        tagged = [tuple(sorted(e)) for e in self.boundary_edges.tolist()]
        if len(set(tagged)) != len(tagged):
            raise MeshError("boundary edge tagged more than once")
        for e in tagged:
            if e not in boundary:
                raise MeshError(f"dangling boundary tag on edge {e}")
        if len(tagged) != len(boundary):
            raise MeshError(f"{len(boundary) - len(tagged)} boundary edges carry no tag")
        if len(self.interface_edges):
            idx = self.edge_index(self.interface_edges)
            if np.any(idx < 0):
                raise MeshError("dangling interface tag")
            if np.any(counts[idx] != 2):
                raise MeshError("interface edge is not interior")
        return True


def _tag_rectangle_boundary(vertices, edges, x_range, y_range, tol=1e-12):
    x0, x1 = x_range
    y0, y1 = y_range
    scale = max(x1 - x0, y1 - y0)
    p = vertices[edges]
    mid = p.mean(axis=1)
    tags = np.empty(len(edges), dtype=object)
    tags[:] = ""
    tags[np.abs(mid[:, 1] - y0) < tol * scale] = "bottom"
    tags[np.abs(mid[:, 1] - y1) < tol * scale] = "top"
    tags[np.abs(mid[:, 0] - x0) < tol * scale] = "left"
    tags[np.abs(mid[:, 0] - x1) < tol * scale] = "right"
    if np.any(tags == ""):
        raise MeshError("boundary edge not on the rectangle")
    return tags


def _structured(xs, ys, interface_row=None):
    """Triangulate a logically structured grid of node coordinates.

    ``xs``/``ys`` are (ny+1, nx+1) arrays. Each cell is split along the
    lower-left to upper-right diagonal.
    """
    ny, nx = xs.shape[0] - 1, xs.shape[1] - 1
    vertices = np.column_stack([xs.ravel(), ys.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    a = j * (nx + 1) + i
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])

    bottom = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
    top = bottom + ny * (nx + 1)
    left = np.column_stack([np.arange(ny) * (nx + 1), np.arange(1, ny + 1) * (nx + 1)])
    right = left + nx
    bedges = np.vstack([bottom, top, left, right])
    btags = np.array(["bottom"] * nx + ["top"] * nx + ["left"] * ny + ["right"] * ny, dtype=object)
    iface = np.zeros((0, 2), dtype=np.int64)
    if interface_row is not None:
        iface = bottom + interface_row * (nx + 1)
    return TriMesh(vertices, tris, bedges, btags, iface)


def build_tensor(xs, ys):
    """Structured mesh on the tensor grid of strictly increasing ``xs`` and ``ys``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or len(ys) < 2 or np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise ValueError("grid lines must be strictly increasing with at least two entries")
    X, Y = np.meshgrid(xs, ys)
    return _structured(X, Y)


def build_uniform(spec: RectangleSpec) -> TriMesh:
    """Uniform structured mesh of ``2*nx*ny`` triangles."""
    xs = np.linspace(spec.x_range[0], spec.x_range[1], int(spec.nx) + 1)
    ys = np.linspace(spec.y_range[0], spec.y_range[1], int(spec.ny) + 1)
    # pin the far edges exactly
    xs[-1], ys[-1] = spec.x_range[1], spec.y_range[1]
    mesh = build_tensor(xs, ys)
    if spec.grading is not None:
        levelset, band, levels = spec.grading
        mesh = refine_toward_levelset(mesh, levelset, band, levels)
    return mesh


def build_aligned(x_range, y_range, nx, ny_below, ny_above, interface: Callable):
    """Structured mesh whose grid row ``ny_below`` follows ``y = interface(x)``.

    Columns are uniform in x; each column is split into ``ny_below`` uniform
    cells beneath the interface curve and ``ny_above`` above it. The interior
    edges along the curve are tagged ``interface``.
    """
    x0, x1 = x_range
    y0, y1 = y_range
    xs = np.linspace(x0, x1, nx + 1)
    f = np.asarray(interface(xs), dtype=float) * np.ones_like(xs)
    if np.any(f <= y0) or np.any(f >= y1):
        raise MeshError("interface curve must lie strictly inside the rectangle")
    s_lo = np.linspace(0.0, 1.0, ny_below + 1)
    s_hi = np.linspace(0.0, 1.0, ny_above + 1)[1:]
    rows = [y0 + s * (f - y0) for s in s_lo] + [f + s * (y1 - f) for s in s_hi]
    Y = np.vstack(rows)
    Y[0], Y[-1] = y0, y1
    X = np.tile(xs, (ny_below + ny_above + 1, 1))
    mesh = _structured(X, Y, interface_row=ny_below)
    mesh.audit()
    return mesh


def submesh(mesh: TriMesh, tri_mask, new_tag=INTERFACE_TAG):
    """Extract the triangles selected by ``tri_mask``.

    Returns ``(sub, vertex_map, tri_index)`` where ``vertex_map[i]`` is the
    parent index of sub-vertex ``i`` and ``tri_index`` lists the parent
    triangles in sub order. Edges that become boundary only in the submesh are
    tagged ``new_tag``.
    """
    tri_mask = np.asarray(tri_mask, dtype=bool)
    tri_index = np.nonzero(tri_mask)[0]
    if len(tri_index) == 0:
        raise MeshError("empty submesh")
    tris = mesh.triangles[tri_index]
    vertex_map = np.unique(tris)
    renum = -np.ones(mesh.nv, dtype=np.int64)
    renum[vertex_map] = np.arange(len(vertex_map))
    local_tris = renum[tris]

    counts = np.zeros(mesh.ne, dtype=np.int64)
    np.add.at(counts, mesh.tri_edges[tri_index].ravel(), 1)
    bnd = np.nonzero(counts == 1)[0]
    parent_tag = {}
    for e, tg in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist()):
        parent_tag[tuple(sorted(e))] = tg
    bedges = mesh.edges[bnd]
    tags = np.array([parent_tag.get(tuple(e), new_tag) for e in bedges.tolist()], dtype=object)
    sub = TriMesh(mesh.vertices[vertex_map], local_tris, renum[bedges], tags)
    return sub, vertex_map, tri_index


def _triangle_hits_band(mesh, levelset, band):
    p = mesh.vertices[mesh.triangles]  # (nt,3,2)
    samples = [p[:, 0], p[:, 1], p[:, 2],
               0.5 * (p[:, 0] + p[:, 1]), 0.5 * (p[:, 1] + p[:, 2]), 0.5 * (p[:, 2] + p[:, 0]),
               p.mean(axis=1)]
    vals = np.stack([np.asarray(levelset(s[:, 0], s[:, 1]), dtype=float) * np.ones(len(s)) for s in samples], axis=1)
    near = np.any(np.abs(vals) < band, axis=1)
    crossing = (vals.min(axis=1) < 0) & (vals.max(axis=1) > 0)
    return near | crossing


def _refine_once(mesh: TriMesh, marked_tris):
    marked_edges = np.zeros(mesh.ne, dtype=bool)
    marked_edges[mesh.tri_edges[marked_tris].ravel()] = True
    # closure: any triangle with two or more marked edges is red-refined
    while True:
        n_marked = marked_edges[mesh.tri_edges].sum(axis=1)
        promote = (n_marked >= 2) & (n_marked < 3)
        if not promote.any():
            break
        marked_edges[mesh.tri_edges[promote].ravel()] = True

    edge_ids = np.nonzero(marked_edges)[0]
    mid_index = -np.ones(mesh.ne, dtype=np.int64)
    mid_index[edge_ids] = mesh.nv + np.arange(len(edge_ids))
    midpoints = mesh.vertices[mesh.edges[edge_ids]].mean(axis=1)
    vertices = np.vstack([mesh.vertices, midpoints])

    tri = mesh.triangles
    te = mesh.tri_edges
    n_marked = marked_edges[te].sum(axis=1)
    out = [tri[n_marked == 0]]

    red = n_marked == 3
    if red.any():
        v0, v1, v2 = tri[red, 0], tri[red, 1], tri[red, 2]
        m01, m12, m20 = mid_index[te[red, 0]], mid_index[te[red, 1]], mid_index[te[red, 2]]
        out += [np.column_stack([v0, m01, m20]), np.column_stack([m01, v1, m12]),
                np.column_stack([m20, m12, v2]), np.column_stack([m01, m12, m20])]

    green = np.nonzero(n_marked == 1)[0]
    if len(green):
        k = np.argmax(marked_edges[te[green]], axis=1)
        va = tri[green, k]
        vb = tri[green, (k + 1) % 3]
        vc = tri[green, (k + 2) % 3]
        m = mid_index[te[green, k]]
        out += [np.column_stack([va, m, vc]), np.column_stack([m, vb, vc])]

    triangles = np.vstack(out)

    def split(edges, tags=None):
        if len(edges) == 0:
            return edges, tags
        idx = mesh.edge_index(edges)
        mids = mid_index[idx]
        keep = mids < 0
        new_edges = [edges[keep]]
        new_tags = [tags[keep]] if tags is not None else None
        s = ~keep
        if s.any():
            new_edges += [np.column_stack([edges[s, 0], mids[s]]), np.column_stack([mids[s], edges[s, 1]])]
            if tags is not None:
                new_tags += [tags[s], tags[s]]
        return np.vstack(new_edges), (np.concatenate(new_tags) if tags is not None else None)

    bedges, btags = split(mesh.boundary_edges, mesh.boundary_tags)
    iedges, _ = split(mesh.interface_edges)
    return TriMesh(vertices, triangles, bedges, btags, iedges)


def refine_toward_levelset(mesh: TriMesh, levelset, band_width, levels) -> TriMesh:
    """Red-refine triangles meeting ``{|levelset| < band_width}`` ``levels`` times.

    Conformity is restored with green bisection of triangles that end up with
    a single hanging edge.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    for _ in range(int(levels)):
        marked = np.nonzero(_triangle_hits_band(mesh, levelset, band_width))[0]
        if len(marked) == 0:
            break
        mesh = _refine_once(mesh, marked)
        mesh.audit()
    return mesh


def export_mesh(mesh: TriMesh, path):
    """Write the ASCII mesh format: header ``nv nt nb`` then vertices, triangles, tagged edges."""
    edges = [(a, b, t) for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())]
    edges += [(a, b, INTERFACE_TAG) for a, b in mesh.interface_edges.tolist()]
    lines = [f"{mesh.nv} {mesh.nt} {len(edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{a} {b} {t}" for a, b, t in edges]
    Path(path).write_text("\n".join(lines) + "\n")


def import_mesh(path) -> TriMesh:
    """Read and validate a mesh written by :func:`export_mesh` (``#`` comments allowed)."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text.split()))
    if not rows:
        raise MeshParseError("empty mesh file")

    def ints(lineno, toks, n):
        if len(toks) != n:
            raise MeshParseError(f"expected {n} fields, found {len(toks)}", lineno)
        try:
            return [int(t) for t in toks]
        except ValueError as exc:
            raise MeshParseError(f"expected integers: {exc}", lineno) from None

    lineno, head = rows[0]
    nv, nt, nb = ints(lineno, head, 3)
    if len(rows) != 1 + nv + nt + nb:
        raise MeshParseError(f"expected {1 + nv + nt + nb} data lines, found {len(rows)}", rows[-1][0])
    verts = np.empty((nv, 2))
    for i, (lineno, toks) in enumerate(rows[1:1 + nv]):
        if len(toks) != 2:
            raise MeshParseError("vertex line needs 2 coordinates", lineno)
        try:
            verts[i] = [float(toks[0]), float(toks[1])]
        except ValueError as exc:
            raise MeshParseError(str(exc), lineno) from None
    tris = np.empty((nt, 3), dtype=np.int64)
    for i, (lineno, toks) in enumerate(rows[1 + nv:1 + nv + nt]):
        tris[i] = ints(lineno, toks, 3)
        if tris[i].min() < 0 or tris[i].max() >= nv:
            raise MeshParseError("vertex index out of range", lineno)
    bedges, btags, iedges = [], [], []
    for lineno, toks in rows[1 + nv + nt:]:
        if len(toks) != 3:
            raise MeshParseError("edge line needs 'i j tag'", lineno)
        a, b = ints(lineno, toks[:2], 2)
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshParseError("vertex index out of range", lineno)
        if toks[2] == INTERFACE_TAG:
            iedges.append((a, b))
        else:
            bedges.append((a, b))
            btags.append(toks[2])
    mesh = TriMesh(verts, tris, np.array(bedges, dtype=np.int64).reshape(-1, 2), np.array(btags, dtype=object),
                   np.array(iedges, dtype=np.int64).reshape(-1, 2))
    mesh.audit()
    return mesh
