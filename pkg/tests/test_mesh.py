import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffuse_sd.mesh import (MeshError, MeshParseError, RectangleSpec, TriMesh, build_aligned, build_uniform,
                             export_mesh, import_mesh, refine_toward_levelset, submesh)


def unit(nx, ny):
    return build_uniform(RectangleSpec((0.0, 1.0), (0.0, 1.0), nx, ny))


def test_smallest_structured_mesh_counts():
    m = unit(1, 1)
    assert (m.nv, m.nt, len(m.boundary_edges)) == (4, 2, 4)
    assert set(m.tags) == {"bottom", "top", "left", "right"}


def test_h_max_is_cell_diagonal():
    assert unit(5, 5).h_max == pytest.approx(math.sqrt(2) / 5, rel=1e-14)


def test_channel_mesh_counts():
    m = build_uniform(RectangleSpec((0.0, 1.0), (0.0, 2.0), 5, 10))
    assert (m.nt, m.nv) == (100, 66)


def test_zero_subdivisions_rejected():
    with pytest.raises(ValueError):
        RectangleSpec((0.0, 1.0), (0.0, 1.0), 0, 3)


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 7), ny=st.integers(1, 7), w=st.floats(0.1, 5.0), h=st.floats(0.1, 5.0))
def test_uniform_area_orientation_and_conformity(nx, ny, w, h):
    m = build_uniform(RectangleSpec((-1.0, -1.0 + w), (2.0, 2.0 + h), nx, ny))
    assert np.all(m.signed_areas > 0)
    assert m.areas.sum() == pytest.approx(w * h, rel=1e-12)
    m.audit()
    counts = m.edge_counts
    assert set(np.unique(counts)) <= {1, 2}
    assert np.sum(counts == 1) == len(m.boundary_edges) == 2 * (nx + ny)
    assert m.h_max == pytest.approx(math.hypot(w / nx, h / ny), rel=1e-12)


def test_refine_levels_zero_is_identity():
    m = unit(3, 3)
    assert refine_toward_levelset(m, lambda x, y: y - 0.5, 0.1, 0) is m


def test_refine_band_increases_count_and_keeps_area():
    m = unit(4, 4)
    r = refine_toward_levelset(m, lambda x, y: y - 0.5, 0.1, 1)
    assert r.nt > m.nt
    r.audit()
    assert np.all(r.signed_areas > 0)
    assert r.areas.sum() == pytest.approx(1.0, rel=1e-12)


def _parent_of(mesh, points):
    """Index of the triangle of ``mesh`` containing each point."""
    v = mesh.vertices[mesh.triangles]
    out = np.empty(len(points), dtype=int)
    for i, p in enumerate(points):
        a, b, c = v[:, 0], v[:, 1], v[:, 2]
        d = (b[:, 1] - c[:, 1]) * (a[:, 0] - c[:, 0]) + (c[:, 0] - b[:, 0]) * (a[:, 1] - c[:, 1])
        l0 = ((b[:, 1] - c[:, 1]) * (p[0] - c[:, 0]) + (c[:, 0] - b[:, 0]) * (p[1] - c[:, 1])) / d
        l1 = ((c[:, 1] - a[:, 1]) * (p[0] - c[:, 0]) + (a[:, 0] - c[:, 0]) * (p[1] - c[:, 1])) / d
        out[i] = np.flatnonzero((l0 >= -1e-12) & (l1 >= -1e-12) & (1 - l0 - l1 >= -1e-12))[0]
    return out


def test_refined_band_triangles_are_halved():
    m = unit(4, 4)
    ls = lambda x, y: y - 0.5
    band = 0.1
    r = refine_toward_levelset(m, ls, band, 1)
    pv = m.vertices[m.triangles]
    vals = ls(pv[..., 0], pv[..., 1])
    touches = np.any(np.abs(vals) < band, axis=1) | (vals.min(axis=1) * vals.max(axis=1) < 0)
    assert touches.any()

    def diameters(mesh):
        v = mesh.vertices[mesh.triangles]
        return np.max(np.linalg.norm(v - np.roll(v, 1, axis=1), axis=2), axis=1)

    parent = _parent_of(m, r.centroids())
    child = touches[parent]
    assert np.all(diameters(r)[child] <= diameters(m)[parent[child]] / 2 + 1e-14)


def test_two_level_refinement_is_conforming():
    m = unit(3, 3)
    r = refine_toward_levelset(m, lambda x, y: x - y, 0.2, 2)
    r.audit()
    assert r.areas.sum() == pytest.approx(1.0, rel=1e-12)


def test_export_import_round_trip(tmp_path):
    m = unit(1, 1)
    path = tmp_path / "square.mesh"
    export_mesh(m, path)
    back = import_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.boundary_edges, m.boundary_edges)
    assert list(back.boundary_tags) == list(m.boundary_tags)


def test_round_trip_keeps_interface_tag(tmp_path):
    m = build_aligned((0.0, 1.0), (-1.0, 1.0), 4, 3, 3, lambda x: 0.1 * np.sin(4 * np.pi * x))
    path = tmp_path / "aligned.mesh"
    export_mesh(m, path)
    back = import_mesh(path)
    assert np.max(np.abs(back.vertices - m.vertices)) <= 1e-15
    assert np.array_equal(back.interface_edges, m.interface_edges)


def _write(tmp_path, text):
    p = tmp_path / "bad.mesh"
    p.write_text(text)
    return p


def test_negative_area_triangle_rejected(tmp_path):
    text = "3 1 3\n0 0\n1 0\n0 1\n0 2 1\n0 1 bottom\n1 2 diag\n2 0 left\n"
    with pytest.raises(MeshError):
        import_mesh(_write(tmp_path, text))


def test_dangling_boundary_tag_rejected(tmp_path):
    text = "4 2 5\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n0 1 bottom\n1 2 right\n2 3 top\n3 0 left\n0 2 bogus\n"
    with pytest.raises(MeshError):
        import_mesh(_write(tmp_path, text))


def test_malformed_file_reports_line_number(tmp_path):
    text = "# header\n3 1 3\n0 0\n1 zero\n0 1\n0 1 2\n0 1 a\n1 2 b\n2 0 c\n"
    with pytest.raises(MeshParseError, match="line 4"):
        import_mesh(_write(tmp_path, text))


def test_aligned_mesh_puts_vertices_on_curve():
    curve = lambda x: 0.1 * np.sin(4 * np.pi * x)
    m = build_aligned((0.0, 1.0), (-1.0, 1.0), 8, 4, 4, curve)
    m.audit()
    assert len(m.interface_edges) == 8
    iv = np.unique(m.interface_edges)
    assert np.allclose(m.vertices[iv, 1], curve(m.vertices[iv, 0]), atol=1e-15)
    assert m.areas.sum() == pytest.approx(2.0, rel=1e-12)


def test_submesh_tags_cut_edges():
    m = unit(2, 2)
    mask = m.centroids()[:, 1] < 0.5
    sub, vmap, tri = submesh(m, mask)
    sub.audit()
    assert sub.nt == mask.sum()
    assert sub.areas.sum() == pytest.approx(0.5, rel=1e-12)
    assert "interface" in set(sub.tags)
