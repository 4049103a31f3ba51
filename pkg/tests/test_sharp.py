import numpy as np
import pytest

from diffuse_sd.analysis import rate, relative_errors
from diffuse_sd.mesh import MeshError, RectangleSpec, build_uniform
from diffuse_sd.problems import manufactured_problem, sine_mesh, sine_problem
from diffuse_sd.sharp import SharpDiscretization, interface_edges
from diffuse_sd.stepper import TimeGrid, run


@pytest.fixture(scope="module")
def sharp4():
    return SharpDiscretization(manufactured_problem(4))


def test_interface_edges_lie_on_the_flat_interface(sharp4):
    pts = sharp4.problem.mesh.vertices[sharp4.interface_pairs]
    assert len(sharp4.interface_pairs) == 4
    assert np.allclose(pts[..., 1], 1.0)
    assert np.allclose(sharp4.interface_quadrature.normal, [0.0, -1.0])


def test_coupling_blocks_are_exactly_skew(sharp4):
    ops = sharp4.operators
    assert abs(ops.c_pu + ops.c_up.T).max() == 0.0


def test_tangential_velocity_does_not_couple(sharp4):
    u = sharp4.space_u.interpolate(lambda x, y: np.stack([1.0 + x * y, 0.0 * y], -1))
    assert np.abs(sharp4.operators.c_pu @ u).max() <= 1e-12


def test_normal_flux_coupling_integrates_pressure(sharp4):
    # int_G p v.n with v = (0, 1), p = 1 over a unit-length interface with n = (0, -1)
    v = sharp4.space_u.interpolate(lambda x, y: np.stack([0 * x, 1.0 + 0 * y], -1))
    p = np.ones(sharp4.space_p.dof_count)
    assert v @ (sharp4.operators.c_up @ p) == pytest.approx(-1.0, abs=1e-13)


def test_slip_form_uses_edge_tangent(sharp4):
    # alpha int_G (u.t)^2 with u = (2, 0) on a unit interface
    u = sharp4.space_u.interpolate(lambda x, y: np.stack([2.0 + 0 * x, 0 * y], -1))
    assert u @ (sharp4.operators.bjs @ u) == pytest.approx(4.0, abs=1e-12)


def test_inactive_unknowns_are_pinned(sharp4):
    dofs, _ = sharp4.constraints(0.0)
    lo, hi = sharp4.offsets[1], sharp4.offsets[2]
    porous_pi = np.nonzero(sharp4.space_q.nodes[:, 1] < 1.0 - 1e-12)[0] + lo
    fluid_p = np.nonzero(sharp4.space_p.nodes[:, 1] > 1.0 + 1e-12)[0] + hi
    assert set(porous_pi) <= set(dofs) and set(fluid_p) <= set(dofs)


def test_misaligned_mesh_is_rejected():
    mesh = build_uniform(RectangleSpec((0.0, 1.0), (0.0, 2.0), 3, 3))
    with pytest.raises(MeshError, match="aligned"):
        SharpDiscretization(manufactured_problem(3, mesh=mesh))


def test_single_subdomain_is_rejected():
    prob = manufactured_problem(4)
    with pytest.raises(MeshError):
        SharpDiscretization(prob, fluid_mask=np.ones(prob.mesh.nt, dtype=bool))


def test_interface_edge_owner_is_fluid_side():
    mesh = build_uniform(RectangleSpec((0.0, 1.0), (0.0, 2.0), 2, 4))
    mask = mesh.centroids()[:, 1] > 1.0
    edges, owner = interface_edges(mesh, mask)
    assert len(edges) == 2 and mask[owner].all()


def test_zero_data_gives_zero():
    prob = manufactured_problem(4, homogeneous=True)
    prob.forcing = prob.source = prob.traction = prob.darcy_flux = None
    prob.initial_velocity = prob.initial_fluid_pressure = prob.initial_darcy_pressure = None
    state, _ = run(SharpDiscretization(prob), TimeGrid(1.0, 3))
    assert np.all(state.vector == 0)


@pytest.mark.parametrize("scheme", ["backward_euler", "midpoint"])
def test_sharp_energy_identity(scheme):
    disc = SharpDiscretization(manufactured_problem(5))
    _, records = run(disc, TimeGrid(1.0, 5, scheme), diagnostics=True)
    assert max(r.energy_identity_residual for r in records) <= 1e-9


def sharp_errors(scheme, sizes):
    out = []
    for n in sizes:
        disc = SharpDiscretization(manufactured_problem(n))
        state, _ = run(disc, TimeGrid(1.0, n, scheme))
        out.append(relative_errors(disc, state))
    return out


def test_sharp_manufactured_convergence():
    e = sharp_errors("midpoint", (5, 10, 20))
    assert rate(e[1][0], e[2][0]) >= 1.0
    assert rate(e[1][1], e[2][1]) >= 1.0


def test_sharp_backward_euler_rate_rises_toward_one():
    e = sharp_errors("backward_euler", (5, 10, 20))
    for k in (0, 1):
        r1, r2 = rate(e[0][k], e[1][k]), rate(e[1][k], e[2][k])
        assert 0.8 <= r1 < r2 <= 1.3


def test_sine_mesh_is_aligned_for_sharp_solver():
    disc = SharpDiscretization(sine_problem(sine_mesh(8), epsilon=0.125))
    assert len(disc.interface_pairs) == 8
    fluid, porous = disc.subdomain_meshes()
    assert fluid[0].nt + porous[0].nt == disc.problem.mesh.nt
