import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffuse_sd.fem import geometry, gauss_legendre_01
from diffuse_sd.mesh import RectangleSpec, build_uniform
from diffuse_sd.phasefield import (FlatLevelSet, PhaseField, PhaseFieldError, Profile, SineLevelSet, diffuse_frame,
                                   eval_S, layer_area, levelset_from_string, tanh_layer_threshold)

PROFILE_CASES = [Profile("power", 0.5), Profile("power", 0.3), Profile("clamp"), Profile("tanh")]


def test_power_profile_values():
    p = Profile("power", 0.5)
    assert eval_S(p, 0.0) == 0.0
    assert eval_S(p, -0.75) == pytest.approx(-0.5, abs=1e-15)


def test_clamp_saturates():
    assert eval_S(Profile("clamp"), 2.0) == 1.0


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5, -0.2])
def test_power_alpha_out_of_range(alpha):
    with pytest.raises(PhaseFieldError):
        Profile("power", alpha)


@pytest.mark.parametrize("profile", PROFILE_CASES, ids=lambda p: f"{p.kind}-{p.alpha}")
@settings(max_examples=50, deadline=None)
@given(t=st.floats(-5, 5), s=st.floats(-5, 5))
def test_profile_odd_and_monotone(profile, t, s):
    assert eval_S(profile, -t) == pytest.approx(-eval_S(profile, t), abs=1e-15)
    lo, hi = sorted((t, s))
    assert eval_S(profile, lo) <= eval_S(profile, hi) + 1e-15
    if profile.kind != "tanh" and abs(t) >= 1:
        assert eval_S(profile, t) == math.copysign(1.0, t)


@pytest.mark.parametrize("profile", PROFILE_CASES, ids=lambda p: f"{p.kind}-{p.alpha}")
def test_half_on_interface(profile):
    pf = PhaseField(0.1, 0.0, profile, FlatLevelSet(1.0))
    assert pf.phi(0.3, 1.0) == 0.5


def test_regularisation_of_one():
    pf = PhaseField(0.1, 1e-3, Profile("clamp"), FlatLevelSet(1.0))
    assert pf.phi(0.5, 1.5) == pytest.approx(0.999, abs=1e-15)


def test_clamp_inside_layer():
    pf = PhaseField(0.1, 0.0, Profile("clamp"), FlatLevelSet(0.0))
    assert pf.phi(0.0, 0.05) == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("profile", PROFILE_CASES, ids=lambda p: f"{p.kind}-{p.alpha}")
@settings(max_examples=40, deadline=None)
@given(x=st.floats(-2, 2), y=st.floats(-2, 2), eps=st.floats(0.01, 1), delta=st.floats(0, 0.49))
def test_bounds_and_partition(profile, x, y, eps, delta):
    pf = PhaseField(eps, delta, profile, SineLevelSet(0.1, 4, 0.0))
    phi, psi = pf.phi(x, y), pf.psi(x, y)
    assert phi + psi == 1.0
    assert delta - 1e-15 <= phi <= 1 - delta + 1e-15
    assert 0.0 <= pf.phi_raw(x, y) <= 1.0


@pytest.mark.parametrize("profile", [Profile("power", 0.5), Profile("clamp")], ids=["power", "clamp"])
def test_compact_support_before_regularisation(profile):
    pf = PhaseField(0.1, 0.0, profile, FlatLevelSet(0.0))
    y = np.array([0.1, 0.3, -0.1, -0.4])
    assert np.array_equal(pf.phi_raw(0.0, y), [1.0, 1.0, 0.0, 0.0])


@pytest.mark.parametrize("profile", PROFILE_CASES, ids=lambda p: f"{p.kind}-{p.alpha}")
def test_gradient_matches_central_difference(profile):
    rng = np.random.default_rng(5)
    eps = 0.2
    pf = PhaseField(eps, 1e-3, profile, SineLevelSet(0.1, 4, 0.0))
    x = rng.uniform(0, 1, 20)
    # points inside the layer, away from the profile kinks
    y = pf.levelset.curve(x) - rng.uniform(-0.8, 0.8, 20) * eps
    h = 1e-7
    fd = np.stack([(pf.phi(x + h, y) - pf.phi(x - h, y)) / (2 * h),
                   (pf.phi(x, y + h) - pf.phi(x, y - h)) / (2 * h)], axis=-1)
    assert np.allclose(pf.grad_phi(x, y), fd, atol=1e-5)


def test_monotone_along_levelset():
    pf = PhaseField(0.1, 1e-3, Profile("tanh"), FlatLevelSet(1.0))
    y = np.linspace(0.0, 2.0, 401)
    assert np.all(np.diff(pf.phi(0.4, y)) >= 0)


def test_flat_frame_tangent_is_horizontal():
    pf = PhaseField(0.1, 1e-3, Profile("tanh"), FlatLevelSet(1.0))
    fr = diffuse_frame(pf, np.array([0.2]), np.array([1.02]))
    assert fr.valid[0]
    assert fr.gradient[0, 0] == 0.0 and fr.gradient[0, 1] > 0
    assert np.allclose(np.abs(fr.tangent[0]), [1.0, 0.0])
    assert fr.tangent[0] @ fr.gradient[0] == 0.0


def test_frame_invalid_outside_clamp_layer():
    pf = PhaseField(0.1, 1e-3, Profile("clamp"), FlatLevelSet(1.0))
    fr = diffuse_frame(pf, np.array([0.2]), np.array([1.5]))
    assert not fr.valid[0]
    assert np.all(fr.tangent == 0)


def test_sine_tangent_is_orthogonal_to_analytic_normal():
    pf = PhaseField(0.05, 1e-3, Profile("tanh"), SineLevelSet(0.1, 4, 0.0))
    x = np.linspace(0.0, 1.0, 17)
    y = 0.1 * np.sin(4 * np.pi * x)
    fr = diffuse_frame(pf, x, y)
    # normal of the curve y = 0.1 sin(4 pi x): (-y'(x), 1) normalised
    n = np.stack([-0.4 * np.pi * np.cos(4 * np.pi * x), np.ones_like(x)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    assert np.all(fr.valid)
    assert np.max(np.abs(np.sum(fr.tangent * n, axis=-1))) <= 1e-12
    assert np.allclose(np.linalg.norm(fr.tangent, axis=-1), 1.0, atol=1e-15)
    # right-handed: tangent is the gradient direction rotated counter-clockwise
    g = fr.gradient / fr.norm[:, None]
    assert np.allclose(g[:, 0] * fr.tangent[:, 1] - g[:, 1] * fr.tangent[:, 0], 1.0)


@pytest.mark.parametrize("profile", [Profile("clamp"), Profile("power", 0.5)], ids=["clamp", "power"])
@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_layer_area_bound_compact_profiles(profile, eps):
    pf = PhaseField(eps, 0.0, profile, FlatLevelSet(1.0))
    geom = geometry(build_uniform(RectangleSpec((0, 1), (0, 2), 40, 80)), 6)
    area = layer_area(pf, geom, 0.0)
    assert area <= 2.5 * eps * 1.0
    assert area == pytest.approx(2 * eps, rel=0.05)


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_layer_area_tanh_matches_profile_width(eps):
    pf = PhaseField(eps, 0.0, Profile("tanh"), FlatLevelSet(1.0))
    geom = geometry(build_uniform(RectangleSpec((0, 1), (0, 2), 40, 160)), 6)
    d = tanh_layer_threshold()
    width = 2 * eps * math.atanh(1 - 2 * d)
    assert layer_area(pf, geom, d) == pytest.approx(width, rel=0.05)


def test_divergence_theorem_flat_configuration():
    eps, delta = 0.2, 1e-3
    pf = PhaseField(eps, delta, Profile("tanh"), FlatLevelSet(1.0))
    geom = geometry(build_uniform(RectangleSpec((0, 1), (0, 2), 20, 40)), 10)
    volume = np.sum(geom.jw * pf.grad_phi(geom.x, geom.y)[..., 1])
    nodes, w = gauss_legendre_01(8)
    boundary = np.sum(w * (pf.phi(nodes, 2.0) - pf.phi(nodes, 0.0)))
    assert volume == pytest.approx(boundary, abs=1e-10)


def test_levelset_strings():
    assert isinstance(levelset_from_string("flat(1)"), FlatLevelSet)
    s = levelset_from_string("sine(0.1, 4, 0)")
    assert s.value(0.125, 0.0) == pytest.approx(0.1)
    e = levelset_from_string("expression(x^2 + y - 1)")
    assert e.value(1.0, 0.5) == pytest.approx(0.5)
    assert np.allclose(e.gradient(1.0, 0.5), [2.0, 1.0])
    with pytest.raises(Exception):
        levelset_from_string("sine(0.1, 4)")


@pytest.mark.parametrize("eps, delta", [(0.0, 0.0), (0.1, 0.5), (0.1, -0.1)])
def test_invalid_parameters(eps, delta):
    with pytest.raises(PhaseFieldError):
        PhaseField(eps, delta, Profile("tanh"), FlatLevelSet(0.0))
