import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from tetherguide.control import GuidanceRefs
from tetherguide.errors import DegenerateTangent, EmptyTrajectory, InsufficientRuns, OutOfRange
from tetherguide.model import state_vector
from tetherguide.params import CableParams, GuidanceParams
from tetherguide.path import (
    ForceProfile, Maneuver, ParametricPath, desired_force, error_stats, maneuver_controller, maneuver_refs,
    path_derivative, path_error, path_error_curve, path_eval, path_tangent, project,
)

CAB = CableParams()


def test_straight_two_waypoints():
    p = ParametricPath([[-2, -0.5, 0], [2, 0, 0]])
    np.testing.assert_array_equal(path_eval(p, 0.0), [-2, -0.5, 0])
    np.testing.assert_array_equal(path_eval(p, 1.0), [2, 0, 0])
    np.testing.assert_allclose(path_eval(p, 0.5), [0, -0.25, 0], atol=1e-15)


def test_tangents_of_lines(straight_x):
    for s in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(path_tangent(straight_x, s), [1, 0, 0])
    np.testing.assert_allclose(path_tangent(ParametricPath([[0, 0, 0], [0, 1, 0]]), 0.4), [0, 1, 0])


def test_arc_tangent_matches_finite_difference():
    a = np.linspace(0, math.pi / 2, 9)
    p = ParametricPath(np.column_stack([np.cos(a), np.sin(a), np.zeros(9)]))
    s = project(p, [math.cos(math.pi / 4), math.sin(math.pi / 4), 0])
    h = 1e-6
    fd = (path_eval(p, s + h) - path_eval(p, s - h)) / (2 * h)
    np.testing.assert_allclose(path_tangent(p, s), fd / np.linalg.norm(fd), atol=1e-6)
    np.testing.assert_allclose(path_tangent(p, s)[:2], [-math.sqrt(0.5), math.sqrt(0.5)], atol=1e-3)


def test_out_of_range():
    p = ParametricPath([[0, 0, 0], [1, 0, 0]])
    with pytest.raises(OutOfRange):
        path_eval(p, 1.1)
    with pytest.raises(OutOfRange):
        path_derivative(p, -0.1)


def test_path_validation():
    with pytest.raises(ValueError):
        ParametricPath([[0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        ParametricPath([[0, 0, 0], [1, 0, 0.2]])
    with pytest.raises(ValueError):   # figure-of-eight crosses itself
        ParametricPath([[0, 0, 0], [1, 1, 0], [2, 0, 0], [1, -1, 0], [0.5, 1, 0]])


def test_path_arrays_are_read_only(detour_path):
    with pytest.raises(ValueError):
        detour_path.coef[0, 0, 0] = 1.0


def test_spline_matches_scipy(detour_path):
    ref = CubicSpline(detour_path.knots, detour_path.waypoints, bc_type="natural")
    for s in np.linspace(0, 1, 37):
        np.testing.assert_allclose(path_eval(detour_path, s), ref(s), atol=1e-14)
        np.testing.assert_allclose(path_derivative(detour_path, s), ref(s, 1), atol=1e-12)


def test_profile_shape():
    f = ForceProfile()
    assert f(0.0) == pytest.approx(0.5)
    assert f(0.05) == pytest.approx(1.0)
    assert f(0.5) == pytest.approx(1.5)
    assert f(0.9) == pytest.approx(0.75)
    assert f(1.0) == 0.0
    assert all(f(s) > 0 for s in np.linspace(0, 0.999, 200))


def test_desired_force(straight_x):
    m = Maneuver(straight_x)
    np.testing.assert_allclose(desired_force(m, 1.0), [0, 0, 1])
    np.testing.assert_allclose(desired_force(m, 0.5), [1.5, 0, 1])
    np.testing.assert_allclose(desired_force(m, 0.0), [0.5, 0, 1])


def test_project_examples(straight_x, detour_path):
    assert project(straight_x, [0, 0.3, 0]) == pytest.approx(0.5, abs=1e-6)
    assert project(straight_x, [5, 0, 0]) == 1.0
    assert project(straight_x, [-5, 1, 0]) == 0.0
    # frozen values on the three-waypoint path
    assert project(detour_path, [0, 0, 0]) == pytest.approx(0.5043113753949067, abs=1e-6)
    assert project(detour_path, [1, 1, 0]) == pytest.approx(0.7277458858747038, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-1.5, 1.5))
def test_project_matches_brute_force(x, y):
    p = ParametricPath([[-2, -0.5, 0], [0, 0.5, 0], [2, 0, 0]])
    dense = np.linspace(0, 1, 200_001)
    ref = CubicSpline(p.knots, p.waypoints, bc_type="natural")(dense)
    q = np.array([x, y, 0.0])
    d2 = np.sum((ref - q) ** 2, axis=1)
    s_star = project(p, q)
    # compare distances, not parameters: ties between far-apart minima are legal
    assert np.sum((path_eval(p, s_star) - q) ** 2) <= d2.min() + 1e-10


def test_project_ignores_everything_but_position(detour_path):
    m = Maneuver(detour_path)
    x1 = state_vector([0.3, 0.4, 0], [0, 0, 0], [0, 0, 1], [0, 0, 0])
    x2 = state_vector([0.3, 0.4, 0], [1, 2, 0], [3, 1, 2], [1, 1, 1])
    _, s1 = maneuver_controller(x1, m, GuidanceParams(), CAB)
    _, s2 = maneuver_controller(x2, m, GuidanceParams(), CAB)
    assert s1 == s2


def test_maneuver_controller_terminal_equilibrium(detour_path):
    m = Maneuver(detour_path)
    refs = maneuver_refs(m, 1.0, CAB)
    x = np.concatenate([refs.p_H_ref, np.zeros(3), refs.p_R_ref, np.zeros(3)])
    u, s = maneuver_controller(x, m, GuidanceParams(), CAB)
    assert s == 1.0
    np.testing.assert_allclose(u, [0, 0, 1], atol=1e-12)


def test_maneuver_controller_on_path_is_feedforward(detour_path):
    m = Maneuver(detour_path)
    s0 = 0.37
    refs = maneuver_refs(m, s0, CAB)
    x = np.concatenate([refs.p_H_ref, np.zeros(3), refs.p_R_ref, np.zeros(3)])
    u, s = maneuver_controller(x, m, GuidanceParams(), CAB)
    assert s == pytest.approx(s0, abs=1e-6)
    np.testing.assert_allclose(u, desired_force(m, s), atol=1e-5)


def test_path_error_examples(straight_x):
    xs = np.linspace(-2, 2, 4001)
    on = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    np.testing.assert_allclose(path_error_curve(on, straight_x, np.linspace(0, 1, 11)), 0.0, atol=1e-15)
    off = on + [0, 0.1, 0]
    np.testing.assert_allclose(path_error_curve(off, straight_x, np.linspace(0.1, 0.9, 9)), 0.1)
    assert path_error(off - [0, 0.2, 0], straight_x, 0.5) == pytest.approx(-0.1)
    with pytest.raises(EmptyTrajectory):
        path_error(np.zeros((0, 3)), straight_x, 0.5)


def test_error_stats():
    c = np.linspace(0, 1, 5)
    r = error_stats([c, c])
    np.testing.assert_allclose(r.mean, c)
    np.testing.assert_allclose(r.std, 0.0)
    r = error_stats([np.full(3, 0.1), np.full(3, -0.1)])
    np.testing.assert_allclose(r.mean, 0.0, atol=1e-17)
    np.testing.assert_allclose(r.std, math.sqrt(0.02))
    with pytest.raises(InsufficientRuns):
        error_stats([c])


def test_degenerate_tangent_is_reported(monkeypatch, straight_x):
    from tetherguide import path as path_mod

    monkeypatch.setattr(path_mod, "_deriv", lambda coef, knots, s: np.zeros(3))
    with pytest.raises(DegenerateTangent):
        path_tangent(straight_x, 0.5)


def test_maneuver_refs_reference_consistency(detour_path):
    refs = maneuver_refs(Maneuver(detour_path), 0.5, CAB)
    assert isinstance(refs, GuidanceRefs)
    assert refs.p_H_ref[2] == 0.0
    np.testing.assert_allclose(np.linalg.norm(refs.p_R_ref - refs.p_H_ref),
                               CAB.rest_length + np.linalg.norm(refs.f_c_ref) / CAB.stiffness)
