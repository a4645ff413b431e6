import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from do3d.camera import EulerPose, Intrinsics, PoseSE3, backproject, backproject_grid, compose, \
    invert, pose_from_euler, project, project_points, rotation_from_euler, transform
from do3d.exceptions import BehindCameraError, DomainError

angle = st.floats(-np.pi, np.pi)
K0 = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0)


def test_zero_euler_is_identity():
    p = pose_from_euler(EulerPose())
    np.testing.assert_array_equal(p.R, np.eye(3))
    np.testing.assert_array_equal(p.t, np.zeros(3))


def test_yaw_quarter_turn_maps_x_to_y():
    R = rotation_from_euler(0.0, 0.0, np.pi / 2)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(angle, angle, angle)
def test_rotation_order_matches_scipy(pitch, roll, yaw):
    # Rz(yaw) Ry(pitch) Rx(roll) is the intrinsic ZYX sequence
    want = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
    np.testing.assert_allclose(rotation_from_euler(pitch, roll, yaw), want, atol=1e-12)


@given(angle, angle, angle, st.tuples(*[st.floats(-5, 5)] * 3))
def test_compose_with_inverse_is_identity(p, r, y, t):
    pose = pose_from_euler(EulerPose(p, r, y, t))
    e = compose(pose, invert(pose))
    np.testing.assert_allclose(e.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(e.t, 0, atol=1e-12)


def test_invert_translation_and_identity():
    p = PoseSE3.from_translation([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(invert(p).t, [-1.0, 2.0, -3.0])
    i = invert(PoseSE3.identity())
    np.testing.assert_array_equal(i.R, np.eye(3))


def test_compose_z_translations():
    c = compose(PoseSE3.from_translation([0, 0, 2.0]), PoseSE3.from_translation([0, 0, -0.5]))
    np.testing.assert_allclose(c.t, [0, 0, 1.5])


def test_compose_order():
    a = pose_from_euler(EulerPose(yaw=0.3))
    b = PoseSE3.from_translation([1.0, 0.0, 0.0])
    X = np.array([0.2, 0.4, 3.0])
    np.testing.assert_allclose(transform(compose(a, b), X), transform(a, transform(b, X)),
                               atol=1e-14)


@given(st.lists(st.tuples(angle, angle, angle), min_size=3, max_size=3))
def test_compose_associative(angles):
    a, b, c = [pose_from_euler(EulerPose(*x, translation=(x[0], 1.0, x[2]))) for x in angles]
    l, r = compose(compose(a, b), c), compose(a, compose(b, c))
    np.testing.assert_allclose(l.R, r.R, atol=1e-12)
    np.testing.assert_allclose(l.t, r.t, atol=1e-12)


def test_backproject_examples():
    np.testing.assert_allclose(backproject(K0, 50, 50, 5.0), [0, 0, 5.0])
    X = backproject(K0, 70, 50, 10.0)
    assert X[0] == pytest.approx(2.0)
    with pytest.raises(DomainError):
        backproject(K0, 0, 0, 0.0)


def test_project_examples():
    u, v, d = project(K0, [2.0, 0.0, 10.0])
    assert (u, v, d) == (pytest.approx(70.0), pytest.approx(50.0), 10.0)
    assert project(K0, [0, 0, 3.0])[:2] == (50.0, 50.0)
    with pytest.raises(BehindCameraError):
        project(K0, [0.0, 0.0, 0.0])


@given(st.floats(0.05, 500.0), st.integers(0, 99), st.integers(0, 99))
def test_project_backproject_roundtrip(d, u, v):
    uu, vv, dd = project(K0, backproject(K0, u, v, d))
    assert abs(uu - u) < 1e-12 * max(1, u) * 10 and abs(vv - v) < 1e-10 and dd == pytest.approx(d)


@given(angle, angle, angle, st.integers(0, 2 ** 31 - 1))
def test_transform_is_isometry(p, r, y, seed):
    pts = np.random.default_rng(seed).normal(size=(2, 3)) * 10
    pose = pose_from_euler(EulerPose(p, r, y, (1.0, 2.0, 3.0)))
    a, b = transform(pose, pts)
    assert np.linalg.norm(a - b) == pytest.approx(np.linalg.norm(pts[0] - pts[1]), abs=1e-10)
    rot = pose_from_euler(EulerPose(p, r, y))
    assert np.linalg.norm(transform(rot, pts[0])) == pytest.approx(np.linalg.norm(pts[0]),
                                                                   abs=1e-12)


def test_project_points_flags_behind_camera():
    X = np.array([[0, 0, 1.0], [0, 0, -1.0], [0, 0, 1e-7]])
    u, v, z, ok = project_points(K0, X)
    assert ok.tolist() == [True, False, False]
    assert np.isnan(u[1]) and np.isnan(v[2])


def test_backproject_grid_matches_pointwise(rng):
    depth = rng.uniform(1, 5, (4, 6))
    P = backproject_grid(K0, depth)
    for v in range(4):
        for u in range(6):
            np.testing.assert_allclose(P[v, u], backproject(K0, u, v, depth[v, u]))


def test_euler_vector_and_dict_roundtrip():
    e = EulerPose(0.1, -0.2, 0.3, (1.0, 2.0, 3.0))
    assert EulerPose.from_vector(e.as_vector()) == e
    assert EulerPose.from_dict(e.to_dict()) == e
    assert Intrinsics.from_dict(K0.to_dict()) == K0
