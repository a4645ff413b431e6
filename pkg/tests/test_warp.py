import numpy as np
import pytest

from do3d.analysis import u_s_simplified
from do3d.camera import EulerPose, Intrinsics, PoseSE3, backproject, invert, pose_from_euler, \
    project
from do3d.exceptions import ContractError
from do3d.warp import CorrespondenceMap, forward_splat, forward_splat_mask, inverse_warp, \
    project_correspondence
from do3d.fileio import read_pfm

K = Intrinsics(100.0, 100.0, 50.0, 40.0)


def test_identity_warp(rng):
    depth = rng.uniform(2, 9, (80, 100))
    corr = project_correspondence(depth, K, PoseSE3.identity())
    v, u = np.mgrid[0:80, 0:100]
    np.testing.assert_allclose(corr.u, u, atol=1e-12)
    np.testing.assert_allclose(corr.v, v, atol=1e-12)
    np.testing.assert_allclose(corr.d, depth)
    img = rng.random((80, 100, 3))
    # exact: integer coordinates recovered bit-for-bit after rounding noise
    corr.u, corr.v = np.round(corr.u), np.round(corr.v)
    out, valid = inverse_warp(img, corr)
    assert valid.all()
    np.testing.assert_array_equal(out, img)


def test_z_translation_example():
    depth = np.full((80, 100), 10.0)
    corr = project_correspondence(depth, K, PoseSE3.from_translation([0, 0, -1.0]))
    assert corr.u[40, 70] == pytest.approx(10 * 20 / 9 + 50, abs=1e-12)


def test_matches_simplified_everywhere(rng):
    depth = rng.uniform(2, 30, (80, 100))
    t3 = -0.7
    corr = project_correspondence(depth, K, PoseSE3.from_translation([0, 0, t3]))
    u = np.arange(100.0)[None, :].repeat(80, 0)
    np.testing.assert_allclose(corr.u, u_s_simplified(K, u, depth, t3), atol=1e-9, rtol=0)


def test_co_moving_cancels():
    depth = np.full((80, 100), 7.0)
    motion = np.zeros((80, 100, 3))
    motion[..., 2] = 1.0
    corr = project_correspondence(depth, K, PoseSE3.from_translation([0, 0, -1.0]), motion)
    v, u = np.mgrid[0:80, 0:100]
    np.testing.assert_allclose(corr.u, u, atol=1e-12)
    np.testing.assert_allclose(corr.v, v, atol=1e-12)


def test_motion_shape_mismatch():
    with pytest.raises(ContractError):
        project_correspondence(np.ones((4, 4)), K, PoseSE3.identity(), np.zeros((3, 4, 3)))


def test_matches_pointwise_pipeline(rng):
    depth = rng.uniform(3, 10, (8, 9))
    T = pose_from_euler(EulerPose(0.02, -0.01, 0.03, (0.1, -0.2, -0.5)))
    corr = project_correspondence(depth, K, T)
    for v in range(8):
        for u in range(9):
            X = T.R @ backproject(K, u, v, depth[v, u]) + T.t
            us, vs, ds = project(K, X)
            assert corr.u[v, u] == pytest.approx(us, abs=1e-12)
            assert corr.d[v, u] == pytest.approx(ds, abs=1e-12)


def test_ramp_shift_by_one_column():
    ramp = np.tile(np.arange(10.0)[None, :, None] / 10, (4, 1, 3))
    v, u = np.mgrid[0:4, 0:10].astype(float)
    corr = CorrespondenceMap(u + 1, v, np.ones((4, 10)), np.ones((4, 10), bool))
    out, valid = inverse_warp(ramp, corr)
    np.testing.assert_allclose(out[:, :9], ramp[:, 1:])
    assert not valid[:, 9].any()
    np.testing.assert_array_equal(out[:, 9], ramp[:, 9])


def test_behind_camera_is_invalid_not_error():
    depth = np.full((80, 100), 1.0)
    corr = project_correspondence(depth, K, PoseSE3.from_translation([0, 0, -2.0]))
    assert not corr.valid.any()
    img = np.zeros((80, 100, 3))
    out, valid = inverse_warp(img, corr)
    assert not valid.any() and np.isfinite(out).all()


def test_flip_equivariance(rng):
    h, w = 30, 40
    Kc = Intrinsics(60.0, 60.0, 17.3, 14.0)
    Kf = Intrinsics(60.0, 60.0, w - 1 - 17.3, 14.0)
    depth = rng.uniform(3, 8, (h, w))
    img = rng.random((h, w, 3))
    t = np.array([0.2, -0.1, -0.4])
    corr = project_correspondence(depth, Kc, PoseSE3.from_translation(t))
    tf = t * [-1, 1, 1]
    corr_f = project_correspondence(depth[:, ::-1], Kf, PoseSE3.from_translation(tf))
    np.testing.assert_allclose(corr_f.u[:, ::-1], w - 1 - corr.u, atol=1e-10)
    np.testing.assert_allclose(corr_f.v[:, ::-1], corr.v, atol=1e-10)
    a, va = inverse_warp(img, corr)
    b, vb = inverse_warp(img[:, ::-1], corr_f)
    np.testing.assert_array_equal(va, vb[:, ::-1])
    np.testing.assert_allclose(a[va], b[:, ::-1][va], atol=1e-12)


def test_to_pfm_marks_invalid():
    corr = CorrespondenceMap(np.array([[1.0, np.nan]]), np.array([[2.0, np.nan]]),
                             np.array([[3.0, np.nan]]), np.array([[True, False]]))
    f = read_pfm(corr.to_pfm())
    np.testing.assert_array_equal(f[0, 0], [1, 2, 3])
    np.testing.assert_array_equal(f[0, 1], [-1, -1, -1])


def _brute_splat(depth, Kc, T):
    h, w = depth.shape
    z = np.full((h, w), np.inf)
    win = np.full((h, w), -1)
    for i in range(h):
        for j in range(w):
            X = T.R @ backproject(Kc, j, i, depth[i, j]) + T.t
            if X[2] <= 1e-6:
                continue
            u, v, d = project(Kc, X)
            ui, vi = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
            if 0 <= ui < w and 0 <= vi < h and d < z[vi, ui]:
                z[vi, ui] = d
                win[vi, ui] = i * w + j
    return win >= 0, z, win


def test_splat_identity_all_ones():
    assert forward_splat_mask(np.full((6, 7), 3.0), Intrinsics(5, 5, 3, 2.5), PoseSE3.identity()).all()


def test_splat_out_of_frustum_all_zeros():
    m = forward_splat_mask(np.full((6, 7), 3.0), Intrinsics(5, 5, 3, 2.5),
                           PoseSE3.from_translation([100.0, 0, 0]))
    assert not m.any()


def test_splat_matches_brute_force(rng):
    Kc = Intrinsics(20.0, 20.0, 9.5, 7.5)
    depth = rng.uniform(2, 4, (16, 20))
    T = pose_from_euler(EulerPose(0.05, 0.0, 0.02, (0.3, 0.1, 0.4)))
    hit, z, win = forward_splat(depth, Kc, T)
    bh, bz, bw = _brute_splat(depth, Kc, T)
    np.testing.assert_array_equal(hit, bh)
    np.testing.assert_allclose(z[hit], bz[bh], atol=1e-12)
    np.testing.assert_array_equal(win, bw)


def test_splat_plane_zoom_out_count():
    Kc = Intrinsics(20.0, 20.0, 9.5, 7.5)
    depth = np.full((16, 20), 5.0)
    T = PoseSE3.from_translation([0, 0, 0.5])
    hit, _, _ = forward_splat(depth, Kc, T)
    bh, _, _ = _brute_splat(depth, Kc, T)
    assert hit.sum() == bh.sum()
    assert hit.sum() < hit.size
