import numpy as np
import pytest
from hypothesis import given, strategies as st

from do3d.core import BBox, bbox_from_mask, bilinear_sample, check_color_image, check_mask, \
    check_same_hw, check_scalar_field, pixel_grid
from do3d.exceptions import ContractError


def test_bilinear_center_of_2x2():
    f = np.array([[0.0, 1.0], [2.0, 3.0]])
    val, ok = bilinear_sample(f, 0.5, 0.5)
    assert val == 1.5 and ok


def test_bilinear_integer_point():
    f = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert bilinear_sample(f, 1, 0) == (1.0, True)


def test_bilinear_out_of_range_clamps():
    f = np.array([[0.0, 1.0], [2.0, 3.0]])
    val, ok = bilinear_sample(f, -1, 0)
    assert val == 0.0 and not ok


def test_bilinear_nan_is_invalid():
    f = np.arange(6.0).reshape(2, 3)
    val, ok = bilinear_sample(f, np.array([np.nan]), np.array([0.0]))
    assert not ok[0] and np.isfinite(val[0])


def test_bilinear_edges_are_valid():
    f = np.arange(12.0).reshape(3, 4)
    val, ok = bilinear_sample(f, np.array([3.0, 0.0]), np.array([2.0, 0.0]))
    assert ok.all()
    np.testing.assert_array_equal(val, [11.0, 0.0])


def test_bilinear_color_keeps_channels(rng):
    img = rng.random((5, 6, 3))
    val, ok = bilinear_sample(img, 2.0, 3.0)
    np.testing.assert_array_equal(val, img[3, 2])
    assert ok


@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2 ** 31 - 1))
def test_integer_coordinates_reproduce_values(h, w, seed):
    f = np.random.default_rng(seed).normal(size=(h, w))
    u, v = pixel_grid(h, w)
    val, ok = bilinear_sample(f, u, v)
    assert ok.all()
    np.testing.assert_array_equal(val, f)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2 ** 31 - 1))
def test_piecewise_linear_in_x(fy, t, seed):
    # three collinear points inside one cell
    f = np.random.default_rng(seed).normal(size=(4, 5))
    y = 1 + fy
    x0, x1 = 2.0, 3.0
    xm = x0 + t * (x1 - x0)
    a, _ = bilinear_sample(f, x0, y)
    b, _ = bilinear_sample(f, x1, y)
    m, _ = bilinear_sample(f, xm, y)
    assert m == pytest.approx((1 - t) * a + t * b, abs=1e-12)


def test_bilinear_matches_brute_force(rng):
    f = rng.random((6, 7))
    xs = rng.uniform(0, 6, 50)
    ys = rng.uniform(0, 5, 50)
    val, _ = bilinear_sample(f, xs, ys)
    for x, y, got in zip(xs, ys, val):
        i, j = int(np.floor(y)), int(np.floor(x))
        i1, j1 = min(i + 1, 5), min(j + 1, 6)
        a, b = x - j, y - i
        want = (f[i, j] * (1 - a) * (1 - b) + f[i, j1] * a * (1 - b) + f[i1, j] * (1 - a) * b
                + f[i1, j1] * a * b)
        assert got == pytest.approx(want, abs=1e-14)


def test_bbox_clamp_and_mask():
    b = BBox(-3, 2, 10, 20).clamp(8, 6)
    assert b == BBox(0, 2, 5, 7)
    m = b.to_mask(8, 6)
    assert m.sum() == 6 * 6
    assert bbox_from_mask(m) == b


def test_bbox_rejects_inverted():
    with pytest.raises(ContractError):
        BBox(5, 0, 4, 1)


def test_bbox_from_empty_mask():
    assert bbox_from_mask(np.zeros((3, 3), bool)) is None


def test_validators():
    with pytest.raises(ContractError):
        check_scalar_field(np.zeros((2, 2, 1)))
    with pytest.raises(ContractError):
        check_scalar_field(np.array([[np.inf, 0.0]]))
    with pytest.raises(ContractError):
        check_color_image(np.full((2, 2, 3), 1.5))
    with pytest.raises(ContractError):
        check_mask(np.array([[0, 2]]))
    assert check_mask(np.array([[0, 1]])).dtype == bool
    with pytest.raises(ContractError):
        check_mask(np.array([[0.0, 1.2]]), soft=True)
    with pytest.raises(ContractError):
        check_same_hw(np.zeros((2, 3)), np.zeros((3, 2)))
