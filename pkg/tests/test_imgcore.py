import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from conftest import strip_masks
from dseam.imgcore import (ImageError, MaskPair, PartitionError, box_filter, box_filter_adjoint, compose,
                           contour_vertices, demarcation_points, derive_valid_mask, fill_invalid, load_image,
                           region_partition, resize_mask, rgb_to_gray, save_image, sobel_edges, to_gray,
                           vertex_to_pixel)


def _png(path, arr, mode):
    Image.fromarray(np.asarray(arr, np.uint8), mode=mode).save(path)


# -- I/O ----------------------------------------------------------------------

def test_load_scales_by_255(tmp_path):
    _png(tmp_path / "w.png", [[255]], "L")
    _png(tmp_path / "k.png", [[0]], "L")
    assert load_image(tmp_path / "w.png")[0, 0, 0] == 1.0
    assert load_image(tmp_path / "k.png")[0, 0, 0] == 0.0
    _png(tmp_path / "q.png", [[0, 51], [102, 255]], "L")
    np.testing.assert_allclose(load_image(tmp_path / "q.png")[..., 0], [[0, 0.2], [0.4, 1.0]], atol=1e-15)


def test_load_keeps_rgb_channels(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(2, 2, 3) * 20
    _png(tmp_path / "c.png", arr, "RGB")
    img = load_image(tmp_path / "c.png")
    assert img.shape == (2, 2, 3)
    np.testing.assert_allclose(img * 255, arr)


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    Image.new("I;16", (2, 2)).save(tmp_path / "deep.png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "deep.png")


@pytest.mark.parametrize("value", [1.0, 0.5, 0.0])
def test_save_load_single_value(tmp_path, value):
    save_image(np.full((1, 1, 1), value), tmp_path / "v.png")
    assert abs(load_image(tmp_path / "v.png")[0, 0, 0] - value) <= 1 / 510


def test_save_load_random_roundtrip(tmp_path, rng):
    img = rng.uniform(0, 1, (8, 8, 3))
    save_image(img, tmp_path / "r.png")
    assert np.abs(load_image(tmp_path / "r.png") - img).max() <= 1 / 510


def test_save_clamps_out_of_range(tmp_path):
    save_image(np.array([[[-0.5], [1.7]]]), tmp_path / "c.png")
    np.testing.assert_array_equal(load_image(tmp_path / "c.png")[..., 0], [[0.0, 1.0]])


# -- gray, sobel, box -----------------------------------------------------------

@pytest.mark.parametrize("rgb,expected", [((1, 1, 1), 1.0), ((1, 0, 0), 0.299), ((0.5, 0.25, 0.75), 0.38175)])
def test_rgb_to_gray(rgb, expected):
    assert rgb_to_gray(np.array(rgb, float).reshape(1, 1, 3))[0, 0, 0] == pytest.approx(expected, abs=1e-15)


def test_rgb_to_gray_rejects_gray():
    with pytest.raises(ImageError):
        rgb_to_gray(np.zeros((2, 2, 1)))


def test_sobel_constant_is_zero():
    assert np.all(sobel_edges(np.full((5, 6), 0.3)) == 0)


def test_sobel_vertical_step():
    img = np.zeros((7, 8))
    img[:, 4:] = 1.0
    e = sobel_edges(img)[..., 0]
    assert e[3, 3] == pytest.approx(4.0)
    assert e[3, 4] == pytest.approx(4.0)
    assert e[3, 1] == 0.0 and e[3, 6] == 0.0


def test_sobel_small_image_error():
    with pytest.raises(ImageError):
        sobel_edges(np.zeros((2, 5)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 9), elements=st.floats(0, 1)))
def test_sobel_rotation_equivariance(img):
    rot = sobel_edges(np.rot90(img).copy())[..., 0]
    np.testing.assert_allclose(rot, np.rot90(sobel_edges(img)[..., 0]), atol=1e-12)
    assert np.all(sobel_edges(img) >= 0)


def test_box_filter_examples():
    np.testing.assert_allclose(box_filter(np.full((5, 5), 0.7), 3), 0.7, atol=1e-15)
    assert box_filter(np.arange(1.0, 10.0).reshape(3, 3), 3)[1, 1] == pytest.approx(5.0)


def _naive_box(img, m):
    r = m // 2
    h, w = img.shape[:2]
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    acc = acc + img[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)]
            out[y, x] = acc / (m * m)
    return out


@pytest.mark.parametrize("m", [3, 5, 9])
def test_box_filter_matches_naive(rng, m):
    img = rng.uniform(0, 1, (16, 16, 3))
    assert np.abs(box_filter(img, m) - _naive_box(img, m)).max() <= 1e-12


@pytest.mark.parametrize("m", [3, 9])
def test_box_filter_adjoint_is_transpose(rng, m):
    x = rng.standard_normal((12, 15, 2))
    y = rng.standard_normal((12, 15, 2))
    lhs = np.sum(box_filter(x, m) * y)
    rhs = np.sum(x * box_filter_adjoint(y, m))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("m", [2, 1, 11])
def test_box_filter_bad_window(m):
    with pytest.raises(ImageError):
        box_filter(np.zeros((9, 9)), m)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (7, 8), elements=st.floats(-2, 2)), st.floats(-3, 3))
def test_box_filter_linear(img, c):
    np.testing.assert_allclose(box_filter(c * img, 3), c * box_filter(img, 3), atol=1e-12)


# -- composition and masks -----------------------------------------------------

def test_compose_examples():
    a = np.array([[[0.2], [0.8]]]).reshape(2, 1, 1)
    b = np.array([[[0.6], [0.4]]]).reshape(2, 1, 1)
    out = compose(a, b, np.array([[1], [0]]), np.array([[0], [1]]))
    np.testing.assert_allclose(out[:, 0, 0], [0.2, 0.4])
    zero = compose(a, b, np.zeros((2, 1)), np.zeros((2, 1)))
    assert np.all(zero == 0)


def test_compose_a_only(rng):
    a = rng.uniform(size=(4, 4, 3))
    b = rng.uniform(size=(4, 4, 3))
    va = np.zeros((4, 4), bool)
    va[:, :3] = True
    out = compose(a, b, va, np.zeros((4, 4)))
    np.testing.assert_array_equal(out[va], a[va])
    assert np.all(out[~va] == 0)


def test_compose_shape_mismatch():
    with pytest.raises(ImageError):
        compose(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)), np.ones((2, 2)), np.zeros((2, 2)))


def test_derive_valid_mask_examples():
    assert not derive_valid_mask(np.zeros((6, 6, 3))).any()
    img = np.zeros((6, 8, 1))
    img[:, 4:] = 0.5
    expected = np.zeros((6, 8), bool)
    expected[:, 4:] = True
    np.testing.assert_array_equal(derive_valid_mask(img), expected)
    pin = np.full((7, 7, 3), 0.6)
    pin[3, 3] = 0.0
    assert derive_valid_mask(pin).all()


def test_fill_invalid_copies_nearest(rng):
    img = rng.uniform(size=(5, 6, 1))
    valid = np.zeros((5, 6), bool)
    valid[:, :3] = True
    out = fill_invalid(img, valid)
    np.testing.assert_array_equal(out[valid], img[valid])
    np.testing.assert_array_equal(out[:, 5], img[:, 2])


def test_mask_pair_check():
    va, vb = strip_masks(4, 6, 4, 2)
    ma = np.zeros((4, 6), bool)
    ma[:, :3] = True
    MaskPair(ma, (va | vb) & ~ma).check(va, vb)
    with pytest.raises(ValueError):
        MaskPair(ma, np.ones((4, 6), bool)).check(va, vb)
    with pytest.raises(ValueError):
        MaskPair(ma, np.zeros((4, 6), bool)).check(va, vb)


# -- partition geometry --------------------------------------------------------

def test_partition_full_overlap_has_no_endpoints():
    full = np.ones((6, 6), bool)
    with pytest.raises(PartitionError):
        region_partition(full, full)
    part = region_partition(full, full, endpoints=False)
    assert part.n11 == part.n22 == 0 and part.n12 == 36


def test_partition_thirds():
    va, vb = strip_masks(9, 9, 6, 3)
    part = region_partition(va, vb)
    np.testing.assert_array_equal(part.r12.any(axis=0), [False] * 3 + [True] * 3 + [False] * 3)
    (y1, x1), (y2, x2) = part.q1, part.q2
    assert (y1, y2) == (0, 9)
    assert 3 <= x1 <= 6 and 3 <= x2 <= 6
    for q in (part.q1, part.q2):
        assert contour_vertices(va)[q] and contour_vertices(vb)[q]
        vertex_to_pixel(q, part.r12)


def test_partition_errors():
    va, vb = strip_masks(5, 8, 3, 5)
    with pytest.raises(PartitionError):
        region_partition(va, vb)
    with pytest.raises(PartitionError):
        region_partition(np.zeros((5, 8), bool), vb)


def test_demarcation_on_corner_overlap():
    va = np.zeros((10, 10), bool)
    va[:6, :6] = True
    vb = np.zeros((10, 10), bool)
    vb[3:, 3:] = True
    q1, q2 = demarcation_points(va, vb)
    assert {q1, q2} == {(3, 6), (6, 3)}


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 12), st.integers(6, 16), st.data())
def test_partition_identity(h, w, data):
    va = data.draw(arrays(bool, (h, w)))
    vb = data.draw(arrays(bool, (h, w)))
    if not (va & vb).any():
        return
    part = region_partition(va, vb, endpoints=False)
    assert part.n11 + part.n22 + part.n12 == int((va | vb).sum())
    assert not (part.r11 & part.r22).any() and not (part.r11 & part.r12).any()
    assert not (part.r22 & part.r12).any()
    np.testing.assert_array_equal(part.r11 | part.r22 | part.r12, va | vb)


def test_resize_mask_nearest():
    m = np.zeros((4, 4), bool)
    m[:, :2] = True
    up = resize_mask(m, (8, 8))
    assert up[:, :4].all() and not up[:, 4:].any()


def test_to_gray_planes(rng):
    img = rng.uniform(size=(3, 4, 3))
    np.testing.assert_allclose(to_gray(img), rgb_to_gray(img)[..., 0])
    assert to_gray(img[..., :1]).shape == (3, 4)


def test_sobel_matches_kernel_correlation(rng):
    from scipy import ndimage

    from dseam.imgcore import SOBEL_X, SOBEL_Y
    img = rng.uniform(size=(9, 11))
    ref = np.hypot(ndimage.correlate(img, SOBEL_X, mode="nearest"), ndimage.correlate(img, SOBEL_Y, mode="nearest"))
    np.testing.assert_allclose(sobel_edges(img)[..., 0], ref, atol=1e-13)
