import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from papc.camera import CameraIntrinsics, PixelPoint
from papc.roi import (RoiWindow, build_roi_windows, crop, crop_resize_stack, decode_stack, encode_stack,
                      resize_area)

pt = st.builds(PixelPoint, st.floats(0, 128), st.floats(0, 64))


def test_zero_displacement_window():
    w = build_roi_windows([PixelPoint(10.0, 10.0), PixelPoint(50.0, 30.0), PixelPoint(50.0, 30.0)])
    assert w[1].size == (8.0, 8.0)


def test_worked_example():
    w = build_roi_windows([PixelPoint(64.0, 60.0), PixelPoint(64.0, 20.0)], margin=8)
    assert w[0].center == (64.0, 40.0)
    assert w[0].size == (8.0, 48.0)
    assert w[1].size == (32, 32) and w[1].is_fovea


def test_four_points_one_fovea():
    pts = [PixelPoint(60.0, 62.0), PixelPoint(62.0, 45.0), PixelPoint(66.0, 36.0), PixelPoint(70.0, 31.0)]
    w = build_roi_windows(pts)
    assert len(w) == 4
    assert sum(x.size == (32, 32) for x in w) == 1 and w[-1].is_fovea
    assert w[-1].center == (70.0, 31.0)


def test_degenerate_points():
    w = build_roi_windows([PixelPoint(5.0, 5.0)] * 4)
    assert w.degenerate and len(w) == 1
    with pytest.raises(ValueError):
        build_roi_windows([PixelPoint(1.0, 1.0)])


@given(st.lists(pt, min_size=2, max_size=6))
def test_windows_contain_point_and_fovea(points):
    w = build_roi_windows(points)
    if w.degenerate:
        return
    f = np.array([points[-1].u, points[-1].v])
    for win, p in zip(w.windows[:-1], points[:-1]):
        half = np.array(win.size) / 2
        c = np.array(win.center)
        for q in (np.array([p.u, p.v]), f):
            assert np.all(np.abs(q - c) <= half + 1e-9)


def test_bottom_centre_conversion():
    intr = CameraIntrinsics()
    w = build_roi_windows([PixelPoint(0.0, 0.0), PixelPoint(10.0, 32.0)], intr=intr)
    assert w[-1].center == (54.0, 32.0)


def test_fovea_identity_crop():
    img = np.random.default_rng(0).integers(0, 256, (64, 128, 3)).astype(np.uint8)
    win = RoiWindow((50.0, 30.0), (32, 32), True)
    tile = crop_resize_stack(img, [win])[0]
    c0, r0, _, _ = win.bounds()
    assert np.array_equal(tile, (img[r0:r0 + 32, c0:c0 + 32] / 255.0).astype(np.float32))


def test_uniform_window_preserved():
    img = np.full((64, 128, 3), 77, np.uint8)
    tile = crop_resize_stack(img, [RoiWindow((64.0, 32.0), (64, 64))])[0]
    assert np.allclose(tile, 77 / 255.0, atol=1e-7)


def test_fine_checkerboard_averages_to_mid_gray():
    yy, xx = np.mgrid[:64, :64]
    board = (((yy + xx) % 2) * 255).astype(np.uint8)
    img = np.repeat(board[:, :, None], 3, axis=2)
    tile = resize_area(img.astype(float)) / 255.0
    assert np.allclose(tile, 0.5, atol=1e-12)


def test_dot_attenuation():
    img = np.zeros((64, 128, 3), np.uint8)
    img[30, 60] = 255
    fovea = crop_resize_stack(img, [RoiWindow((60.0, 30.0), (32, 32), True)])[0]
    assert fovea.max() == 1.0
    big = crop_resize_stack(img, [RoiWindow((60.0, 30.0), (64, 64))])[0]
    assert big.max() <= 0.25 + 1e-7


def test_partial_and_outside_windows():
    img = np.full((64, 128, 3), 255, np.uint8)
    patch, outside = crop(img, RoiWindow((0.0, 0.0), (32, 32)))
    assert not outside and patch[:16, :16].sum() == 0 and np.all(patch[16:, 16:] == 255)
    patch, outside = crop(img, RoiWindow((500.0, 500.0), (32, 32)))
    assert outside and patch.sum() == 0


@given(st.integers(1, 6))
def test_stack_shape_and_range(n):
    img = np.random.default_rng(n).integers(0, 256, (64, 128, 3)).astype(np.uint8)
    wins = [RoiWindow((10.0 * i, 5.0 * i), (8 + 10 * i, 40)) for i in range(n)]
    s = crop_resize_stack(img, wins)
    assert s.shape == (n, 32, 32, 3) and s.dtype == np.float32
    assert s.min() >= 0.0 and s.max() <= 1.0


def test_default_stack_shape():
    img = np.zeros((64, 128, 3), np.uint8)
    pts = [PixelPoint(60.0, 62.0), PixelPoint(62.0, 45.0), PixelPoint(66.0, 36.0), PixelPoint(70.0, 31.0)]
    assert crop_resize_stack(img, build_roi_windows(pts)).shape == (4, 32, 32, 3)


@given(arrays(np.float32, (2, 4, 4, 3), elements=st.floats(0, 1, width=32)))
def test_stack_serialisation_round_trip(stack):
    buf = encode_stack(stack)
    assert buf[:8] == np.array([2, 4, 4, 3], "<u2").tobytes()
    assert np.array_equal(decode_stack(buf), stack)


def test_stack_decode_errors():
    with pytest.raises(ValueError):
        decode_stack(b"\x01\x00")
    with pytest.raises(ValueError):
        decode_stack(encode_stack(np.zeros((1, 2, 2, 3), np.float32))[:-1])
