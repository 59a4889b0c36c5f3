import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from papc.camera import CameraIntrinsics, CameraMount, CameraPose, project_to_pixel, to_image_frame
from papc.dynamics import Obstacle, VehicleState, oval_track, straight_track
from papc.render import (Image, Palette, PPMError, Scene, decode_ppm, encode_ppm, read_image, render,
                         write_image)

INTR = CameraIntrinsics()
MOUNT = CameraMount()


def test_empty_scene_is_background():
    img = render(Scene(None), CameraPose((0, 0, 0.3), 0, 0, 0), INTR)
    assert img.data.shape == (64, 128, 3)
    assert np.all(img.data == Palette().background)


def test_road_below_horizon_only():
    img = render(Scene(straight_track()), MOUNT.pose_of(VehicleState(10.0, 0.0, 0.0, 0.0)), INTR).data
    road = np.all(img == Palette().road, axis=-1)
    assert road[-1, 64] and not road[0].any()
    # symmetric about the image centre column on a straight road
    assert np.array_equal(road[:, :64], road[:, 64:][:, ::-1])


def test_obstacle_centre_projection():
    ob = Obstacle((15.0, 0.0), (0.3, 0.3), 0.6, (200, 30, 30))
    scene = Scene(straight_track(), [ob])
    pose = MOUNT.pose_of(VehicleState(10.0, 0.0, 0.0, 0.0))
    img = render(scene, pose, INTR).data
    mask = np.all(img == ob.color, axis=-1)
    assert mask.any()
    p = project_to_pixel((15.0, 0.0, 0.3), pose, INTR)
    col, row = to_image_frame([p.u, p.v], INTR)
    r, c = int(row), int(col)
    assert mask[max(r - 2, 0):r + 3, max(c - 2, 0):c + 3].any()
    rows, cols = np.nonzero(mask)
    assert rows.min() - 2 <= row <= rows.max() + 2 and cols.min() - 2 <= col <= cols.max() + 2


def test_render_deterministic():
    scene = Scene(oval_track(), [Obstacle((6.0, 0.2), (0.2, 0.2), 0.5, (30, 60, 210))])
    pose = MOUNT.pose_of(VehicleState(1.0, 0.1, 0.05, 0.0))
    assert render(scene, pose, INTR) == render(scene, pose, INTR)


def test_near_obstacle_occludes_far():
    near = Obstacle((13.0, 0.0), (0.3, 0.3), 0.6, (200, 30, 30))
    far = Obstacle((16.0, 0.0), (0.6, 0.6), 1.5, (30, 60, 210))
    pose = MOUNT.pose_of(VehicleState(10.0, 0.0, 0.0, 0.0))
    for obs in ([near, far], [far, near]):
        img = render(Scene(straight_track(), obs), pose, INTR).data
        p = project_to_pixel((13.0, 0.0, 0.3), pose, INTR)
        col, row = to_image_frame([p.u, p.v], INTR)
        assert tuple(img[int(row), int(col)]) == near.color


def test_obstacle_behind_camera_invisible():
    ob = Obstacle((5.0, 0.0), (0.3, 0.3), 0.6, (200, 30, 30))
    pose = MOUNT.pose_of(VehicleState(10.0, 0.0, 0.0, 0.0))
    img = render(Scene(straight_track(), [ob]), pose, INTR).data
    assert not np.all(img == ob.color, axis=-1).any()


def test_horizon_stable_under_yaw():
    tr = straight_track(length=200.0, half_width=100.0)
    rows = []
    for yaw in (0.0, 0.3, -0.7, 1.2):
        img = render(Scene(tr), CameraPose((100.0, 0.0, 0.3), 0.0, 0.0873, yaw), INTR).data
        rows.append(np.nonzero(np.all(img == Palette().road, axis=-1).any(axis=1))[0].min())
    assert len(set(rows)) == 1


def test_scene_validation():
    with pytest.raises(ValueError):
        Scene(None, [Obstacle((0, 0), (1, 1), 1, Palette().road)])
    with pytest.raises(ValueError):
        Scene(None, palette=Palette(background=(300, 0, 0)))


def test_ppm_file_round_trip(tmp_path):
    data = np.random.default_rng(0).integers(0, 256, (64, 128, 3), dtype=np.uint8)
    write_image(Image(data), tmp_path / "x.ppm")
    assert np.array_equal(read_image(tmp_path / "x.ppm").data, data)


@settings(max_examples=20)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_ppm_round_trip(h, w, seed):
    data = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
    assert np.array_equal(decode_ppm(encode_ppm(Image(data))).data, data)


def test_ppm_header_parsing():
    body = bytes(range(256)) * (128 * 64 * 3 // 256)
    img = decode_ppm(b"P6 128 64 255\n" + body)
    assert (img.width, img.height) == (128, 64)
    img2 = decode_ppm(b"P6\n# comment\n128 64\n255\n" + body)
    assert img2 == img


@pytest.mark.parametrize("buf, offset", [(b"P5 2 2 255\n" + bytes(12), 0), (b"P6 2 2", 6),
                                         (b"P6 2 x 255\n", 5), (b"P6 2 2 255\n" + bytes(5), 16),
                                         (b"P6 2 2 65535\n" + bytes(12), 7)])
def test_ppm_errors_report_offset(buf, offset):
    with pytest.raises(PPMError) as ei:
        decode_ppm(buf)
    assert ei.value.offset == offset


def test_encode_layout():
    data = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    assert encode_ppm(Image(data)) == b"P6\n3 2\n255\n" + data.tobytes()
