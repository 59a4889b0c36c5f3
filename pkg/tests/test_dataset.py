import filecmp
import logging

import numpy as np
import pytest

from papc import config as C
from papc import dataset as D
from papc.camera import DegenerateTrajectoryError, project_to_pixel
from papc.dataset import DatasetError, Frame, generate_dataset, load_dataset, split
from papc.spline import evaluate
from papc.world import make_intrinsics, make_mount


def _cfg(kind="oval", **data):
    return C.from_dict({"track": {"kind": kind}, "data": data})


@pytest.fixture(scope="module")
def one_frame():
    cfg = _cfg()
    return cfg, generate_dataset(cfg, n_frames=1)[0]


def test_single_frame_spline_starts_at_first_visible_plan_point(one_frame):
    cfg, fr = one_frame
    intr, mount = make_intrinsics(cfg), make_mount(cfg)
    pose = mount.pose_of(fr.vehicle_state)
    first = None
    for x in fr.planned.states:
        try:
            p = project_to_pixel((x[0], x[1], 0.0), pose, intr)
        except ValueError:
            continue
        if p.v >= -cfg.data.row_margin:
            first = p
            break
    u, v = evaluate(fr.spline_target, 0.0)
    assert np.hypot(u - first.u, v - first.v) < 2.0


def test_frame_fields_are_consistent(one_frame):
    cfg, fr = one_frame
    assert fr.image.data.shape == (cfg.camera.height, cfg.camera.width, 3)
    assert fr.roi_stack.shape == (cfg.data.n_focal, cfg.roi.tile, cfg.roi.tile, 3)
    assert fr.expert_control.steering == pytest.approx(fr.planned.controls[0][0])
    assert fr.spline_target.control_points.shape == (cfg.data.n_ctrl, 2)


def test_centred_straight_drive_has_centred_control_points():
    cfg = _cfg("straight", lateral_jitter=0.0, heading_jitter=0.0, steer_noise=0.0)
    frames = generate_dataset(cfg, n_frames=3)
    for fr in frames:
        assert np.all(np.abs(fr.spline_target.control_points[:, 0]) < 2.0)


def test_same_seed_gives_byte_identical_dataset(tmp_path):
    cfg = _cfg(frame_stride=2)
    generate_dataset(cfg, n_frames=3, out_dir=tmp_path / "a")
    generate_dataset(cfg, n_frames=3, out_dir=tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for sub in ("images", "rois"):
        c = filecmp.dircmp(tmp_path / "a" / sub, tmp_path / "b" / sub)
        names = c.common_files
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a" / sub, tmp_path / "b" / sub, names, shallow=False)
        assert not mismatch and not errors and len(match) == 3


def test_save_load_round_trip(tmp_path):
    cfg = _cfg()
    frames = generate_dataset(cfg, n_frames=2, out_dir=tmp_path)
    back = load_dataset(tmp_path)
    assert len(back) == 2
    for a, b in zip(frames, back):
        np.testing.assert_array_equal(a.image.data, b.image.data)
        np.testing.assert_array_equal(a.roi_stack, b.roi_stack)
        np.testing.assert_allclose(a.spline_target.control_points, b.spline_target.control_points)
        assert a.vehicle_state == b.vehicle_state and a.expert_control == b.expert_control


def test_load_missing_dataset_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)


def test_unlabelable_frames_are_skipped_and_logged(monkeypatch, caplog):
    real = D.label_frame
    calls = [0]

    def flaky(*a, **k):
        calls[0] += 1
        if calls[0] == 1:
            raise DegenerateTrajectoryError("synthetic failure")
        return real(*a, **k)

    monkeypatch.setattr(D, "label_frame", flaky)
    with caplog.at_level(logging.INFO, logger="papc.dataset"):
        frames = generate_dataset(_cfg(), n_frames=3)
    assert len(frames) == 3
    assert any("synthetic failure" in r.message for r in caplog.records)


def test_too_many_skips_is_an_error():
    with pytest.raises(DatasetError):
        generate_dataset(_cfg(n_ctrl=60), n_frames=3)


def _fake(ep):
    return Frame(None, None, None, None, None, episode=ep)


def test_split_keeps_episodes_whole():
    frames = [_fake(e) for e in range(10) for _ in range(5)]
    train, test = split(frames, 0.2, seed=0)
    assert len(train) + len(test) == 50
    assert not {f.episode for f in train} & {f.episode for f in test}
    again = split(frames, 0.2, seed=0)
    assert [f.episode for f in again[1]] == [f.episode for f in test]
