"""Expert demonstrations: MPC rollouts rendered and labelled with pixel-space splines."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import DegenerateTrajectoryError, project_trajectory
from .config import RunConfig
from .dynamics import ControlInput, VehicleState, track_frame
from .mpc import PlannedTrajectory, SolverError, receding_horizon
from .render import Image, read_image, render, write_image
from .roi import build_roi_windows, crop_resize_stack, decode_stack, encode_stack
from .spline import PixelSpline, SplineFitError, fit, sample_focal_points
from .world import make_intrinsics, make_mount, make_scene, make_track, rng_for

log = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.10


class DatasetError(RuntimeError):
    pass


@dataclass
class Frame:
    image: Image
    vehicle_state: VehicleState
    planned: PlannedTrajectory
    spline_target: PixelSpline
    expert_control: ControlInput
    episode: int = 0
    step: int = 0
    roi_stack: Optional[np.ndarray] = None   # ROIs from the target spline

    def focal_points(self, n: int = 4) -> np.ndarray:
        return np.array([[p.u, p.v] for p in sample_focal_points(self.spline_target, n)])


def plan_states(plan: PlannedTrajectory, t0: float, dt: float) -> list[VehicleState]:
    return [VehicleState(*x, timestamp=t0 + i * dt) for i, x in enumerate(plan.states)]


def label_frame(cfg: RunConfig, scene, state: VehicleState, plan: PlannedTrajectory,
                expert: ControlInput, intr=None, mount=None) -> Frame:
    """Render the view from ``state`` and fit the spline to the projected plan.

    Raises DegenerateTrajectoryError or SplineFitError when the plan cannot
    be labelled.
    """
    intr = intr or make_intrinsics(cfg)
    mount = mount or make_mount(cfg)
    image = render(scene, mount.pose_of(state), intr)
    pts = project_trajectory(plan_states(plan, state.timestamp, cfg.mpc.dt), mount.pose_of, intr,
                             row_margin=cfg.data.row_margin)
    if len(pts) < cfg.data.n_ctrl:
        raise DegenerateTrajectoryError(f"only {len(pts)} visible points for {cfg.data.n_ctrl} control points")
    spline = fit(pts, cfg.data.n_ctrl, cfg.data.degree)
    windows = build_roi_windows(sample_focal_points(spline, cfg.data.n_focal), cfg.roi.margin, intr,
                                cfg.roi.tile)
    stack = crop_resize_stack(image, windows, cfg.roi.tile)
    return Frame(image, state, plan, spline, expert, roi_stack=stack)


def _random_start(cfg: RunConfig, track, rng) -> VehicleState:
    s = rng.uniform(0.0, track.total_length if track.closed else 0.2 * track.total_length)
    p, tang = track.point_at(s)
    lat = rng.uniform(-cfg.data.lateral_jitter, cfg.data.lateral_jitter)
    normal = np.array([-tang[1], tang[0]])
    pos = p + lat * normal
    heading = math.atan2(tang[1], tang[0]) + rng.uniform(-cfg.data.heading_jitter, cfg.data.heading_jitter)
    return VehicleState(float(pos[0]), float(pos[1]), heading, cfg.mpc.target_speed, 0.0)


def _noise_injector(cfg: RunConfig, rng):
    """Piecewise-constant steering noise; the expert label stays clean."""
    hold = max(cfg.data.noise_hold_steps, 1)
    sigma = cfg.data.steer_noise
    current = [0.0]

    def perturb(i: int, u: ControlInput) -> ControlInput:
        if i % hold == 0:
            current[0] = float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0
        return ControlInput(u.steering + current[0], u.throttle)

    return perturb


def generate_dataset(cfg: RunConfig, n_frames: Optional[int] = None, out_dir=None,
                     progress=None) -> list[Frame]:
    """Roll out the MPC expert from perturbed starts and label every stride-th step.

    Frames are written to ``out_dir`` when given. Unlabelable steps are
    skipped with a logged reason; more than 10% skipped is an error.
    """
    n_frames = cfg.data.n_frames if n_frames is None else n_frames
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    track = make_track(cfg)
    scene = make_scene(cfg, track)
    intr, mount = make_intrinsics(cfg), make_mount(cfg)
    rng = rng_for(cfg.seed, "data")
    stride = max(cfg.data.frame_stride, 1)
    frames: list[Frame] = []
    attempted = skipped = 0
    episode = 0
    while len(frames) < n_frames:
        need = n_frames - len(frames)
        n_steps = min(cfg.data.episode_steps, need * stride)
        x0 = _random_start(cfg, track, rng)
        steps = receding_horizon(cfg.mpc, x0, track, n_steps, cfg.vehicle, _noise_injector(cfg, rng))
        for k in range(0, len(steps), stride):
            if len(frames) >= n_frames:
                break
            st = steps[k]
            attempted += 1
            if abs(track_frame(track, (st.state.pos_u, st.state.pos_v))[1]) > track.half_width:
                skipped += 1
                log.info("episode %d step %d: vehicle off track, frame skipped", episode, k)
                continue
            try:
                fr = label_frame(cfg, scene, st.state, st.plan, st.control, intr, mount)
            except (DegenerateTrajectoryError, SplineFitError, SolverError) as exc:
                skipped += 1
                log.info("episode %d step %d: %s, frame skipped", episode, k, exc)
                continue
            fr.episode, fr.step = episode, k
            frames.append(fr)
            if progress:
                progress(len(frames), n_frames)
        if skipped > MAX_SKIP_FRACTION * max(attempted, 10):
            raise DatasetError(f"{skipped} of {attempted} frames skipped (limit {MAX_SKIP_FRACTION:.0%})")
        episode += 1
    if out_dir is not None:
        save_dataset(frames, out_dir)
    return frames


def _frame_record(i: int, fr: Frame) -> dict:
    p = fr.planned
    return {"index": i, "episode": fr.episode, "step": fr.step,
            "image": f"images/{i:06d}.ppm", "roi": f"rois/{i:06d}.roi",
            "state": fr.vehicle_state.as_array().tolist(), "timestamp": fr.vehicle_state.timestamp,
            "expert_control": [fr.expert_control.steering, fr.expert_control.throttle],
            "plan": {"states": p.states.tolist(), "controls": p.controls.tolist(), "cost": p.cost,
                     "converged": bool(p.converged), "iterations": int(p.iterations)},
            "spline": fr.spline_target.to_json(), "spline_residual": fr.spline_target.residual}


def save_dataset(frames, out_dir) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "rois").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, fr in enumerate(frames):
        rec = _frame_record(i, fr)
        write_image(fr.image, out / rec["image"])
        if fr.roi_stack is not None:
            (out / rec["roi"]).write_bytes(encode_stack(fr.roi_stack))
        lines.append(json.dumps(rec, sort_keys=True))
    (out / "index.jsonl").write_text("\n".join(lines) + "\n")


def load_dataset(out_dir) -> list[Frame]:
    root = Path(out_dir)
    index = root / "index.jsonl"
    if not index.exists():
        raise FileNotFoundError(f"{index} not found; run gen-data first")
    frames = []
    for line in index.read_text().splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        p = r["plan"]
        plan = PlannedTrajectory(np.array(p["states"]), np.array(p["controls"]), p["cost"], p["converged"],
                                 0.0, p["iterations"])
        roi_path = root / r["roi"]
        stack = decode_stack(roi_path.read_bytes()) if roi_path.exists() else None
        frames.append(Frame(read_image(root / r["image"]), VehicleState(*r["state"], timestamp=r["timestamp"]),
                            plan, PixelSpline.from_json(r["spline"]), ControlInput(*r["expert_control"]),
                            r["episode"], r["step"], stack))
    return frames


def split(frames, test_fraction: float, seed: int):
    """Deterministic train/test split by episode, so test frames are unseen trajectories."""
    episodes = sorted({f.episode for f in frames})
    if len(episodes) >= 2 and test_fraction > 0:
        rng = rng_for(seed, "split")
        order = rng.permutation(episodes)
        n_test = max(1, int(round(test_fraction * len(episodes))))
        test_eps = set(order[:n_test].tolist())
        train = [f for f in frames if f.episode not in test_eps]
        test = [f for f in frames if f.episode in test_eps]
        if train and test:
            return train, test
    n_test = int(round(test_fraction * len(frames)))
    return frames[:len(frames) - n_test] or frames, frames[len(frames) - n_test:] or frames
