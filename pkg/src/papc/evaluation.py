"""Closed-loop evaluation: variance-gated driving, calibration and the detection table."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .dynamics import (Obstacle, VehicleState, distance_to_obstacle, step_raw, track_frame)
from .nn import ControlDistribution
from .render import Image, render
from .training import MPNet, SteeringModel, baseline_inputs, roi_stacks
from .world import make_intrinsics, make_mount, make_obstacle, make_scene, make_track, rng_for, seed_for

log = logging.getLogger(__name__)

METHODS = ("papc", "baseline")
CONTACT_DISTANCE = 0.35   # vehicle nose to rear-axle reference point, metres


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectionEvent:
    frame_index: int
    epistemic_var: float
    threshold: float
    distance_to_obstacle: float
    detected: bool


def gate(epistemic_var: float, threshold: float) -> bool:
    """Unsafe iff the epistemic variance strictly exceeds the threshold."""
    return bool(epistemic_var > threshold)


@dataclass
class Perception:
    """Image to steering distribution for one method."""

    method: str
    model: SteeringModel
    mpnet: Optional[MPNet]
    cfg: RunConfig

    def inputs(self, image: Image) -> np.ndarray:
        if self.method == "papc":
            return roi_stacks([image], self.mpnet, self.cfg)
        return baseline_inputs([image], self.cfg)

    def __call__(self, image: Image, seed: int) -> ControlDistribution:
        return self.model.predict(self.inputs(image), self.cfg.eval.n_mc, seed)


@dataclass
class EpisodeResult:
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    states: list = field(default_factory=list)
    outcome: str = "timeout"     # detected | collision | passed | off_track | timeout
    first_detection: Optional[DetectionEvent] = None

    @property
    def detected(self) -> bool:
        return self.first_detection is not None

    @property
    def detection_distance(self) -> float:
        """Distance left at the first detection; 0 when the obstacle was never flagged."""
        return self.first_detection.distance_to_obstacle if self.first_detection else 0.0

    @property
    def epistemic(self) -> np.ndarray:
        return np.array([r["epistemic_var"] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "epistemic_var", "aleatoric_var", "distance_to_obstacle", "detected"])
            for r in self.rows:
                w.writerow([repr(r["t"]), repr(r["epistemic_var"]), repr(r["aleatoric_var"]),
                            repr(r["distance_to_obstacle"]), int(r["detected"])])


def trial_setup(cfg: RunConfig, trial: int, track=None) -> tuple[VehicleState, np.ndarray, float]:
    """Start state, obstacle centre and obstacle arc length for a seeded trial."""
    track = track or make_track(cfg)
    ev = cfg.eval
    rng = rng_for(cfg.seed, "trial", trial)
    lat0 = rng.uniform(-ev.start_lateral_jitter, ev.start_lateral_jitter)
    lat_ob = rng.uniform(-ev.obstacle_lateral_jitter, ev.obstacle_lateral_jitter)
    p, t = track.point_at(ev.start_arc)
    n = np.array([-t[1], t[0]])
    pos = p + lat0 * n
    start = VehicleState(float(pos[0]), float(pos[1]), math.atan2(t[1], t[0]), ev.nominal_speed, 0.0)
    s_ob = ev.start_arc + ev.obstacle_distance
    q, tq = track.point_at(s_ob)
    center = q + lat_ob * np.array([-tq[1], tq[0]])
    return start, center, s_ob


def run_episode(perception: Perception, scene, threshold: float, cfg: RunConfig, start: VehicleState,
                max_steps: int, seed: int = 0, obstacle: Optional[Obstacle] = None,
                stop_arc: Optional[float] = None) -> EpisodeResult:
    """Drive with the network's mean steering, gating on epistemic variance.

    Inference runs every ``eval.inference_every`` dynamics steps. On the
    first detection the vehicle coasts (zero throttle, steering held) and
    the episode ends. Without detection the episode ends on contact, when
    the vehicle passes ``stop_arc``, leaves the track, or times out.
    """
    ev, params, dt = cfg.eval, cfg.vehicle, cfg.mpc.dt
    intr, mount = make_intrinsics(cfg), make_mount(cfg)
    track = scene.track
    res = EpisodeResult()
    state = start
    steer = 0.0
    s_prev = track_frame(track, (state.pos_u, state.pos_v))[0]
    travelled = 0.0
    goal = None if stop_arc is None else (stop_arc - s_prev) % track.total_length if track.closed \
        else stop_arc - s_prev
    for k in range(max_steps):
        d_ob = distance_to_obstacle(state, obstacle) if obstacle is not None else math.inf
        if k % max(ev.inference_every, 1) == 0:
            frame = len(res.events)
            img = render(scene, mount.pose_of(state), intr)
            dist = perception(img, seed_for(seed, "mc", frame))
            steer = float(np.clip(dist.mean, -params.steer_max, params.steer_max))
            det = gate(dist.epistemic_var, threshold)
            evt = DetectionEvent(frame, dist.epistemic_var, threshold, d_ob, det)
            res.events.append(evt)
            res.rows.append({"t": state.timestamp, "epistemic_var": dist.epistemic_var,
                             "aleatoric_var": dist.aleatoric_var, "distance_to_obstacle": d_ob,
                             "detected": det})
            if det:
                res.first_detection = evt
                res.outcome = "detected"
                res.states.append(state)
                # emergency stop: cut throttle, hold steering; the episode ends here
                break
        if d_ob <= CONTACT_DISTANCE:
            res.outcome = "collision"
            break
        res.states.append(state)
        accel = float(np.clip(ev.speed_gain * (ev.nominal_speed - state.speed), -params.accel_max, params.accel_max))
        x = step_raw(state.as_array(), steer, accel, dt, params)
        state = VehicleState(*x, timestamp=state.timestamp + dt)
        s, lat = track_frame(track, (state.pos_u, state.pos_v))
        ds = s - s_prev
        if track.closed:
            ds = (ds + track.total_length / 2) % track.total_length - track.total_length / 2
        travelled += ds
        s_prev = s
        if abs(lat) > track.half_width:
            res.outcome = "off_track"
            break
        if goal is not None and travelled >= goal:
            res.outcome = "passed"
            break
    return res


def calibrate_threshold(epistemic_series: Sequence[float], k_thr: float) -> float:
    """threshold = k_thr times the largest nominal epistemic variance."""
    v = np.asarray(list(epistemic_series), dtype=float)
    if v.size == 0:
        raise CalibrationError("empty calibration episode")
    return float(k_thr * v.max())


def calibration_episode(perception: Perception, cfg: RunConfig, steps: Optional[int] = None) -> EpisodeResult:
    """Obstacle-free drive from the nominal start with the gate disabled."""
    track = make_track(cfg)
    start, _, _ = trial_setup(cfg, -1, track)
    steps = cfg.eval.calibration_steps if steps is None else steps
    return run_episode(perception, make_scene(cfg, track), math.inf, cfg, start, steps,
                       seed_for(cfg.seed, "calib"))


def calibrate(perception: Perception, cfg: RunConfig) -> tuple[float, EpisodeResult]:
    ep = calibration_episode(perception, cfg)
    if ep.outcome == "off_track":
        log.warning("%s left the track during calibration", perception.method)
    return calibrate_threshold(ep.epistemic, cfg.eval.k_thr), ep


def _episode_steps(cfg: RunConfig) -> int:
    ev = cfg.eval
    return int(math.ceil(1.5 * ev.obstacle_distance / max(ev.nominal_speed, 1e-3) / cfg.mpc.dt))


def run_trial(perception: Perception, cfg: RunConfig, threshold: float, trial: int,
              obstacle_index: Optional[int]) -> EpisodeResult:
    """One seeded trial; ``obstacle_index`` None runs the same stretch obstacle-free."""
    track = make_track(cfg)
    start, center, s_ob = trial_setup(cfg, trial, track)
    obstacles = []
    ob = None
    if obstacle_index is not None:
        ob = make_obstacle(cfg.eval.obstacles[obstacle_index], center)
        obstacles = [ob]
    scene = make_scene(cfg, track, obstacles)
    return run_episode(perception, scene, threshold, cfg, start, _episode_steps(cfg),
                       seed_for(cfg.seed, "trial", trial, -1 if obstacle_index is None else obstacle_index),
                       ob, s_ob)


def _summary(distances: Sequence[float]) -> dict:
    d = np.asarray(distances, dtype=float)
    return {"min": float(d.min()), "avg": float(d.mean()), "max": float(d.max()),
            "median": float(np.median(d)), "n_trials": int(d.size),
            "n_detected": int(np.count_nonzero(d > 0)), "distances": [float(x) for x in d]}


def _run_task(args):
    perceptions, cfg, thresholds, method, trial, ob = args
    res = run_trial(perceptions[method], cfg, thresholds[method], trial, ob)
    return res


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("PAPC_THREADS", "1")))
    except ValueError:
        return 1


def compare(cfg: RunConfig, mpnet: MPNet, macula: SteeringModel, baseline: SteeringModel,
            thresholds: dict, out_dir=None, progress=None) -> dict:
    """Detection distance per obstacle and method over seeded trials, plus false-detection rates.

    Every trial index fixes the start and obstacle placement, so both methods
    face identical situations. Results merge in task order regardless of the
    worker count.
    """
    perceptions = {"papc": Perception("papc", macula, mpnet, cfg),
                   "baseline": Perception("baseline", baseline, None, cfg)}
    obstacles = list(range(len(cfg.eval.obstacles))) + [None]
    tasks = [(perceptions, cfg, thresholds, m, t, ob)
             for ob in obstacles for m in METHODS for t in range(cfg.eval.trials)]
    workers = min(n_workers(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_task(task))
            if progress:
                progress(i + 1, len(tasks))
    table: dict = {"obstacles": {}, "false_detection": {},
                   "thresholds": {m: float(thresholds[m]) for m in METHODS},
                   "trials": cfg.eval.trials, "seed": cfg.seed, "k_thr": cfg.eval.k_thr}
    ep_dir = Path(out_dir) / "episodes" if out_dir is not None else None
    if ep_dir is not None:
        ep_dir.mkdir(parents=True, exist_ok=True)
    grouped: dict = {}
    for (_, _, _, m, t, ob), res in zip(tasks, results):
        name = "none" if ob is None else cfg.eval.obstacles[ob].name
        grouped.setdefault((name, m), []).append(res)
        if ep_dir is not None:
            res.write_csv(ep_dir / f"{m}_{name}_{t:03d}.csv")
    for ob in obstacles:
        name = "none" if ob is None else cfg.eval.obstacles[ob].name
        for m in METHODS:
            eps = grouped[(name, m)]
            if ob is None:
                n_false = sum(e.detected for e in eps)
                table["false_detection"][m] = {"episodes": len(eps), "false_detections": int(n_false),
                                               "rate": n_false / len(eps),
                                               "max_epistemic_var": float(max(e.epistemic.max() for e in eps))}
            else:
                entry = _summary([e.detection_distance for e in eps])
                entry["outcomes"] = [e.outcome for e in eps]
                table["obstacles"].setdefault(name, {})[m] = entry
    return table


def dump_activation_maps(model: SteeringModel, stack: np.ndarray, n_pools: int = 2) -> list[np.ndarray]:
    """Channel-averaged activations after the first pooling layers, one (n_roi, h, w) uint8 array each.

    Each map is min-max rescaled to [0, 255]; a constant map becomes all zeros.
    """
    net = model.net if isinstance(model, SteeringModel) else model
    x = np.asarray(stack, dtype=np.float32)
    if x.shape == tuple(net.spec.input_shape):
        x = x[None]
    net.forward(x, "deterministic", record=True)
    maps = []
    for layer, act in zip(net.layers, net.activations):
        if layer.kind in ("maxpool3d", "maxpool2d") and len(maps) < n_pools:
            m = act[0].mean(axis=-1).astype(np.float64)
            if m.ndim == 2:
                m = m[None]
            out = np.zeros(m.shape, dtype=np.uint8)
            for i, sl in enumerate(m):
                lo, hi = sl.min(), sl.max()
                if hi > lo:
                    out[i] = np.round((sl - lo) / (hi - lo) * 255.0).astype(np.uint8)
            maps.append(out)
    net.activations = None
    return maps


def encode_pgm(gray: np.ndarray) -> bytes:
    g = np.asarray(gray, dtype=np.uint8)
    return f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode() + g.tobytes()
