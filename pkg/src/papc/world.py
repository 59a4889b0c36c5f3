"""Turn a RunConfig into the concrete objects the pipeline works with."""

from __future__ import annotations

import numpy as np

from .camera import CameraIntrinsics, CameraMount
from .config import ObstacleConfig, RunConfig
from .dynamics import Obstacle, Track, load_track, oval_track, straight_track
from .render import Palette, Scene

# stream tags for seeded generators, so each consumer draws independently
STREAMS = {"data": 1, "split": 2, "train": 3, "calib": 4, "trial": 5, "mc": 6, "noise": 7}


def rng_for(seed: int, stream: str, *extra: int) -> np.random.Generator:
    # negative tags (e.g. trial -1 for calibration) wrap to distinct uint32 words
    words = [int(seed) % 2**32, STREAMS[stream]] + [int(x) % 2**32 for x in extra]
    return np.random.default_rng(words)


def seed_for(seed: int, stream: str, *extra: int) -> int:
    return int(rng_for(seed, stream, *extra).integers(0, 2**31 - 1))


def make_track(cfg: RunConfig) -> Track:
    t = cfg.track
    if t.kind == "oval":
        return oval_track(t.straight, t.radius, t.half_width, t.spacing)
    if t.kind == "straight":
        return straight_track(t.length, t.half_width, t.spacing)
    return load_track(t.file)


def make_intrinsics(cfg: RunConfig) -> CameraIntrinsics:
    c = cfg.camera
    return CameraIntrinsics(c.focal_length, c.offset_x, c.offset_y, c.height, c.width, c.z_near)


def make_mount(cfg: RunConfig) -> CameraMount:
    c = cfg.camera
    return CameraMount(c.mount_height, c.pitch_deg, c.roll_deg)


def make_obstacle(oc: ObstacleConfig, center=(0.0, 0.0)) -> Obstacle:
    return Obstacle(tuple(map(float, center)), tuple(map(float, oc.footprint)), float(oc.height),
                    tuple(int(c) for c in oc.color), novel=True, name=oc.name)


def make_scene(cfg: RunConfig, track: Track | None = None, obstacles=()) -> Scene:
    return Scene(track if track is not None else make_track(cfg), list(obstacles),
                 Palette(centre_width=cfg.track.centre_line))
