"""World -> robot -> camera -> film -> pixel projection.

Frames: world (U, V, W) with W up; robot x forward, y left, z up; camera
X left, Y up, Z along the optic (longitudinal) axis. Pixel points live in a
frame whose origin is the bottom-centre of the image, u positive to the
left and v positive upward; :func:`to_image_frame` converts to top-left
(column, row) indexing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import VehicleState


class BehindCameraError(ValueError):
    pass


class DegenerateTrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float]
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length: float = 64.0
    offset_x: float = 0.0
    offset_y: float = 32.0
    height: int = 64
    width: int = 128
    z_near: float = 0.05

    def __post_init__(self):
        if not self.focal_length > 0:
            raise ValueError("focal length must be positive")
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image size must be positive")


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float


@dataclass(frozen=True)
class CameraMount:
    """Camera placement on the vehicle; positive pitch tilts the optic axis down."""

    height: float = 0.3
    pitch_deg: float = 5.0
    roll_deg: float = 0.0

    def pose_of(self, state: VehicleState) -> CameraPose:
        return CameraPose((state.pos_u, state.pos_v, self.height),
                          math.radians(self.roll_deg), math.radians(self.pitch_deg), state.heading)


# camera X <- robot y, Y <- robot z, Z <- robot x
ROBOT_TO_CAMERA = np.array([[0.0, 1.0, 0.0],
                            [0.0, 0.0, 1.0],
                            [1.0, 0.0, 0.0]])


def rot_u(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_v(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_w(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """R = R_W(yaw) @ R_V(pitch) @ R_U(roll); the robot's attitude in world axes."""
    return rot_w(yaw) @ rot_v(pitch) @ rot_u(roll)


def translation_matrix(position) -> np.ndarray:
    t = np.zeros((3, 4))
    t[:, :3] = np.eye(3)
    t[:, 3] = -np.asarray(position, dtype=float)
    return t


def world_to_robot_matrix(pose: CameraPose) -> np.ndarray:
    """3x4 homogeneous world -> robot transform.

    The attitude matrix maps robot axes into world axes, so its transpose
    takes world offsets into the robot frame.
    """
    return rotation_matrix(pose.roll, pose.pitch, pose.yaw).T @ translation_matrix(pose.position)


def world_to_camera_matrix(pose: CameraPose) -> np.ndarray:
    return ROBOT_TO_CAMERA @ world_to_robot_matrix(pose)


def world_to_camera(point, pose: CameraPose) -> np.ndarray:
    """Camera-frame (X, Y, Z) of one (U, V, W) point or an (N, 3) batch."""
    p = np.asarray(point, dtype=float)
    M = world_to_camera_matrix(pose)
    return p @ M[:, :3].T + M[:, 3]


def film_to_pixel(cam: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Perspective divide plus offsets; returns bottom-centre (u, v)."""
    cam = np.asarray(cam, dtype=float)
    Z = cam[..., 2]
    u = intr.focal_length * cam[..., 0] / Z + intr.offset_x
    v = intr.focal_length * cam[..., 1] / Z + intr.offset_y
    return np.stack([u, v], axis=-1)


def project_points(points, pose: CameraPose, intr: CameraIntrinsics):
    """Batch projection. Returns (uv, depth); points behind z_near get NaN uv."""
    cam = world_to_camera(np.atleast_2d(points), pose)
    depth = cam[:, 2]
    ok = depth > intr.z_near
    uv = np.full((len(cam), 2), np.nan)
    if ok.any():
        uv[ok] = film_to_pixel(cam[ok], intr)
    return uv, depth


def project_to_pixel(point, pose: CameraPose, intr: CameraIntrinsics) -> PixelPoint:
    cam = world_to_camera(point, pose)
    if not cam[2] > intr.z_near:
        raise BehindCameraError(f"point {tuple(point)} has depth {cam[2]:.4g} <= z_near {intr.z_near}")
    u, v = film_to_pixel(cam, intr)
    return PixelPoint(float(u), float(v))


def to_image_frame(uv, intr: CameraIntrinsics) -> np.ndarray:
    """Bottom-centre (u, v) -> top-left (column, row) = (w/2, h) - (u, v)."""
    uv = np.asarray(uv, dtype=float)
    return np.array([intr.width / 2.0, float(intr.height)]) - uv


def from_image_frame(colrow, intr: CameraIntrinsics) -> np.ndarray:
    colrow = np.asarray(colrow, dtype=float)
    return np.array([intr.width / 2.0, float(intr.height)]) - colrow


def pixel_ray(uv, pose: CameraPose, intr: CameraIntrinsics) -> np.ndarray:
    """World-frame ray directions (unnormalised) through bottom-centre pixel coords."""
    uv = np.asarray(uv, dtype=float)
    cam = np.stack([(uv[..., 0] - intr.offset_x) / intr.focal_length,
                    (uv[..., 1] - intr.offset_y) / intr.focal_length,
                    np.ones(uv.shape[:-1])], axis=-1)
    R = rotation_matrix(pose.roll, pose.pitch, pose.yaw)
    return cam @ (R @ ROBOT_TO_CAMERA.T).T


def project_trajectory(states: Sequence[VehicleState], pose_of: Callable[[VehicleState], CameraPose],
                       intr: CameraIntrinsics, ground_height: float = 0.0,
                       row_margin: float | None = None) -> list[PixelPoint]:
    """Project planned ground positions through the camera of the first state.

    Points at depth <= z_near are dropped. With ``row_margin`` set, points
    further than that many pixels below the image bottom are dropped too,
    which removes the near-field blow-up of the perspective divide.
    """
    if len(states) < 2:
        raise DegenerateTrajectoryError("need at least 2 states")
    pose = pose_of(states[0])
    pts = np.array([[s.pos_u, s.pos_v, ground_height] for s in states])
    uv, _ = project_points(pts, pose, intr)
    keep = ~np.isnan(uv[:, 0])
    if row_margin is not None:
        keep &= uv[:, 1] >= -row_margin
    out = [PixelPoint(float(u), float(v)) for u, v in uv[keep]]
    if len(out) < 2:
        raise DegenerateTrajectoryError(f"only {len(out)} trajectory points visible")
    return out
