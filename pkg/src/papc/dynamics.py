"""Planar vehicle world: kinematic bicycle dynamics, track geometry, obstacles."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class DynamicsError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class VehicleState:
    pos_u: float
    pos_v: float
    heading: float
    speed: float
    timestamp: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.pos_u, self.pos_v, self.heading, self.speed])

    @classmethod
    def from_array(cls, x, timestamp: float = 0.0) -> "VehicleState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), timestamp)


@dataclass(frozen=True)
class ControlInput:
    steering: float = 0.0
    throttle: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.steering, self.throttle])


@dataclass(frozen=True)
class VehicleParams:
    """Kinematic bicycle parameters (AutoRally-like defaults)."""

    wheelbase: float = 0.57
    steer_max: float = 0.5
    accel_max: float = 4.0
    drag: float = 0.0

    def clip(self, steering: float, throttle: float) -> tuple[float, float]:
        return (min(max(steering, -self.steer_max), self.steer_max),
                min(max(throttle, -self.accel_max), self.accel_max))


DEFAULT_PARAMS = VehicleParams()


def _deriv(psi, s, steer, accel, wheelbase, drag):
    return (s * math.cos(psi), s * math.sin(psi),
            s * math.tan(steer) / wheelbase, accel - drag * s)


def step_raw(x: Sequence[float], steer: float, accel: float, dt: float,
             params: VehicleParams = DEFAULT_PARAMS) -> tuple[float, float, float, float]:
    """One RK4 step of the bicycle ODE followed by heading wrap and speed clamp.

    Operates on plain floats; this is the single code path used by both
    :func:`step_dynamics` and the MPC rollouts so re-rollouts are bit-exact.
    """
    pu, pv, psi, s = x
    L, c = params.wheelbase, params.drag
    k1 = _deriv(psi, s, steer, accel, L, c)
    h = 0.5 * dt
    k2 = _deriv(psi + h * k1[2], s + h * k1[3], steer, accel, L, c)
    k3 = _deriv(psi + h * k2[2], s + h * k2[3], steer, accel, L, c)
    k4 = _deriv(psi + dt * k3[2], s + dt * k3[3], steer, accel, L, c)
    w = dt / 6.0
    pu = pu + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    pv = pv + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    psi = psi + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    s = s + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    return pu, pv, wrap_angle(psi), max(s, 0.0)


def rk4_batch(x: np.ndarray, u: np.ndarray, dt: float,
              params: VehicleParams = DEFAULT_PARAMS) -> np.ndarray:
    """Vectorised RK4 on (..., 4) states and (..., 2) controls, no wrap/clamp.

    Complex-safe, which the MPC uses for complex-step Jacobians.
    """
    L, c = params.wheelbase, params.drag
    steer, accel = u[..., 0], u[..., 1]
    curv = np.tan(steer) / L

    def f(z):
        psi, s = z[..., 2], z[..., 3]
        return np.stack([s * np.cos(psi), s * np.sin(psi), s * curv, accel - c * s], axis=-1)

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_dynamics(state: VehicleState, control: ControlInput, dt: float,
                  params: VehicleParams = DEFAULT_PARAMS) -> VehicleState:
    if not dt > 0:
        raise DynamicsError(f"dt must be positive, got {dt}")
    vals = (state.pos_u, state.pos_v, state.heading, state.speed,
            control.steering, control.throttle)
    if not all(math.isfinite(v) for v in vals):
        raise DynamicsError(f"non-finite state or control: {state}, {control}")
    if abs(control.steering) > params.steer_max or abs(control.throttle) > params.accel_max:
        raise DynamicsError(f"control out of bounds: {control}")
    nxt = step_raw(vals[:4], control.steering, control.throttle, dt, params)
    return VehicleState(*nxt, timestamp=state.timestamp + dt)


@dataclass(frozen=True)
class Track:
    centerline: tuple[tuple[float, float], ...]
    half_width: float
    closed: bool = True
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        pts = tuple((float(p[0]), float(p[1])) for p in self.centerline)
        object.__setattr__(self, "centerline", pts)
        if len(pts) < 4:
            raise ValueError("track needs at least 4 waypoints")
        arr = np.asarray(pts)
        seg = np.diff(np.vstack([arr, arr[:1]]) if self.closed else arr, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) == 0.0):
            raise ValueError("consecutive waypoints must be distinct")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(starts, unit tangents, lengths) of every centerline segment."""
        if "seg" not in self._cache:
            a = np.asarray(self.centerline)
            b = np.roll(a, -1, axis=0) if self.closed else a[1:]
            a = a if self.closed else a[:-1]
            d = b - a
            lengths = np.hypot(d[:, 0], d[:, 1])
            self._cache["seg"] = (a, d / lengths[:, None], lengths)
            self._cache["cum"] = np.concatenate([[0.0], np.cumsum(lengths)])
        return self._cache["seg"]

    @property
    def total_length(self) -> float:
        self.segments
        return float(self._cache["cum"][-1])

    def point_at(self, arc_length: float) -> tuple[np.ndarray, np.ndarray]:
        """Centerline point and unit tangent at the given arc length."""
        a, t, lengths = self.segments
        cum = self._cache["cum"]
        s = arc_length % cum[-1] if self.closed else min(max(arc_length, 0.0), cum[-1])
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lengths) - 1)
        return a[i] + t[i] * (s - cum[i]), t[i]

    def to_json(self) -> dict:
        return {"half_width": self.half_width, "closed": self.closed,
                "centerline": [list(p) for p in self.centerline]}

    @classmethod
    def from_json(cls, d: dict) -> "Track":
        return cls(tuple(map(tuple, d["centerline"])), float(d["half_width"]), bool(d["closed"]))


def track_frame_batch(track: Track, pts: np.ndarray):
    """Vectorised projection of (N, 2) points onto the centerline.

    Returns arc lengths, signed lateral offsets (+ left of travel) and the
    left unit normal of the chosen segment, each with leading shape N.
    """
    a, t, lengths = track.segments
    cum = track._cache["cum"]
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    rel = pts[:, None, :] - a[None, :, :]
    along = np.clip(np.einsum("nsk,sk->ns", rel, t), 0.0, lengths[None, :])
    near = a[None] + along[..., None] * t[None]
    diff = pts[:, None, :] - near
    d2 = np.einsum("nsk,nsk->ns", diff, diff)
    idx = np.argmin(d2, axis=1)  # first minimum: ties go to the lower index
    rows = np.arange(len(pts))
    tang = t[idx]
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    dvec = diff[rows, idx]
    cross = tang[:, 0] * dvec[:, 1] - tang[:, 1] * dvec[:, 0]
    lateral = np.sign(cross) * np.sqrt(d2[rows, idx])
    s = cum[idx] + along[rows, idx]
    total = cum[-1]
    s = np.mod(s, total) if track.closed else np.minimum(s, np.nextafter(total, 0.0))
    return s, lateral, normal


def track_frame(track: Track, pos) -> tuple[float, float]:
    s, e, _ = track_frame_batch(track, np.asarray(pos, dtype=float)[None])
    return float(s[0]), float(e[0])


def oval_track(straight: float = 20.0, radius: float = 8.0, half_width: float = 1.5,
               spacing: float = 0.5) -> Track:
    """Counter-clockwise stadium track starting at the origin heading +U."""
    pts = []
    n_straight = max(int(round(straight / spacing)), 1)
    n_arc = max(int(round(math.pi * radius / spacing)), 2)
    for i in range(n_straight):
        pts.append((straight * i / n_straight, 0.0))
    for i in range(n_arc):
        a = -math.pi / 2 + math.pi * i / n_arc
        pts.append((straight + radius * math.cos(a), radius + radius * math.sin(a)))
    for i in range(n_straight):
        pts.append((straight - straight * i / n_straight, 2 * radius))
    for i in range(n_arc):
        a = math.pi / 2 + math.pi * i / n_arc
        pts.append((radius * math.cos(a), radius + radius * math.sin(a)))
    return Track(tuple(pts), half_width, True)


def straight_track(length: float = 200.0, half_width: float = 1.5, spacing: float = 1.0) -> Track:
    n = max(int(round(length / spacing)), 3)
    return Track(tuple((length * i / n, 0.0) for i in range(n + 1)), half_width, False)


def save_track(track: Track, path) -> None:
    Path(path).write_text(json.dumps(track.to_json(), indent=1))


def load_track(path) -> Track:
    return Track.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    footprint: tuple[float, float]
    height: float
    color: tuple[int, int, int]
    novel: bool = True
    name: str = ""

    def __post_init__(self):
        if min(self.footprint) <= 0:
            raise ValueError("obstacle footprint extents must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "footprint", tuple(float(c) for c in self.footprint))
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))

    def moved_to(self, center) -> "Obstacle":
        return replace(self, center=tuple(center))

    def to_json(self) -> dict:
        d = asdict(self)
        d["center"], d["footprint"], d["color"] = list(self.center), list(self.footprint), list(self.color)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Obstacle":
        return cls(tuple(d["center"]), tuple(d["footprint"]), float(d["height"]),
                   tuple(d["color"]), bool(d.get("novel", True)), d.get("name", ""))


def save_obstacles(obstacles: Sequence[Obstacle], path) -> None:
    Path(path).write_text(json.dumps([o.to_json() for o in obstacles], indent=1))


def load_obstacles(path) -> list[Obstacle]:
    return [Obstacle.from_json(d) for d in json.loads(Path(path).read_text())]


def distance_to_obstacle(state: VehicleState, obstacle: Obstacle) -> float:
    """Distance from the vehicle position to the obstacle's rectangular footprint."""
    du = max(abs(state.pos_u - obstacle.center[0]) - obstacle.footprint[0], 0.0)
    dv = max(abs(state.pos_v - obstacle.center[1]) - obstacle.footprint[1], 0.0)
    return math.hypot(du, dv)
