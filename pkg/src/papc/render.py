"""Software renderer: ray-cast ground plane plus painter's-order boxes, and PPM I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .camera import (CameraIntrinsics, CameraPose, from_image_frame, pixel_ray, to_image_frame,
                     world_to_camera, film_to_pixel)
from .dynamics import Obstacle, Track

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class Palette:
    background: RGB = (70, 130, 60)
    road: RGB = (110, 110, 110)
    boundary: RGB = (235, 235, 235)
    stripe_width: float = 0.15
    centre_width: float = 0.0          # full width of the centre marking; 0 disables it


@dataclass(frozen=True)
class Scene:
    track: Track | None
    obstacles: tuple[Obstacle, ...] = ()
    palette: Palette = field(default_factory=Palette)
    max_range: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for o in self.obstacles:
            if tuple(o.color) == tuple(self.palette.road):
                raise ValueError("obstacle color must differ from the road color")
        for c in (self.palette.background, self.palette.road, self.palette.boundary):
            if not all(0 <= x <= 255 for x in c):
                raise ValueError(f"color out of range: {c}")


@dataclass(frozen=True, eq=False)
class Image:
    data: np.ndarray  # (h, w, 3) uint8

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.data, other.data)


def as_pixels(img) -> np.ndarray:
    """The (h, w, 3) array behind an Image, or the array itself."""
    return img.data if isinstance(img, Image) else np.asarray(img)


def _pixel_grid(intr: CameraIntrinsics) -> np.ndarray:
    cols = np.arange(intr.width) + 0.5
    rows = np.arange(intr.height) + 0.5
    cc, rr = np.meshgrid(cols, rows)
    return from_image_frame(np.stack([cc, rr], axis=-1), intr)


def _road_distance(track: Track, pts: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Unsigned distance to the centerline using only segments near ``center``.

    Dropping far segments can only overestimate the distance, so anything
    classified as road or stripe is classified exactly.
    """
    a, t, lengths = track.segments
    along = np.clip(np.einsum("sk,sk->s", center - a, t), 0.0, lengths)
    gap = np.linalg.norm(a + along[:, None] * t - center, axis=1)
    keep = gap <= radius
    if not keep.any():
        return np.full(len(pts), np.inf)
    a, t, lengths = a[keep], t[keep], lengths[keep]
    rel = pts[:, None, :] - a[None]
    al = np.clip(np.einsum("nsk,sk->ns", rel, t), 0.0, lengths[None])
    diff = rel - al[..., None] * t[None]
    return np.sqrt(np.einsum("nsk,nsk->ns", diff, diff).min(axis=1))


def _render_ground(scene: Scene, pose: CameraPose, intr: CameraIntrinsics, img: np.ndarray) -> None:
    if scene.track is None:
        return
    d = pixel_ray(_pixel_grid(intr), pose, intr).reshape(-1, 3)
    cam_w = pose.position[2]
    down = d[:, 2] < 0
    t = np.where(down, -cam_w / np.where(down, d[:, 2], -1.0), np.inf)
    hit = np.asarray(pose.position)[None, :2] + t[:, None] * d[:, :2]
    dist = t * np.hypot(d[:, 0], d[:, 1])
    idx = np.nonzero(down & (dist <= scene.max_range))[0]
    if len(idx) == 0:
        return
    lat = _road_distance(scene.track, hit[idx], np.asarray(pose.position[:2], float),
                         scene.max_range + scene.track.half_width)
    pal = scene.palette
    flat = img.reshape(-1, 3)
    hw = scene.track.half_width
    flat[idx[lat <= hw - pal.stripe_width]] = pal.road
    flat[idx[(lat > hw - pal.stripe_width) & (lat <= hw)]] = pal.boundary
    if pal.centre_width > 0:
        flat[idx[lat <= pal.centre_width / 2]] = pal.boundary


_FACES = (  # corner indices of a box, outward normal
    ((0, 2, 6, 4), (-1, 0, 0)), ((1, 5, 7, 3), (1, 0, 0)),
    ((0, 4, 5, 1), (0, -1, 0)), ((2, 3, 7, 6), (0, 1, 0)),
    ((0, 1, 3, 2), (0, 0, -1)), ((4, 6, 7, 5), (0, 0, 1)),
)


def box_corners(ob: Obstacle) -> np.ndarray:
    (cu, cv), (a, b) = ob.center, ob.footprint
    return np.array([[cu + sx * a, cv + sy * b, z]
                     for z in (0.0, ob.height) for sy in (-1, 1) for sx in (-1, 1)])


def _clip_near(poly: np.ndarray, z_near: float) -> np.ndarray:
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        pin, qin = p[2] > z_near, q[2] > z_near
        if pin:
            out.append(p)
        if pin != qin:
            s = (z_near - p[2]) / (q[2] - p[2])
            x = p + s * (q - p)
            x[2] = z_near * (1 + 1e-9)
            out.append(x)
    return np.array(out)


def _fill_convex(img: np.ndarray, poly: np.ndarray, color: RGB) -> None:
    """Fill pixels whose centres fall inside a convex (column, row) polygon."""
    h, w = img.shape[:2]
    c0 = max(int(np.floor(poly[:, 0].min())), 0)
    c1 = min(int(np.ceil(poly[:, 0].max())), w)
    r0 = max(int(np.floor(poly[:, 1].min())), 0)
    r1 = min(int(np.ceil(poly[:, 1].max())), h)
    if c0 >= c1 or r0 >= r1:
        return
    cc, rr = np.meshgrid(np.arange(c0, c1) + 0.5, np.arange(r0, r1) + 0.5)
    pos = np.ones(cc.shape, dtype=bool)
    neg = np.ones(cc.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % n]
        cross = (x1 - x0) * (rr - y0) - (y1 - y0) * (cc - x0)
        pos &= cross >= 0
        neg &= cross <= 0
    img[r0:r1, c0:c1][pos | neg] = color


def _render_obstacles(scene: Scene, pose: CameraPose, intr: CameraIntrinsics, img: np.ndarray) -> None:
    cam = np.asarray(pose.position)
    order = sorted(scene.obstacles, key=lambda o: -np.hypot(o.center[0] - cam[0], o.center[1] - cam[1]))
    for ob in order:
        corners = box_corners(ob)
        cc = world_to_camera(corners, pose)
        for idx, normal in _FACES:
            centre = corners[list(idx)].mean(axis=0)
            if np.dot(normal, cam - centre) <= 0:
                continue
            poly = _clip_near(cc[list(idx)], intr.z_near)
            if len(poly) < 3:
                continue
            _fill_convex(img, to_image_frame(film_to_pixel(poly, intr), intr), ob.color)


def render(scene: Scene, pose: CameraPose, intr: CameraIntrinsics) -> Image:
    img = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
    img[:] = scene.palette.background
    _render_ground(scene, pose, intr, img)
    _render_obstacles(scene, pose, intr, img)
    return Image(img)


class PPMError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def encode_ppm(img: Image) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + np.ascontiguousarray(img.data, np.uint8).tobytes()


def decode_ppm(buf: bytes) -> Image:
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise PPMError("truncated header", pos)
        fields.append((m.group(1), m.start(1)))
        pos = m.end(1)
    magic, off = fields[0]
    if magic != b"P6":
        raise PPMError(f"bad magic {magic!r}", off)
    nums = []
    for tok, off in fields[1:]:
        if not tok.isdigit():
            raise PPMError(f"bad header field {tok!r}", off)
        nums.append(int(tok))
    w, h, maxval = nums
    if maxval != 255:
        raise PPMError(f"unsupported maxval {maxval}", fields[3][1])
    if w <= 0 or h <= 0:
        raise PPMError("non-positive image size", fields[1][1])
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PPMError("missing whitespace after header", pos)
    pos += 1
    need = w * h * 3
    if len(buf) - pos < need:
        raise PPMError(f"truncated pixel data: need {need} bytes, have {len(buf) - pos}", len(buf))
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3).copy()
    return Image(data)


def write_image(img: Image, path) -> None:
    Path(path).write_bytes(encode_ppm(img))


def read_image(path) -> Image:
    return decode_ppm(Path(path).read_bytes())
