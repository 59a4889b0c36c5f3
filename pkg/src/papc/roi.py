"""Multi-resolution ROI construction, crop/resize and stacking."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import CameraIntrinsics, PixelPoint, to_image_frame
from .render import as_pixels

log = logging.getLogger(__name__)

TILE = 32


@dataclass(frozen=True)
class RoiWindow:
    center: tuple[float, float]   # image frame (column, row)
    size: tuple[float, float]     # (w_u, w_v) pixels
    is_fovea: bool = False

    def __post_init__(self):
        if min(self.size) < 1:
            raise ValueError("window size must be >= 1")

    def bounds(self) -> tuple[int, int, int, int]:
        """Integer (col0, row0, width, height) of the pre-clipping crop."""
        w = max(int(round(self.size[0])), 1)
        h = max(int(round(self.size[1])), 1)
        c0 = int(np.floor(self.center[0] - w / 2.0 + 0.5))
        r0 = int(np.floor(self.center[1] - h / 2.0 + 0.5))
        return c0, r0, w, h


@dataclass(frozen=True)
class RoiWindows:
    windows: tuple[RoiWindow, ...]
    degenerate: bool = False

    def __iter__(self):
        return iter(self.windows)

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, i):
        return self.windows[i]


def build_roi_windows(focal_points: Sequence[PixelPoint], margin: float = 8.0,
                      intr: CameraIntrinsics | None = None, fovea_size: int = TILE) -> RoiWindows:
    """Windows ordered near-to-far, fovea (the farthest focal point) last.

    Each non-fovea window is centred midway between its focal point and the
    fovea, sized ``2|p_mid - p_fovea| + margin`` per axis. With ``intr``
    the focal points are converted from the bottom-centre frame to image
    (column, row) coordinates first; otherwise they are taken as image
    coordinates already.
    """
    if len(focal_points) < 2:
        raise ValueError("need at least 2 focal points")
    pts = np.array([[p.u, p.v] for p in focal_points], dtype=float)
    if intr is not None:
        pts = to_image_frame(pts, intr)
    fovea = pts[-1]
    fovea_win = RoiWindow((float(fovea[0]), float(fovea[1])), (fovea_size, fovea_size), True)
    if np.all(pts == fovea):
        return RoiWindows((fovea_win,), degenerate=True)
    out = []
    for p in pts[:-1]:
        mid = (p + fovea) / 2.0
        size = 2.0 * np.abs(mid - fovea) + margin
        out.append(RoiWindow((float(mid[0]), float(mid[1])), (float(size[0]), float(size[1]))))
    out.append(fovea_win)
    return RoiWindows(tuple(out))


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box-filter weights: overlap of each output bin with each input pixel."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo, hi = edges[:-1, None], edges[1:, None]
    j = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / (n_in / n_out)


def crop(img: np.ndarray, window: RoiWindow) -> tuple[np.ndarray, bool]:
    """Crop with zero padding outside the image; also report full-outside."""
    H, W = img.shape[:2]
    c0, r0, w, h = window.bounds()
    out = np.zeros((h, w) + img.shape[2:], dtype=np.float64)
    cs, ce = max(c0, 0), min(c0 + w, W)
    rs, re_ = max(r0, 0), min(r0 + h, H)
    if cs >= ce or rs >= re_:
        return out, True
    out[rs - r0:re_ - r0, cs - c0:ce - c0] = img[rs:re_, cs:ce]
    return out, False


def resize_area(patch: np.ndarray, size: int = TILE) -> np.ndarray:
    Wr = _area_weights(patch.shape[0], size)
    Wc = _area_weights(patch.shape[1], size)
    rows = np.tensordot(Wr, patch, axes=(1, 0))          # (size, w, c)
    return np.matmul(Wc, rows)                          # (size, size, c)


def crop_resize_stack(img, windows: Sequence[RoiWindow], tile: int = TILE) -> np.ndarray:
    """(n_roi, tile, tile, 3) float32 stack in [0, 1], in window order."""
    data = as_pixels(img)
    if len(windows) == 0:
        raise ValueError("no windows")
    tiles = []
    for i, w in enumerate(windows):
        patch, outside = crop(data, w)
        if outside:
            log.debug("ROI %d lies fully outside the image; zero tile", i)
        tiles.append(resize_area(patch, tile) / 255.0)
    return np.stack(tiles).astype(np.float32)


def encode_stack(stack: np.ndarray) -> bytes:
    """8-byte little-endian uint16 shape header followed by float32 LE data."""
    if stack.ndim != 4:
        raise ValueError("stack must be 4-D")
    return struct.pack("<4H", *stack.shape) + np.ascontiguousarray(stack, dtype="<f4").tobytes()


def decode_stack(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise ValueError("truncated stack header")
    shape = struct.unpack("<4H", buf[:8])
    n = int(np.prod(shape))
    if len(buf) - 8 != 4 * n:
        raise ValueError(f"stack payload is {len(buf) - 8} bytes, expected {4 * n}")
    return np.frombuffer(buf, dtype="<f4", offset=8).reshape(shape).astype(np.float32)
