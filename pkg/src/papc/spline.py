"""Clamped B-splines on [0, 1]: Cox-de Boor basis, evaluation, least-squares fitting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera import PixelPoint


class SplineDomainError(ValueError):
    pass


class SplineFitError(ValueError):
    pass


def clamped_knots(n_ctrl: int, degree: int) -> np.ndarray:
    """Uniform interior knots with k+1 repeated end knots on [0, 1]."""
    n_inner = n_ctrl - degree - 1
    if n_inner < 0:
        raise ValueError(f"need at least {degree + 1} control points for degree {degree}")
    inner = np.linspace(0.0, 1.0, n_inner + 2)[1:-1]
    return np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)])


def basis(i: int, k: int, t: float, knots: Sequence[float]) -> float:
    """Cox-de Boor recursion for N_{i,k}(t); 0/0 terms count as 0.

    Degree-0 spans are half-open except the last non-empty one, which is
    closed so the right end of the domain is covered.
    """
    knots = np.asarray(knots, dtype=float)
    lo, hi = knots[k], knots[len(knots) - k - 1]
    if not lo <= t <= hi:
        raise SplineDomainError(f"t={t} outside [{lo}, {hi}]")
    return _cox_de_boor(i, k, float(t), knots)


def _cox_de_boor(i, k, t, knots):
    if k == 0:
        a, b = knots[i], knots[i + 1]
        if a <= t < b:
            return 1.0
        # close the final non-degenerate span at the domain's right end
        last = len(knots) - 1
        while last > 0 and knots[last - 1] == knots[last]:
            last -= 1
        return 1.0 if (t == b and i + 1 == last and a < b) else 0.0
    out = 0.0
    d1 = knots[i + k] - knots[i]
    if d1 > 0:
        out += (t - knots[i]) / d1 * _cox_de_boor(i, k - 1, t, knots)
    d2 = knots[i + k + 1] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + k + 1] - t) / d2 * _cox_de_boor(i + 1, k - 1, t, knots)
    return out


def basis_matrix(ts, n_ctrl: int, degree: int, knots=None) -> np.ndarray:
    """(len(ts), n_ctrl) matrix of basis values, built by the Cox-de Boor recursion
    vectorised over t."""
    knots = clamped_knots(n_ctrl, degree) if knots is None else np.asarray(knots, dtype=float)
    ts = np.asarray(ts, dtype=float)
    lo, hi = knots[degree], knots[-degree - 1]
    if np.any(ts < lo) or np.any(ts > hi):
        raise SplineDomainError(f"parameters outside [{lo}, {hi}]")
    m = len(knots) - 1
    N = np.zeros((len(ts), m))
    last = m
    while last > 0 and knots[last - 1] == knots[last]:
        last -= 1
    for j in range(m):
        a, b = knots[j], knots[j + 1]
        N[:, j] = (a <= ts) & (ts < b)
        if j + 1 == last and a < b:
            N[ts == b, j] = 1.0
    for k in range(1, degree + 1):
        nxt = np.zeros((len(ts), m - k))
        for j in range(m - k):
            d1 = knots[j + k] - knots[j]
            d2 = knots[j + k + 1] - knots[j + 1]
            if d1 > 0:
                nxt[:, j] += (ts - knots[j]) / d1 * N[:, j]
            if d2 > 0:
                nxt[:, j] += (knots[j + k + 1] - ts) / d2 * N[:, j + 1]
        N = nxt
    return N[:, :n_ctrl]


@dataclass(frozen=True, eq=False)
class PixelSpline:
    control_points: np.ndarray            # (n_ctrl, 2) bottom-centre (u, v)
    degree: int = 3
    residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "control_points", cp)
        if len(cp) < self.degree + 1:
            raise ValueError("too few control points for the degree")

    @property
    def knots(self) -> np.ndarray:
        return clamped_knots(len(self.control_points), self.degree)

    @property
    def coefficients(self) -> np.ndarray:
        """Flat [u0, v0, u1, v1, ...] vector; 8 values for the default 4-point cubic."""
        return self.control_points.reshape(-1)

    @classmethod
    def from_coefficients(cls, coeffs, degree: int = 3) -> "PixelSpline":
        return cls(np.asarray(coeffs, dtype=float).reshape(-1, 2), degree)

    def evaluate_many(self, ts) -> np.ndarray:
        return basis_matrix(ts, len(self.control_points), self.degree) @ self.control_points

    def to_json(self) -> dict:
        return {"degree": self.degree, "ctrl": self.control_points.tolist()}

    @classmethod
    def from_json(cls, d) -> "PixelSpline":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(np.asarray(d["ctrl"], dtype=float), int(d["degree"]))


def evaluate(spline: PixelSpline, t: float) -> tuple[float, float]:
    u, v = spline.evaluate_many([t])[0]
    return float(u), float(v)


def chord_length_params(pts: np.ndarray) -> np.ndarray:
    d = np.hypot(*np.diff(pts, axis=0).T)
    total = d.sum()
    if total == 0:
        raise SplineFitError("all points identical")
    ts = np.concatenate([[0.0], np.cumsum(d)]) / total
    ts[-1] = 1.0  # cumsum and sum may round differently
    return np.minimum(ts, 1.0)


def fit(points: Sequence[PixelPoint] | np.ndarray, n_ctrl: int = 4, degree: int = 3,
        params=None) -> PixelSpline:
    """Least-squares control points for a clamped spline through ``points``.

    Parameters default to chord length; pass ``params`` to fix them. The RMS
    residual (pixels) is stored on the returned spline.
    """
    pts = np.array([[p.u, p.v] for p in points]) if not isinstance(points, np.ndarray) \
        else np.asarray(points, dtype=float)
    if not len(pts) >= n_ctrl >= degree + 1:
        raise SplineFitError(f"need len(points) >= n_ctrl >= degree+1, got {len(pts)}, {n_ctrl}, {degree}")
    ts = chord_length_params(pts) if params is None else np.asarray(params, dtype=float)
    N = basis_matrix(ts, n_ctrl, degree)
    sv = np.linalg.svd(N, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-10:
        raise SplineFitError("rank-deficient design matrix (degenerate trajectory)")
    ctrl, *_ = np.linalg.lstsq(N, pts, rcond=None)
    resid = float(np.sqrt(np.mean(np.sum((N @ ctrl - pts) ** 2, axis=1))))
    return PixelSpline(ctrl, degree, resid)


def sample_focal_points(spline: PixelSpline, n: int = 4) -> list[PixelPoint]:
    """n points at equally spaced parameters, near (t=0) to far (t=1)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return [PixelPoint(float(u), float(v)) for u, v in spline.evaluate_many(np.linspace(0.0, 1.0, n))]
