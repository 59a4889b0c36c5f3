from __future__ import annotations

import numpy as np


def heteroscedastic_loss(y, mu, s, reduction: str = "sum") -> float:
    """sum_i exp(-s_i) * ||y_i - mu_i||^2 + s_i, with s the predicted log-variance."""
    y, mu, s = (np.asarray(a, dtype=np.float64) for a in (y, mu, s))
    sq = (y - mu) ** 2
    if sq.ndim > s.ndim:
        sq = sq.reshape(s.shape + (-1,)).sum(axis=-1)
    per = np.exp(-s) * sq + s
    return float(per.sum() if reduction == "sum" else per.mean())


def heteroscedastic_grad(y, mu, s, reduction: str = "sum"):
    """Gradients of :func:`heteroscedastic_loss` with respect to (mu, s)."""
    y, mu, s = (np.asarray(a, dtype=np.float64) for a in (y, mu, s))
    w = np.exp(-s)
    d_mu = -2.0 * w * (y - mu)
    d_s = 1.0 - w * (y - mu) ** 2
    if reduction == "mean":
        d_mu, d_s = d_mu / s.size, d_s / s.size
    return d_mu, d_s


def mse(pred, target) -> float:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


def mse_grad(pred, target) -> np.ndarray:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return 2.0 * d / d.size
