"""MC-dropout predictive distribution for a (mean, log-variance) regression head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network


@dataclass(frozen=True)
class ControlDistribution:
    mean: float
    log_var: float
    epistemic_var: float
    aleatoric_var: float
    n_mc: int


def mc_samples(net: Network, x, n_mc: int = 25, seed: int = 0) -> np.ndarray:
    """(n_mc, batch, out) raw outputs under independent dropout masks.

    Layers before the first dropout are deterministic, so they run once and
    only the tail is repeated.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    x = np.asarray(x, dtype=net.dtype)
    split = net.first_index_of("dropout")
    if split is None:
        out = net.forward(x, "deterministic")
        return np.broadcast_to(out, (n_mc,) + out.shape).copy()
    head = x
    for layer in net.layers[:split]:
        head = layer.forward(head, "deterministic")
    b = head.shape[0]
    tiled = np.broadcast_to(head, (n_mc,) + head.shape).reshape((n_mc * b,) + head.shape[1:])
    rng = np.random.default_rng(seed)
    out = net.forward(tiled, "mc", rng, start=split)
    return out.reshape((n_mc, b) + out.shape[1:])


def summarize(samples: np.ndarray) -> dict[str, np.ndarray]:
    """Epistemic = variance of sampled means; aleatoric = mean of exp(log-var)."""
    s = np.asarray(samples, dtype=np.float64)
    mu, log_var = s[..., 0], s[..., 1]
    return {"mean": mu.mean(axis=0), "log_var": log_var.mean(axis=0),
            "epistemic_var": mu.var(axis=0), "aleatoric_var": np.exp(log_var).mean(axis=0)}


def mc_predict(net: Network, x, n_mc: int = 25, seed: int = 0) -> ControlDistribution:
    """Predictive distribution for a single input (with or without batch axis)."""
    x = np.asarray(x)
    if x.shape == tuple(net.spec.input_shape):
        x = x[None]
    stats = summarize(mc_samples(net, x, n_mc, seed))
    return ControlDistribution(float(stats["mean"][0]), float(stats["log_var"][0]),
                               float(stats["epistemic_var"][0]), float(stats["aleatoric_var"][0]), n_mc)


def mc_predict_batch(net: Network, x, n_mc: int = 25, seed: int = 0) -> dict[str, np.ndarray]:
    return summarize(mc_samples(net, x, n_mc, seed))
