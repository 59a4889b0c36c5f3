from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, TrainingError


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")


class Adam:
    """Adam with bias-corrected moments."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Adam":
        return cls(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)

    def step(self, net: Network) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, name, p in net.parameters():
            g = net.layers[i].grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in layer {i} ({name})", layer=i)
            key = (i, name)
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            v = self.v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
