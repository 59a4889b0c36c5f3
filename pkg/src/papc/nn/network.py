"""Sequential network container, checkpoints, and the functional entry points."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .layers import Layer, layer_from_config

MAGIC = b"PAPCNET1"
MODES = ("train", "mc", "deterministic")


class SpecError(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, msg: str, layer: int | None = None):
        super().__init__(msg)
        self.layer = layer


@dataclass
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: list[dict]
    seed: int = 0

    def to_json(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": self.layers, "seed": self.seed}

    @classmethod
    def from_json(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), [dict(x) for x in d["layers"]], int(d.get("seed", 0)))


class Network:
    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(spec.seed)
        self.layers: list[Layer] = []
        shape = tuple(spec.input_shape)
        self.shapes = [shape]
        for i, cfg in enumerate(spec.layers):
            layer = layer_from_config(cfg)
            try:
                shape = layer.build(shape, rng, self.dtype)
            except ValueError as exc:
                raise SpecError(f"layer {i} ({cfg}): {exc}") from exc
            self.layers.append(layer)
            self.shapes.append(shape)
        if self.layers:
            # nothing upstream of the first layer needs its input gradient
            self.layers[0].need_input_grad = False
        self.activations: list[np.ndarray] | None = None

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def parameters(self):
        """(layer index, name, array) for every trainable tensor, in a fixed order."""
        return [(i, k, layer.params[k]) for i, layer in enumerate(self.layers) for k in sorted(layer.params)]

    def n_params(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def forward(self, x, mode: str = "deterministic", rng=None, start: int = 0,
                record: bool = False) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        x = np.asarray(x, dtype=self.dtype)
        expected = self.shapes[start]
        if x.shape[1:] != tuple(expected):
            raise SpecError(f"input shape {x.shape[1:]} does not match expected {tuple(expected)}")
        if mode != "deterministic" and rng is None:
            rng = np.random.default_rng()
        self.activations = [] if record else None
        for layer in self.layers[start:]:
            x = layer.forward(x, mode, rng)
            if record:
                self.activations.append(x)
        return x

    def backward(self, dy) -> np.ndarray | None:
        """Backpropagate; returns the input gradient when the first layer computes one."""
        dy = np.asarray(dy, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            dy = self.layers[i].backward(dy)
            for name, g in self.layers[i].grads.items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient in layer {i} ({name})", layer=i)
        return dy

    def first_index_of(self, kind: str) -> int | None:
        for i, layer in enumerate(self.layers):
            if layer.kind == kind:
                return i
        return None

    def set_dropout(self, p: float) -> None:
        for layer in self.layers:
            if layer.kind == "dropout":
                layer.p = p

    def copy(self) -> "Network":
        other = Network(self.spec, self.dtype)
        for (_, _, a), (_, _, b) in zip(other.parameters(), self.parameters()):
            a[...] = b
        for la, lb in zip(other.layers, self.layers):
            if lb.kind == "dropout":
                la.p = lb.p
        return other


def build(layers: Sequence[dict], input_shape, seed: int = 0, dtype=np.float32) -> Network:
    return Network(NetworkSpec(tuple(input_shape), list(layers), seed), dtype)


def forward(net: Network, x, mode: str = "deterministic", seed: int | None = None) -> np.ndarray:
    """Run the network; 'train' and 'mc' draw dropout masks from ``seed``."""
    rng = np.random.default_rng(seed) if mode != "deterministic" else None
    return net.forward(x, mode, rng)


def backward_and_step(net: Network, loss_grad, optimizer) -> Network:
    net.backward(loss_grad)
    optimizer.step(net)
    return net


def save_checkpoint(net: Network, path, epoch: int = 0, extra: dict | None = None) -> None:
    header = {"spec": net.spec.to_json(), "seed": net.spec.seed, "epoch": epoch,
              "dtype": "float32", "extra": extra or {}}
    hb = json.dumps(header, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for _, _, p in net.parameters())
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(hb)) + hb + blob)


def load_checkpoint(path) -> tuple[Network, dict]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a PAPCNET1 checkpoint")
    (n,) = struct.unpack("<I", buf[8:12])
    header = json.loads(buf[12:12 + n])
    net = Network(NetworkSpec.from_json(header["spec"]), np.float32)
    off = 12 + n
    for _, _, p in net.parameters():
        nbytes = 4 * p.size
        if off + nbytes > len(buf):
            raise ValueError(f"{path}: truncated parameter blob")
        p[...] = np.frombuffer(buf, dtype="<f4", count=p.size, offset=off).reshape(p.shape)
        off += nbytes
    if off != len(buf):
        raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
    return net, header
