"""Layers with explicit forward/backward passes. Tensors are channels-last."""

from __future__ import annotations

import itertools

import numpy as np


class Layer:
    """Base layer. Parameterised layers fill ``params`` and, after backward, ``grads``."""

    kind = "layer"
    need_input_grad = True

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def build(self, in_shape: tuple, rng: np.random.Generator, dtype) -> tuple:
        return in_shape

    def forward(self, x: np.ndarray, mode: str = "deterministic", rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        return {"type": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, out: int):
        super().__init__()
        self.out = out

    def build(self, in_shape, rng, dtype):
        (n_in,) = in_shape
        self.params["W"] = (rng.standard_normal((n_in, self.out)) * np.sqrt(2.0 / n_in)).astype(dtype)
        self.params["b"] = np.zeros(self.out, dtype=dtype)
        return (self.out,)

    def forward(self, x, mode="deterministic", rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T

    def config(self):
        return {"type": self.kind, "out": self.out}


class Conv(Layer):
    """'Same'-padded, stride-1 convolution over 2 or 3 spatial dims (im2col)."""

    def __init__(self, out_ch: int, kernel: tuple[int, ...]):
        super().__init__()
        if any(k % 2 == 0 for k in kernel):
            raise ValueError("kernel sizes must be odd")
        self.out_ch = out_ch
        self.kernel = tuple(kernel)

    def build(self, in_shape, rng, dtype):
        *spatial, cin = in_shape
        if len(spatial) != len(self.kernel):
            raise ValueError(f"{self.kind} expects {len(self.kernel)} spatial dims, got input {in_shape}")
        fan_in = int(np.prod(self.kernel)) * cin
        self.params["W"] = (rng.standard_normal(self.kernel + (cin, self.out_ch))
                            * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.params["b"] = np.zeros(self.out_ch, dtype=dtype)
        return tuple(spatial) + (self.out_ch,)

    def _offsets(self):
        return list(itertools.product(*[range(k) for k in self.kernel]))

    def forward(self, x, mode="deterministic", rng=None):
        pads = [(0, 0)] + [(k // 2, k // 2) for k in self.kernel] + [(0, 0)]
        xp = np.pad(x, pads)
        spatial = x.shape[1:-1]
        cols = np.concatenate(
            [xp[(slice(None),) + tuple(slice(o, o + s) for o, s in zip(off, spatial))]
             for off in self._offsets()], axis=-1)
        self._shape = x.shape
        self._cols = cols.reshape(-1, cols.shape[-1])
        W = self.params["W"].reshape(-1, self.out_ch)
        y = self._cols @ W + self.params["b"]
        return y.reshape(x.shape[:-1] + (self.out_ch,))

    def backward(self, dy):
        cin = self._shape[-1]
        dyf = dy.reshape(-1, self.out_ch)
        self.grads["W"] = (self._cols.T @ dyf).reshape(self.params["W"].shape)
        self.grads["b"] = dyf.sum(axis=0)
        if not self.need_input_grad:
            return None
        dcols = (dyf @ self.params["W"].reshape(-1, self.out_ch).T).reshape(self._shape[:-1] + (-1,))
        spatial = self._shape[1:-1]
        padded = (self._shape[0],) + tuple(s + k - 1 for s, k in zip(spatial, self.kernel)) + (cin,)
        dxp = np.zeros(padded, dtype=dy.dtype)
        for i, off in enumerate(self._offsets()):
            dxp[(slice(None),) + tuple(slice(o, o + s) for o, s in zip(off, spatial))] += \
                dcols[..., i * cin:(i + 1) * cin]
        core = (slice(None),) + tuple(slice(k // 2, k // 2 + s) for k, s in zip(self.kernel, spatial))
        return dxp[core]

    def config(self):
        return {"type": self.kind, "out": self.out_ch, "kernel": list(self.kernel)}


class Conv2D(Conv):
    kind = "conv2d"

    def __init__(self, out_ch: int, k: int = 3):
        super().__init__(out_ch, (k, k))

    def config(self):
        return {"type": self.kind, "out": self.out_ch, "k": self.kernel[0]}


class Conv3D(Conv):
    kind = "conv3d"

    def __init__(self, out_ch: int, kernel=(3, 3, 3)):
        super().__init__(out_ch, tuple(kernel))


class MaxPool(Layer):
    """Non-overlapping max pooling; pool size 1 leaves that axis untouched."""

    def __init__(self, pool: tuple[int, ...]):
        super().__init__()
        self.pool = tuple(pool)

    def build(self, in_shape, rng, dtype):
        *spatial, c = in_shape
        if len(spatial) != len(self.pool):
            raise ValueError(f"{self.kind} expects {len(self.pool)} spatial dims, got input {in_shape}")
        if any(s % p for s, p in zip(spatial, self.pool)):
            raise ValueError(f"input {in_shape} not divisible by pool {self.pool}")
        return tuple(s // p for s, p in zip(spatial, self.pool)) + (c,)

    def forward(self, x, mode="deterministic", rng=None):
        n, *spatial, c = x.shape
        nd = len(spatial)
        split = [n]
        for s, p in zip(spatial, self.pool):
            split += [s // p, p]
        xr = x.reshape(split + [c])
        # move the pool-window axes to the end
        window_axes = [2 + 2 * i for i in range(nd)]
        keep_axes = [0] + [1 + 2 * i for i in range(nd)] + [len(split)]
        xt = xr.transpose(keep_axes + window_axes)
        flat = xt.reshape(xt.shape[:nd + 2] + (-1,))
        idx = flat.argmax(axis=-1)
        self._cache = (x.shape, split, keep_axes, window_axes, xt.shape, idx)
        return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        shape, split, keep_axes, window_axes, tshape, idx = self._cache
        flat = np.zeros(tshape[:len(keep_axes)] + (int(np.prod(self.pool)),), dtype=dy.dtype)
        np.put_along_axis(flat, idx[..., None], dy[..., None], axis=-1)
        xt = flat.reshape(tshape)
        inv = np.argsort(keep_axes + window_axes)
        return xt.transpose(inv).reshape(shape)

    def config(self):
        return {"type": self.kind, "pool": list(self.pool)}


class MaxPool2D(MaxPool):
    kind = "maxpool2d"

    def __init__(self, pool=(2, 2)):
        super().__init__(tuple(pool))


class MaxPool3D(MaxPool):
    """Defaults to (1, 2, 2): the stack (depth) axis is never pooled."""

    kind = "maxpool3d"

    def __init__(self, pool=(1, 2, 2)):
        super().__init__(tuple(pool))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode="deterministic", rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Dropout(Layer):
    """Inverted dropout, active in 'train' and 'mc' modes."""

    kind = "dropout"

    def __init__(self, p: float = 0.1):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout p must be in [0, 1)")
        self.p = p

    def forward(self, x, mode="deterministic", rng=None):
        if mode == "deterministic" or self.p == 0.0:
            self._mask = None
            return x
        keep = rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def config(self):
        return {"type": self.kind, "p": self.p}


class Flatten(Layer):
    kind = "flatten"

    def build(self, in_shape, rng, dtype):
        return (int(np.prod(in_shape)),)

    def forward(self, x, mode="deterministic", rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2D, Conv3D, MaxPool2D, MaxPool3D, ReLU, Dropout, Flatten)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("type")
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}")
    if kind == "conv3d" and "kernel" in cfg:
        cfg["kernel"] = tuple(cfg["kernel"])
    out = cfg.pop("out", None)
    return LAYER_TYPES[kind](out, **cfg) if out is not None else LAYER_TYPES[kind](**cfg)
