"""MP-Net, Macula-Net and full-image baseline training."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import NetConfig, RunConfig
from .dataset import Frame, split
from .nn import (Adam, ControlDistribution, Network, TrainingError, build, heteroscedastic_grad,
                 heteroscedastic_loss, load_checkpoint, mc_samples, save_checkpoint)
from .nn.bayes import summarize
from .render import as_pixels
from .roi import build_roi_windows, crop_resize_stack
from .spline import PixelSpline, basis_matrix
from .camera import PixelPoint
from .world import make_intrinsics, seed_for

log = logging.getLogger(__name__)

PIXEL_SCALE = 32.0   # pixel targets are divided by this before regression
VARIANTS = ("spline", "direct")


# ---------------------------------------------------------------- models

@dataclass
class MPNet:
    """Pixel-trajectory regressor: spline control points or raw focal points."""

    net: Network
    variant: str = "spline"
    degree: int = 3
    n_points: int = 4

    def raw(self, images) -> np.ndarray:
        x = _image_batch(images)
        out = np.concatenate([self.net.forward(x[i:i + 64]) for i in range(0, len(x), 64)]) \
            if len(x) else np.zeros((0,) + self.net.output_shape)
        return out.astype(np.float64).reshape(len(x), -1, 2) * PIXEL_SCALE

    def focal_points(self, images, n: int = 4) -> np.ndarray:
        """(b, n, 2) focal points in the bottom-centre pixel frame."""
        pts = self.raw(images)
        ts = np.linspace(0.0, 1.0, n)
        if self.variant == "spline":
            N = basis_matrix(ts, pts.shape[1], self.degree)
            return np.einsum("tk,bkd->btd", N, pts)
        # direct: piecewise-linear through the predicted points
        grid = np.linspace(0.0, 1.0, pts.shape[1])
        return np.stack([np.stack([np.interp(ts, grid, p[:, d]) for d in range(2)], axis=-1) for p in pts])

    def splines(self, images) -> list[PixelSpline]:
        if self.variant != "spline":
            raise ValueError("only the spline variant predicts splines")
        return [PixelSpline(p, self.degree) for p in self.raw(images)]

    def save(self, path, metrics: Optional[dict] = None) -> None:
        save_checkpoint(self.net, path, extra={"role": "mpnet", "variant": self.variant, "degree": self.degree,
                                               "n_points": self.n_points, "metrics": metrics or {}})

    @classmethod
    def load(cls, path) -> "MPNet":
        net, header = load_checkpoint(path)
        ex = header["extra"]
        if ex.get("role") != "mpnet":
            raise ValueError(f"{path} is not an MP-Net checkpoint")
        return cls(net, ex["variant"], ex["degree"], ex["n_points"])


@dataclass
class SteeringModel:
    """Bayesian steering head with target standardisation folded back in."""

    net: Network
    kind: str                 # "macula" | "baseline"
    y_mean: float = 0.0
    y_std: float = 1.0

    def predict_batch(self, x, n_mc: int = 25, seed: int = 0) -> dict[str, np.ndarray]:
        st = summarize(mc_samples(self.net, x, n_mc, seed))
        s2 = self.y_std ** 2
        return {"mean": self.y_mean + self.y_std * st["mean"],
                "log_var": st["log_var"] + np.log(s2),
                "epistemic_var": s2 * st["epistemic_var"],
                "aleatoric_var": s2 * st["aleatoric_var"]}

    def predict(self, x, n_mc: int = 25, seed: int = 0) -> ControlDistribution:
        x = np.asarray(x)
        if x.shape == tuple(self.net.spec.input_shape):
            x = x[None]
        st = self.predict_batch(x, n_mc, seed)
        return ControlDistribution(float(st["mean"][0]), float(st["log_var"][0]),
                                   float(st["epistemic_var"][0]), float(st["aleatoric_var"][0]), n_mc)

    def deterministic(self, x) -> np.ndarray:
        out = self.net.forward(np.asarray(x), "deterministic")
        return self.y_mean + self.y_std * out[:, 0].astype(np.float64)

    def save(self, path, metrics: Optional[dict] = None) -> None:
        save_checkpoint(self.net, path, extra={"role": self.kind, "y_mean": self.y_mean, "y_std": self.y_std,
                                               "metrics": metrics or {}})

    @classmethod
    def load(cls, path, kind: Optional[str] = None) -> "SteeringModel":
        net, header = load_checkpoint(path)
        ex = header["extra"]
        if kind is not None and ex.get("role") != kind:
            raise ValueError(f"{path} is not a {kind} checkpoint")
        return cls(net, ex["role"], float(ex["y_mean"]), float(ex["y_std"]))


@dataclass
class TrainResult:
    history: list = field(default_factory=list)   # one dict per epoch
    final: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        if not self.history:
            return
        keys = list(self.history[0])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for row in self.history:
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                            for k, v in row.items()})


# ---------------------------------------------------------------- inputs

def _image_batch(images) -> np.ndarray:
    if isinstance(images, np.ndarray) and images.dtype == np.float32:
        return images
    arr = images if isinstance(images, np.ndarray) else np.stack([as_pixels(im) for im in images])
    return arr.astype(np.float32) / np.float32(255.0)


def downsample_image(img, factor: int = 2) -> np.ndarray:
    """Box-average an (h, w, 3) image by an integer factor, scaled to [0, 1]."""
    data = as_pixels(img).astype(np.float32)
    h, w = data.shape[0] // factor * factor, data.shape[1] // factor * factor
    d = data[:h, :w].reshape(h // factor, factor, w // factor, factor, 3).mean(axis=(1, 3))
    return (d / np.float32(255.0)).astype(np.float32)


def roi_stacks(images, mpnet: MPNet, cfg: RunConfig) -> np.ndarray:
    """ROI stacks built around MP-Net's predicted focal points."""
    intr = make_intrinsics(cfg)
    focal = mpnet.focal_points(images, cfg.data.n_focal)
    out = []
    for im, pts in zip(images, focal):
        windows = build_roi_windows([PixelPoint(float(u), float(v)) for u, v in pts], cfg.roi.margin, intr,
                                    cfg.roi.tile)
        stack = crop_resize_stack(im, windows, cfg.roi.tile)
        if len(stack) < cfg.data.n_focal:   # degenerate: repeat the fovea
            stack = np.concatenate([np.repeat(stack[:1], cfg.data.n_focal - len(stack), axis=0), stack])
        out.append(stack)
    return np.stack(out).astype(np.float32)


def baseline_inputs(images, cfg: RunConfig) -> np.ndarray:
    return np.stack([downsample_image(im, cfg.eval.baseline_downsample) for im in images])


# ---------------------------------------------------------------- loop

def _fit(net: Network, n: int, batch: Callable, loss_and_grad: Callable, ncfg: NetConfig, seed: int,
         evaluate: Callable[[int], dict], progress=None) -> TrainResult:
    tc = ncfg.train
    if n < 1:
        raise ValueError("empty training set")
    opt = Adam.from_config(tc)
    rng = np.random.default_rng(seed)
    res = TrainResult()
    bs = min(tc.batch_size, n)
    for epoch in range(tc.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for k in range(0, n - bs + 1, bs):
            idx = np.sort(order[k:k + bs])
            x, y = batch(idx)
            out = net.forward(x, "train", rng)
            loss, grad = loss_and_grad(out, y)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            net.backward(grad)
            opt.step(net)
            total += loss * len(idx)
            count += len(idx)
        row = {"epoch": epoch + 1, "train_loss": total / count}
        row.update(evaluate(epoch))
        res.history.append(row)
        if progress:
            progress(row)
    res.final = dict(res.history[-1]) if res.history else evaluate(-1)
    return res


def _mse_loss(out, y):
    d = out.astype(np.float64) - y
    return float(np.mean(d * d)), (2.0 * d / d.size).astype(np.float32)


def mpnet_targets(frames: Sequence[Frame], variant: str, n_focal: int = 4) -> np.ndarray:
    """(n, k, 2) pixel targets: control points, or focal points of the target spline."""
    if variant == "spline":
        return np.stack([f.spline_target.control_points for f in frames])
    return np.stack([f.focal_points(n_focal) for f in frames])


def pixel_mse(mpnet: MPNet, frames: Sequence[Frame], n_focal: int = 4) -> float:
    """Mean squared pixel distance between predicted and target focal points."""
    if not frames:
        return float("nan")
    pred = mpnet.focal_points([f.image for f in frames], n_focal)
    true = np.stack([f.focal_points(n_focal) for f in frames])
    return float(np.mean(np.sum((pred - true) ** 2, axis=-1)))


def train_mpnet(frames: Sequence[Frame], cfg: RunConfig, variant: str = "spline", seed: Optional[int] = None,
                test_frames: Optional[Sequence[Frame]] = None, progress=None) -> tuple[MPNet, TrainResult]:
    """Regress pixel trajectories from images; reports coefficient and pixel MSE."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    seed = cfg.seed if seed is None else seed
    if test_frames is None:
        train, test = split(list(frames), cfg.data.test_fraction, seed)
    else:
        train, test = list(frames), list(test_frames)
    if len(train) < min(cfg.mpnet.train.batch_size, 1):
        raise ValueError("dataset smaller than one batch")
    nf = cfg.data.n_focal
    Ytr = mpnet_targets(train, variant, nf) / PIXEL_SCALE
    Yte = mpnet_targets(test, variant, nf) / PIXEL_SCALE
    n_out = Ytr.shape[1] * 2
    layers = [dict(l) for l in cfg.mpnet.layers]
    if layers[-1].get("type") == "dense":
        layers[-1]["out"] = n_out
    c = cfg.camera
    net = build(layers, (c.height, c.width, 3), seed_for(seed, "train", 0))
    model = MPNet(net, variant, cfg.data.degree, Ytr.shape[1])
    imgs_tr = np.stack([f.image.data for f in train])
    imgs_te = np.stack([f.image.data for f in test])

    def batch(idx):
        return _image_batch(imgs_tr[idx]), Ytr[idx].reshape(len(idx), -1)

    def evaluate(epoch):
        pred = model.raw(imgs_te) / PIXEL_SCALE
        coef = float(np.mean((pred - Yte) ** 2)) * PIXEL_SCALE ** 2
        return {"test_coef_mse": coef, "test_pixel_mse": pixel_mse(model, test, nf)}

    res = _fit(net, len(train), batch, _mse_loss, cfg.mpnet, seed_for(seed, "train", 1), evaluate, progress)
    pred_tr = model.raw(imgs_tr) / PIXEL_SCALE
    res.final["train_coef_mse"] = float(np.mean((pred_tr - Ytr) ** 2)) * PIXEL_SCALE ** 2
    res.final["train_pixel_mse"] = pixel_mse(model, train, nf)
    res.final["variant"] = variant
    return model, res


def _steering_targets(frames) -> np.ndarray:
    return np.array([f.expert_control.steering for f in frames], dtype=np.float64)


def _hetero_loss(out, y):
    mu, s = out[:, 0].astype(np.float64), out[:, 1].astype(np.float64)
    loss = heteroscedastic_loss(y, mu, s, reduction="mean")
    d_mu, d_s = heteroscedastic_grad(y, mu, s, reduction="mean")
    return loss, np.stack([d_mu, d_s], axis=1).astype(np.float32)


def _train_steering(kind: str, X: np.ndarray, frames, ncfg: NetConfig, cfg: RunConfig, seed: int,
                    test: Optional[tuple] = None, progress=None) -> tuple[SteeringModel, TrainResult]:
    y = _steering_targets(frames)
    y_mean = float(y.mean())
    y_std = float(y.std()) if len(y) > 1 and y.std() > 1e-6 else 1.0
    Yn = (y - y_mean) / y_std
    net = build(ncfg.layers, X.shape[1:], seed_for(seed, "train", 2 if kind == "macula" else 3))
    model = SteeringModel(net, kind, y_mean, y_std)

    def batch(idx):
        return X[idx], Yn[idx]

    def evaluate(epoch):
        if test is None:
            return {}
        Xt, yt = test
        mu = model.deterministic(Xt)
        return {"test_steer_mse": float(np.mean((mu - yt) ** 2))}

    res = _fit(net, len(X), batch, _hetero_loss, ncfg, seed_for(seed, "train", 4 if kind == "macula" else 5),
               evaluate, progress)
    res.final["train_steer_mse"] = float(np.mean((model.deterministic(X) - y) ** 2))
    return model, res


def train_macula(frames: Sequence[Frame], mpnet: MPNet, cfg: RunConfig, seed: Optional[int] = None,
                 test_frames: Optional[Sequence[Frame]] = None, progress=None) -> tuple[SteeringModel, TrainResult]:
    """Heteroscedastic steering regression on ROI stacks placed by MP-Net."""
    seed = cfg.seed if seed is None else seed
    X = roi_stacks([f.image for f in frames], mpnet, cfg)
    test = None
    if test_frames:
        test = (roi_stacks([f.image for f in test_frames], mpnet, cfg), _steering_targets(test_frames))
    return _train_steering("macula", X, frames, cfg.macula, cfg, seed, test, progress)


def train_baseline(frames: Sequence[Frame], cfg: RunConfig, seed: Optional[int] = None,
                   test_frames: Optional[Sequence[Frame]] = None, progress=None) -> tuple[SteeringModel, TrainResult]:
    """The same Bayesian head on the whole downsampled image, no attention."""
    seed = cfg.seed if seed is None else seed
    X = baseline_inputs([f.image for f in frames], cfg)
    test = None
    if test_frames:
        test = (baseline_inputs([f.image for f in test_frames], cfg), _steering_targets(test_frames))
    return _train_steering("baseline", X, frames, cfg.baseline, cfg, seed, test, progress)
