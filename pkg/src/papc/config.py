"""Run configuration: one JSON document, one dataclass per section.

Every field has a default except ``track.kind``. Validation reports the
dotted key path of the first problem found.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dynamics import VehicleParams
from .mpc import OcpSpec
from .nn.optim import TrainConfig


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass
class TrackConfig:
    kind: str                          # "oval" | "straight" | "file"
    file: Optional[str] = None
    straight: float = 20.0
    radius: float = 8.0
    length: float = 200.0
    half_width: float = 0.75
    spacing: float = 0.5
    centre_line: float = 0.1           # painted centre marking width (m); 0 disables it


@dataclass
class CameraConfig:
    focal_length: float = 64.0
    offset_x: float = 0.0
    offset_y: float = 32.0
    height: int = 64
    width: int = 128
    z_near: float = 0.05
    mount_height: float = 0.3
    pitch_deg: float = 5.0
    roll_deg: float = 0.0


@dataclass
class DataConfig:
    n_frames: int = 5000
    frame_stride: int = 5
    episode_steps: int = 400
    n_ctrl: int = 4
    degree: int = 3
    n_focal: int = 4
    lateral_jitter: float = 0.3
    heading_jitter: float = 0.15
    steer_noise: float = 0.06
    noise_hold_steps: int = 10
    row_margin: float = 0.0
    test_fraction: float = 0.2


@dataclass
class RoiConfig:
    margin: float = 8.0
    tile: int = 32


def _layers(*spec) -> list:
    return [dict(s) for s in spec]


def default_mpnet_layers() -> list:
    return _layers({"type": "conv2d", "out": 8, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
                   {"type": "conv2d", "out": 16, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
                   {"type": "conv2d", "out": 16, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
                   {"type": "flatten"}, {"type": "dense", "out": 64}, {"type": "relu"},
                   {"type": "dense", "out": 8})


def default_macula_layers() -> list:
    return _layers({"type": "conv3d", "out": 8}, {"type": "relu"}, {"type": "maxpool3d"},
                   {"type": "conv3d", "out": 16}, {"type": "relu"}, {"type": "maxpool3d"},
                   {"type": "flatten"}, {"type": "dense", "out": 64}, {"type": "relu"},
                   {"type": "dropout", "p": 0.1}, {"type": "dense", "out": 2})


def default_baseline_layers() -> list:
    return _layers({"type": "conv2d", "out": 8, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
                   {"type": "conv2d", "out": 16, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
                   {"type": "flatten"}, {"type": "dense", "out": 64}, {"type": "relu"},
                   {"type": "dropout", "p": 0.1}, {"type": "dense", "out": 2})


@dataclass
class NetConfig:
    layers: list
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class ObstacleConfig:
    name: str
    footprint: list
    height: float
    color: list


def default_obstacles() -> list:
    return [ObstacleConfig("tall_box", [0.15, 0.15], 0.8, [200, 30, 30]),
            ObstacleConfig("wide_box", [0.45, 0.12], 0.3, [30, 60, 210]),
            ObstacleConfig("small_box", [0.12, 0.12], 0.25, [235, 200, 20])]


@dataclass
class EvalConfig:
    n_mc: int = 25
    k_thr: float = 5.0
    allow_k_thr_outside_band: bool = False
    calibration_steps: int = 600
    trials: int = 10
    obstacle_distance: float = 13.0
    start_arc: float = 1.0
    start_lateral_jitter: float = 0.2
    obstacle_lateral_jitter: float = 0.2
    nominal_speed: float = 5.0
    inference_every: int = 2          # dynamics steps per network inference
    speed_gain: float = 2.0
    baseline_downsample: int = 2
    obstacles: list = field(default_factory=default_obstacles)


@dataclass
class RunConfig:
    track: TrackConfig
    seed: int = 0
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    camera: CameraConfig = field(default_factory=CameraConfig)
    mpc: OcpSpec = field(default_factory=OcpSpec)
    data: DataConfig = field(default_factory=DataConfig)
    roi: RoiConfig = field(default_factory=RoiConfig)
    mpnet: NetConfig = field(default_factory=lambda: NetConfig(default_mpnet_layers()))
    macula: NetConfig = field(default_factory=lambda: NetConfig(default_macula_layers()))
    baseline: NetConfig = field(default_factory=lambda: NetConfig(default_baseline_layers()))
    eval: EvalConfig = field(default_factory=EvalConfig)


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected bool, got {type(value).__name__}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected int, got {type(value).__name__}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected number, got {type(value).__name__}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected string, got {type(value).__name__}")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected list, got {type(value).__name__}")
        return value
    return value


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _from_dict(cls, data, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in fields:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    kwargs = {}
    for name, f in fields.items():
        sub = f"{path}.{name}" if path else name
        if name in data:
            value = data[name]
            if f.default_factory is not dataclasses.MISSING and isinstance(value, dict):
                default = f.default_factory()
                if dataclasses.is_dataclass(default):
                    # a partial section overrides the section's own defaults
                    value = _merge(dataclasses.asdict(default), value)
            kwargs[name] = _coerce(hints[name], value, sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "missing required key")
    if cls is EvalConfig and "obstacles" in kwargs:
        kwargs["obstacles"] = [_from_dict(ObstacleConfig, o, f"{path}.obstacles[{i}]")
                               for i, o in enumerate(kwargs["obstacles"])]
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def from_dict(data: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, data)
    if cfg.track.kind not in ("oval", "straight", "file"):
        raise ConfigError("track.kind", f"unknown track kind {cfg.track.kind!r}")
    if not 3.0 <= cfg.eval.k_thr <= 10.0 and not cfg.eval.allow_k_thr_outside_band:
        raise ConfigError("eval.k_thr", "must lie in [3, 10] unless eval.allow_k_thr_outside_band is set")
    if cfg.eval.n_mc < 1:
        raise ConfigError("eval.n_mc", "must be >= 1")
    if cfg.track.half_width <= 0 or cfg.track.centre_line < 0:
        raise ConfigError("track.half_width" if cfg.track.half_width <= 0 else "track.centre_line",
                          "must be positive" if cfg.track.half_width <= 0 else "must be >= 0")
    if cfg.track.kind == "file" and not cfg.track.file:
        raise ConfigError("track.file", "missing required key for kind 'file'")
    return cfg


def load(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return from_dict(data)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def dump(cfg, path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=1, sort_keys=True))


def quick(cfg: RunConfig) -> RunConfig:
    """Desk-scale profile: smaller nets, 500 frames, fewer epochs."""
    d = to_dict(cfg)
    d["data"]["n_frames"] = 500
    d["eval"]["calibration_steps"] = 400
    for key, cap in (("mpnet", 30), ("macula", 15), ("baseline", 15)):
        d[key]["train"]["epochs"] = min(d[key]["train"]["epochs"], cap)
    d["mpnet"]["layers"] = _layers(
        {"type": "conv2d", "out": 4, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
        {"type": "conv2d", "out": 8, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
        {"type": "conv2d", "out": 16, "k": 3}, {"type": "relu"}, {"type": "maxpool2d"},
        {"type": "flatten"}, {"type": "dense", "out": 64}, {"type": "relu"}, {"type": "dense", "out": 8})
    return from_dict(d)
