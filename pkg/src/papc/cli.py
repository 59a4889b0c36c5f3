"""Command line entry point: ``papc <command> --config cfg.json --out run/``.

All commands read and write inside ``--out``. Exit codes: 0 success,
1 usage or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .config import ConfigError, RunConfig
from .dataset import load_dataset, generate_dataset, split
from .dynamics import save_obstacles, save_track
from .evaluation import (Perception, calibrate, compare, dump_activation_maps, encode_pgm, run_trial)
from .training import MPNet, SteeringModel, roi_stacks, train_baseline, train_macula, train_mpnet
from .world import make_obstacle, make_track

log = logging.getLogger("papc")

COMMANDS = ("gen-track", "gen-data", "train-mpnet", "train-macula", "train-baseline", "calibrate",
            "evaluate", "compare", "dump-activations")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="papc", description="Attention-based predictive control pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON run configuration (defaults: oval track)")
    p.add_argument("--out", type=Path, default=Path("run"), help="output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--quick", action="store_true", help="desk-scale profile: small nets, 500 frames")
    return p


def resolve_config(args) -> RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.from_dict({"track": {"kind": "oval"}})
    if args.quick:
        cfg = config_mod.quick(cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run {hint} first")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _splits(cfg: RunConfig, out: Path):
    frames = load_dataset(_require(out / "dataset", "gen-data"))
    return split(frames, cfg.data.test_fraction, cfg.seed)


def _epoch_logger(name: str):
    return lambda row: log.info("%s epoch %d: %s", name, row["epoch"],
                                ", ".join(f"{k}={v:.4g}" for k, v in row.items() if k != "epoch"))


def cmd_gen_track(cfg, out):
    save_track(make_track(cfg), out / "track.json")
    save_obstacles([make_obstacle(o) for o in cfg.eval.obstacles], out / "obstacles.json")


def cmd_gen_data(cfg, out):
    last = [0]

    def progress(i, n):
        if i * 10 // n > last[0]:
            last[0] = i * 10 // n
            log.info("frames %d/%d", i, n)

    generate_dataset(cfg, out_dir=out / "dataset", progress=progress)


def cmd_train_mpnet(cfg, out):
    train, test = _splits(cfg, out)
    model, res = train_mpnet(train, cfg, "spline", test_frames=test, progress=_epoch_logger("mpnet"))
    model.save(out / "mpnet.ckpt", res.final)
    res.write_csv(out / "mpnet_metrics.csv")


def _load_mpnet(out):
    return MPNet.load(_require(out / "mpnet.ckpt", "train-mpnet"))


def cmd_train_macula(cfg, out):
    train, test = _splits(cfg, out)
    model, res = train_macula(train, _load_mpnet(out), cfg, test_frames=test, progress=_epoch_logger("macula"))
    model.save(out / "macula.ckpt", res.final)
    res.write_csv(out / "macula_metrics.csv")


def cmd_train_baseline(cfg, out):
    train, test = _splits(cfg, out)
    model, res = train_baseline(train, cfg, test_frames=test, progress=_epoch_logger("baseline"))
    model.save(out / "baseline.ckpt", res.final)
    res.write_csv(out / "baseline_metrics.csv")


def _perceptions(cfg, out):
    mpnet = _load_mpnet(out)
    macula = SteeringModel.load(_require(out / "macula.ckpt", "train-macula"), "macula")
    base = SteeringModel.load(_require(out / "baseline.ckpt", "train-baseline"), "baseline")
    return mpnet, macula, base


def cmd_calibrate(cfg, out):
    mpnet, macula, base = _perceptions(cfg, out)
    report = {"k_thr": cfg.eval.k_thr}
    for name, model, mp in (("papc", macula, mpnet), ("baseline", base, None)):
        thr, ep = calibrate(Perception(name, model, mp, cfg), cfg)
        ep.write_csv(out / f"calibration_{name}.csv")
        report[name] = {"threshold": thr, "max_epistemic_var": float(ep.epistemic.max()),
                        "frames": len(ep.rows), "outcome": ep.outcome}
        log.info("%s threshold %.3g (max nominal %.3g over %d frames)", name, thr, ep.epistemic.max(), len(ep.rows))
    _write_json(out / "thresholds.json", report)


def _thresholds(out) -> dict:
    rep = json.loads(_require(out / "thresholds.json", "calibrate").read_text())
    return {m: rep[m]["threshold"] for m in ("papc", "baseline")}


def cmd_evaluate(cfg, out):
    mpnet, macula, _ = _perceptions(cfg, out)
    thr = _thresholds(out)["papc"]
    ep = run_trial(Perception("papc", macula, mpnet, cfg), cfg, thr, 0, 0 if cfg.eval.obstacles else None)
    ep.write_csv(out / "episode.csv")
    _write_json(out / "episode_summary.json",
                {"outcome": ep.outcome, "detected": ep.detected, "detection_distance": ep.detection_distance,
                 "threshold": thr, "frames": len(ep.rows)})
    log.info("outcome %s, detection distance %.2f m", ep.outcome, ep.detection_distance)


def cmd_compare(cfg, out):
    mpnet, macula, base = _perceptions(cfg, out)
    table = compare(cfg, mpnet, macula, base, _thresholds(out), out,
                    progress=lambda i, n: log.info("episode %d/%d", i, n))
    _write_json(out / "results.json", table)
    for name, row in table["obstacles"].items():
        log.info("%-10s papc median %.2f m | baseline median %.2f m", name, row["papc"]["median"],
                 row["baseline"]["median"])


def cmd_dump_activations(cfg, out):
    mpnet = _load_mpnet(out)
    macula = SteeringModel.load(_require(out / "macula.ckpt", "train-macula"), "macula")
    frames = load_dataset(_require(out / "dataset", "gen-data"))
    stack = roi_stacks([frames[0].image], mpnet, cfg)[0]
    adir = out / "activations"
    adir.mkdir(parents=True, exist_ok=True)
    for j, maps in enumerate(dump_activation_maps(macula, stack)):
        for i, m in enumerate(maps):
            (adir / f"pool{j + 1}_roi{i}.pgm").write_bytes(encode_pgm(m))


HANDLERS = {"gen-track": cmd_gen_track, "gen-data": cmd_gen_data, "train-mpnet": cmd_train_mpnet,
            "train-macula": cmd_train_macula, "train-baseline": cmd_train_baseline, "calibrate": cmd_calibrate,
            "evaluate": cmd_evaluate, "compare": cmd_compare, "dump-activations": cmd_dump_activations}


def run(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args = make_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:     # --help
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"papc: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"papc: cannot read config: {exc}", file=sys.stderr)
        return 1
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        config_mod.dump(cfg, out / "config.json")
        HANDLERS[args.command](cfg, out)
    except Exception as exc:   # runtime failures map to exit code 2
        log.error("%s failed: %s: %s", args.command, type(exc).__name__, exc)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
