"""Held-out pixel error of spline-coefficient vs direct focal-point regression.

Usage: python3 scripts/spline_vs_direct.py RUN_DIR [N_SEEDS]

RUN_DIR must contain config.json and dataset/ (``papc gen-data``).
"""

import sys
from pathlib import Path

from papc import config as C
from papc.dataset import load_dataset, split
from papc.training import pixel_mse, train_mpnet


def main(argv):
    run = Path(argv[1])
    n_seeds = int(argv[2]) if len(argv) > 2 else 3
    cfg = C.load(run / "config.json")
    train, test = split(load_dataset(run / "dataset"), cfg.data.test_fraction, cfg.seed)
    print(f"{len(train)} train / {len(test)} test frames, {cfg.mpnet.train.epochs} epochs")
    print("seed variant  mse@4   mse@8   mse@16  (px^2 per focal point)")
    for seed in range(n_seeds):
        for variant in ("spline", "direct"):
            model, _ = train_mpnet(train, cfg, variant, seed=seed)
            errs = [pixel_mse(model, test, n) for n in (4, 8, 16)]
            print(f"{seed:4d} {variant:7s} " + " ".join(f"{e:7.3f}" for e in errs), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
