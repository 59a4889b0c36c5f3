"""Drive one obstacle-free lap with each network's mean steering (gate disabled).

Usage: python3 scripts/closed_loop_lap.py RUN_DIR

Prints the outcome, distance covered, largest lateral offset and the
epistemic variance range for PAPC and for the full-image baseline.
"""

import math
import sys
from pathlib import Path

import numpy as np

from papc import config as C
from papc.dynamics import track_frame
from papc.evaluation import Perception, run_episode, trial_setup
from papc.training import MPNet, SteeringModel
from papc.world import make_scene, make_track, seed_for


def main(argv):
    run = Path(argv[1])
    cfg = C.load(run / "config.json")
    track = make_track(cfg)
    start, _, _ = trial_setup(cfg, -1, track)
    steps = int(math.ceil(1.05 * track.total_length / cfg.eval.nominal_speed / cfg.mpc.dt))
    mp = MPNet.load(run / "mpnet.ckpt")
    methods = {"papc": Perception("papc", SteeringModel.load(run / "macula.ckpt"), mp, cfg),
               "baseline": Perception("baseline", SteeringModel.load(run / "baseline.ckpt"), None, cfg)}
    for name, per in methods.items():
        ep = run_episode(per, make_scene(cfg, track), math.inf, cfg, start, steps, seed_for(cfg.seed, "calib"),
                         stop_arc=start_arc_after_lap(cfg, track))
        lat = [abs(track_frame(track, (s.pos_u, s.pos_v))[1]) for s in ep.states]
        v = ep.epistemic
        print(f"{name:8s} outcome {ep.outcome:8s} over {len(ep.states) * cfg.mpc.dt * cfg.eval.nominal_speed:5.1f} m "
              f"(lap {track.total_length:.1f} m), max |lateral| {max(lat):.2f} of {track.half_width} m, "
              f"epistemic median {np.median(v):.2g} max {v.max():.2g}", flush=True)
    return 0


def start_arc_after_lap(cfg, track):
    # the start arc again, reached only after a full lap
    return cfg.eval.start_arc + track.total_length - 0.5


if __name__ == "__main__":
    sys.exit(main(sys.argv))
