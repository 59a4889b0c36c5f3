"""Static probe: how much does each network's epistemic variance move when an obstacle is in view?

Usage: python3 scripts/obstacle_response.py RUN_DIR [ARC]

Places each configured obstacle on the centreline 2 to 12 m ahead of a
vehicle parked on the centreline at arc length ARC, renders the view and
prints, per method, the epistemic variance relative to the calibrated
threshold and the relative change of the network input caused by the
obstacle. RUN_DIR needs the checkpoints and thresholds.json.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

from papc import config as C
from papc.dynamics import VehicleState
from papc.evaluation import Perception
from papc.render import render
from papc.training import MPNet, SteeringModel
from papc.world import make_intrinsics, make_mount, make_obstacle, make_scene, make_track

DISTANCES = (2, 3, 4, 6, 8, 12)


def main(argv):
    run = Path(argv[1])
    arc = float(argv[2]) if len(argv) > 2 else 1.0
    cfg = C.load(run / "config.json")
    thr = json.loads((run / "thresholds.json").read_text())
    mp = MPNet.load(run / "mpnet.ckpt")
    methods = {"papc": Perception("papc", SteeringModel.load(run / "macula.ckpt"), mp, cfg),
               "baseline": Perception("baseline", SteeringModel.load(run / "baseline.ckpt"), None, cfg)}
    track = make_track(cfg)
    intr, mount = make_intrinsics(cfg), make_mount(cfg)
    p, t = track.point_at(arc)
    state = VehicleState(float(p[0]), float(p[1]), math.atan2(t[1], t[0]), cfg.eval.nominal_speed, 0.0)
    pose = mount.pose_of(state)
    clear = render(make_scene(cfg, track), pose, intr)
    for name, per in methods.items():
        x0 = per.inputs(clear)
        var0 = per(clear, 0).epistemic_var
        print(f"{name}: threshold {thr[name]['threshold']:.3g}, obstacle-free variance {var0:.3g}")
        for oc in cfg.eval.obstacles:
            cells = []
            for d in DISTANCES:
                q, _ = track.point_at(arc + d)
                img = render(make_scene(cfg, track, [make_obstacle(oc, q)]), pose, intr)
                x = per.inputs(img)
                change = float(np.abs(x - x0).sum() / np.abs(x0).sum())
                ratio = per(img, 0).epistemic_var / thr[name]["threshold"]
                cells.append(f"{d:2d}m var/thr {ratio:5.2f} dx {change:4.0%}")
            print(f"  {oc.name:10s} " + " | ".join(cells))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
