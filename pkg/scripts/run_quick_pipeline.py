"""Run the whole pipeline with the --quick profile and print the detection table.

Usage: python3 scripts/run_quick_pipeline.py OUT_DIR [SEED]
"""

import json
import sys
import time
from pathlib import Path

from papc import cli

STAGES = ("gen-track", "gen-data", "train-mpnet", "train-macula", "train-baseline", "calibrate", "compare")


def main(argv):
    out = Path(argv[1] if len(argv) > 1 else "run_quick")
    seed = argv[2] if len(argv) > 2 else "0"
    for stage in STAGES:
        t0 = time.perf_counter()
        code = cli.run([stage, "--quick", "--seed", seed, "--out", str(out)])
        print(f"{stage:15s} exit {code} in {time.perf_counter() - t0:6.1f} s", flush=True)
        if code:
            return code
    table = json.loads((out / "results.json").read_text())
    print("thresholds", table["thresholds"])
    for name, row in table["obstacles"].items():
        print(f"{name:10s} " + "  ".join(
            f"{m} median {r['median']:.2f} m ({r['n_detected']}/{r['n_trials']} detected)" for m, r in row.items()))
    for m, r in table["false_detection"].items():
        print(f"{m:8s} obstacle-free: {r['false_detections']}/{r['episodes']} false detections")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
