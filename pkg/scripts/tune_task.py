"""Grid over data separation/noise: final accuracy of each method, averaged over seeds.

Used to pick a task where fedavg lands in a target accuracy band.

    python scripts/tune_task.py --sep 2,3,4 --noise 1.1,1.4,1.8 --seeds 0,1,2
"""

import argparse
import itertools

import numpy as np

from fedskc.config import parse_config
from fedskc.simulator import simulate

from ordering import DEFAULT_VARIANTS, TASK


def floats(text):
    return [float(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sep", type=floats, default=[3.0])
    ap.add_argument("--noise", type=floats, default=[1.3])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    print("sep\tnoise\t" + "\t".join(DEFAULT_VARIANTS))
    for sep, noise in itertools.product(args.sep, args.noise):
        cells = []
        for over in DEFAULT_VARIANTS.values():
            cfg = parse_config(None, TASK + over + args.set + [f"data.sep={sep}", f"data.noise={noise}"])
            cells.append(np.mean([simulate(cfg, s).metrics[-1].test_accuracy for s in seeds]))
        print(f"{sep:g}\t{noise:g}\t" + "\t".join(f"{c:.4f}" for c in cells), flush=True)


if __name__ == "__main__":
    main()
