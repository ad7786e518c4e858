"""Method comparison on the synthetic long-tail/Dirichlet task.

Runs fedavg, LCL-only fedskc and full fedskc over a seed list, writes the
usual run files under --out and prints a report table.

    python scripts/ordering.py --seeds 0,1,2,3,4 --out runs/ordering
    python scripts/ordering.py --set data.noise=1.1 --variant affine=fedskc:skc.gpr_affine=true
"""

import argparse
from pathlib import Path

from fedskc import report
from fedskc.config import parse_config
from fedskc.simulator import run_experiment

TASK = [
    "data.num_classes=10", "data.input_dim=32", "data.alpha=0.1", "data.sep=3.0", "data.noise=1.3",
    "fed.num_clients=10", "fed.epsilon=0.5", "fed.rounds=60", "train.epochs=5", "train.hidden=64",
    "output.record_wall_ms=false",
]
DEFAULT_VARIANTS = {
    "fedavg": ["method=fedavg"],
    "lcl_only": ["method=fedskc", "skc.gda=false", "skc.gpr=false"],
    "fedskc": ["method=fedskc"],
}


def parse_variant(text):
    name, body = text.split("=", 1)
    method, *over = body.split(":")
    return name, [f"method={method}", *over]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--out", default="runs/ordering")
    ap.add_argument("--set", action="append", default=[], help="override applied to every variant")
    ap.add_argument("--variant", action="append", default=[],
                    help="extra variant NAME=METHOD[:key=value...], added to the defaults")
    ap.add_argument("--targets", default="0.5,0.6,0.7")
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    variants = dict(DEFAULT_VARIANTS, **dict(parse_variant(v) for v in args.variant))
    paths = []
    for name, over in variants.items():
        cfg = parse_config(None, TASK + over + args.set)
        out = Path(args.out) / name
        paths += run_experiment(cfg, seeds, out)["metrics"]
        print(f"{name}: done", flush=True)

    targets = [float(t) for t in args.targets.split(",")]
    # report groups by the method column, so label each variant by its directory
    rows = [["variant"] + report.to_rows([], targets)[0][1:]]
    for name in variants:
        group = [p for p in paths if p.parent.name == name]
        s = report.summarize(group, targets)[0]
        rows.append([name] + report.to_rows([s], targets)[1][1:])
    print(report.to_text(rows), end="")


if __name__ == "__main__":
    main()
