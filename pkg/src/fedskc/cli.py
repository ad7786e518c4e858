"""Command-line entry point: ``fedskc {gen-data,run,report,theory}``.

Exit codes: 0 success, 1 invalid input (config, files), 2 runtime abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .config import ConfigValidationError, parse_config
from .simulator import TrainingAborted, atomic_write, build_federation, run_experiment, save_manifest
from .theory import RateConditionError, TheoryConstants, theorem1_drop, theorem2_eta_max, theorem3_min_rounds

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


def _seed_list(text: str | None) -> list[int] | None:
    if not text:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigValidationError(f"--seeds: expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigValidationError(f"--targets: expected comma-separated numbers, got {text!r}") from exc


def _load(args):
    return parse_config(args.config, args.set or [])


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output.out_dir)
    for seed in _seed_list(args.seeds) or [cfg.seed]:
        fed = build_federation(cfg, seed)
        save_manifest(fed, out / f"manifest_seed{seed}.json")
        assign = np.full(sum(len(c) for c in fed.clients), -1, dtype=np.int64)
        for c in fed.clients:
            assign[c.indices] = c.client_id
        np.savez(out / f"data_seed{seed}.npz",
                 client_x=np.concatenate([c.x for c in fed.clients]),
                 client_y=np.concatenate([c.y for c in fed.clients]),
                 client_id=np.concatenate([np.full(len(c), c.client_id) for c in fed.clients]),
                 test_x=fed.test.x, test_y=fed.test.y)
        print(f"seed {seed}: {len(fed.clients)} clients, sizes {[len(c) for c in fed.clients]}, "
              f"checksum {fed.manifest.checksum}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    written = run_experiment(cfg, _seed_list(args.seeds), args.out)
    for p in written["metrics"]:
        print(p)
    if written["summary"] is not None:
        print(written["summary"])
    return EXIT_OK


def cmd_report(args) -> int:
    targets = _float_list(args.targets)
    summaries = report_mod.summarize(args.metrics, targets)
    rows = report_mod.to_rows(summaries, targets)
    text = report_mod.to_text(rows)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        atomic_write(out / "report.csv", report_mod.to_csv(rows))
        atomic_write(out / "report.txt", text)
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = _load(args)
    t = cfg.theory
    k = TheoryConstants(L1=t.L1, L2=t.L2, B=t.B, sigma2=t.sigma2, E=cfg.train.epochs,
                        C=cfg.data.num_classes, M=cfg.skc.neighbors, eta=cfg.train.eta)
    eta_max = theorem2_eta_max(k)
    try:
        rounds = str(theorem3_min_rounds(k, t.xi, t.loss0, t.loss_star))
    except RateConditionError as exc:
        rounds = f"- ({exc})"
    rows = [
        ("quantity", "value"),
        ("eta", f"{k.eta:g}"),
        ("eta_max", f"{eta_max.eta:.6g}" + ("" if eta_max.admissible else " (no admissible rate)")),
        ("drop_bound_per_round", f"{theorem1_drop(k):.6g}"),
        (f"min_rounds(xi={t.xi:g})", rounds),
    ]
    w = max(len(a) for a, _ in rows)
    for a, b in rows:
        print(f"{a.ljust(w)}  {b}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedskc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, repeatable")
        p.add_argument("--out", help="output directory")
        if seeds:
            p.add_argument("--seeds", help="comma-separated seed list")

    common(sub.add_parser("gen-data", help="generate and partition data, write manifests"))
    common(sub.add_parser("run", help="run an experiment"))
    common(sub.add_parser("theory", help="print convergence-bound table"), seeds=False)
    rp = sub.add_parser("report", help="compare metrics files")
    rp.add_argument("metrics", nargs="+", help="metrics CSV files")
    rp.add_argument("--targets", default="0.5", help="comma-separated accuracy targets in [0, 1]")
    rp.add_argument("--out", help="directory for report.csv / report.txt")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "run": cmd_run, "report": cmd_report, "theory": cmd_theory}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigValidationError, report_mod.ReportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingAborted as exc:
        print(f"aborted: {exc} (client {exc.client}, round {exc.round})", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
