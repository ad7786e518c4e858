"""Comparison tables from metrics CSV files."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simulator import METRICS_HEADER, rounds_to_target


class ReportError(ValueError):
    pass


@dataclass
class MethodSummary:
    method: str
    seeds: list[int]
    final_mean: float
    final_std: float
    rounds: dict[float, int | None]


def read_metrics(path) -> list[dict]:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ReportError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def target_label(t: float) -> str:
    return f"R_{round(t * 100, 4):g}%"


def summarize(paths, targets) -> list[MethodSummary]:
    """Per-method final accuracy (population mean/std over seeds) and rounds-to-target.

    Rounds-to-target is read off the seed-averaged accuracy curve.
    """
    if not paths:
        raise ReportError("no metrics files given")
    curves: dict[str, dict[int, list[float]]] = defaultdict(dict)
    lengths: dict[str, set] = defaultdict(set)
    for p in paths:
        rows = read_metrics(p)
        if not rows:
            raise ReportError(f"{p}: no rows")
        method, seed = rows[0]["method"], int(rows[0]["seed"])
        curves[method][seed] = [float(r["test_acc"]) for r in rows]
        lengths[method].add((len(rows), str(p)))
    out = []
    for method in sorted(curves):
        if len({n for n, _ in lengths[method]}) > 1:
            names = ", ".join(sorted(f for _, f in lengths[method]))
            raise ReportError(f"{method}: metrics files disagree on round count ({names})")
        seeds = sorted(curves[method])
        acc = np.array([curves[method][s] for s in seeds])
        finals = acc[:, -1]
        mean_curve = acc.mean(axis=0)
        out.append(MethodSummary(method, seeds, float(finals.mean()), float(finals.std()),
                                 {t: rounds_to_target(mean_curve, t) for t in targets}))
    return out


def to_rows(summaries: list[MethodSummary], targets) -> list[list[str]]:
    rows = [["method", "seeds", "final_acc_mean", "final_acc_std"] + [target_label(t) for t in targets]]
    for s in summaries:
        rows.append([s.method, str(len(s.seeds)), f"{s.final_mean:.4f}", f"{s.final_std:.4f}"]
                    + ["-" if s.rounds[t] is None else str(s.rounds[t]) for t in targets])
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def to_text(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows) + "\n"
