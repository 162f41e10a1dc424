"""Aggregate trace CSVs into plot-ready tables and render figures.

Produces a long-format table (method, seed, t, metric, value) covering
cumulative regret, violation, strong violation, shift, and running
average utility (-cumulative objective / t), a grouped table of
mean/std per (method, t, metric), and PNG figures alongside the
delimited output.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import InputError
from .metrics import CSV_FLOAT_FMT, read_trace_csv

LONG_METRICS = ("R", "V", "Vplus", "S", "avg_utility")
_COLUMN_OF = {"R": "R_t", "V": "V_t", "Vplus": "Vplus_t", "S": "S_t"}


def collect_traces(trace_dir) -> list[dict]:
    paths = sorted(Path(trace_dir).glob("trace_*.csv"))
    if not paths:
        raise InputError(f"no trace_*.csv files found under {trace_dir}")
    return [read_trace_csv(p) for p in paths]


def long_rows(trace: dict) -> list[tuple]:
    """Explode one trace into (method, seed, t, metric, value) rows."""
    T = len(trace["t"])
    if T == 0:
        return []
    method = trace["method"][0]
    seed = int(trace["seed"][0])
    ts = trace["t"]
    rows = []
    for metric, col in _COLUMN_OF.items():
        for t, v in zip(ts, trace[col]):
            rows.append((method, seed, int(t), metric, float(v)))
    # Average utility per elapsed round; sign follows minimizing -utility.
    avg_util = -np.cumsum(trace["f_true"]) / ts
    for t, v in zip(ts, avg_util):
        rows.append((method, seed, int(t), "avg_utility", float(v)))
    return rows


def write_report(trace_dir, out_dir=None, figures: bool = True) -> dict:
    """Write long.csv, grouped.csv, and figures; returns output paths."""
    out_dir = Path(out_dir if out_dir is not None else trace_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traces = collect_traces(trace_dir)
    rows = [r for trace in traces for r in long_rows(trace)]

    long_path = out_dir / "long.csv"
    with open(long_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "seed", "t", "metric", "value"])
        for r in rows:
            writer.writerow([r[0], r[1], r[2], r[3], CSV_FLOAT_FMT % r[4]])

    grouped = defaultdict(list)
    for method, _seed, t, metric, value in rows:
        grouped[(method, t, metric)].append(value)
    grouped_path = out_dir / "grouped.csv"
    with open(grouped_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "t", "metric", "mean", "std", "n"])
        for (method, t, metric), values in sorted(grouped.items()):
            arr = np.asarray(values)
            writer.writerow([method, t, metric,
                             CSV_FLOAT_FMT % arr.mean(),
                             CSV_FLOAT_FMT % arr.std(),
                             len(values)])

    outputs = {"long": long_path, "grouped": grouped_path}
    if figures and rows:
        outputs.update(render_figures(grouped, out_dir))
    return outputs


def _series(grouped, metric):
    """method -> (t, mean, std) arrays for one metric."""
    per_method = defaultdict(list)
    for (method, t, met), values in grouped.items():
        if met == metric:
            arr = np.asarray(values)
            per_method[method].append((t, arr.mean(), arr.std()))
    out = {}
    for method, triples in per_method.items():
        triples.sort()
        t, mean, std = (np.array(v) for v in zip(*triples))
        out[method] = (t, mean, std)
    return out


def _panel(ax, grouped, metric, ylabel):
    for method, (t, mean, std) in sorted(_series(grouped, metric).items()):
        ax.plot(t, mean, label=method)
        ax.fill_between(t, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("round")
    ax.set_ylabel(ylabel)
    ax.legend()


def render_figures(grouped, out_dir) -> dict:
    """Regret/violation and utility/shift panels, mean with a std band."""
    out_dir = Path(out_dir)
    outputs = {}

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    _panel(axes[0], grouped, "R", "cumulative regret")
    _panel(axes[1], grouped, "V", "cumulative violation")
    fig.tight_layout()
    path = out_dir / "fig_regret_violation.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    outputs["fig_regret_violation"] = path

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    _panel(axes[0], grouped, "avg_utility", "average utility")
    _panel(axes[1], grouped, "S", "cumulative shift")
    fig.tight_layout()
    path = out_dir / "fig_utility_shift.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    outputs["fig_utility_shift"] = path
    return outputs
