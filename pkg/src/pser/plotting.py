"""Figure rendering for the emitted CSV/JSONL artifacts.

The harness writes delimited data first; these helpers turn that data into
PNG figures next to it. Rendering goes through an explicit Agg canvas (no
global pyplot state) and strips the PNG date field so identical inputs
produce byte-identical images.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_STRATEGY_COLORS = {
    "oracle": "tab:green",
    "pser": "tab:orange",
    "per": "tab:blue",
    "uniform": "tab:gray",
}


def _save(fig: Figure, path: Path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Date": None})


def plot_cliffwalk_aggregate(aggregate_csv: Path, out_path: Path,
                             title: str = "") -> None:
    """MSE-vs-iteration curves with 68% bands, one line per strategy."""
    series: dict[str, dict[str, list[float]]] = {}
    with open(aggregate_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            s = series.setdefault(row["strategy"],
                                  {"it": [], "mean": [], "lo": [], "hi": []})
            s["it"].append(float(row["iteration"]))
            s["mean"].append(float(row["mean_mse"]))
            s["lo"].append(float(row["ci68_lo"]))
            s["hi"].append(float(row["ci68_hi"]))
    fig = Figure(figsize=(7, 4.5))
    ax = fig.subplots()
    for strategy in sorted(series):
        s = series[strategy]
        color = _STRATEGY_COLORS.get(strategy)
        ax.plot(s["it"], s["mean"], label=strategy, color=color)
        ax.fill_between(s["it"], s["lo"], s["hi"], alpha=0.2, color=color,
                        linewidth=0)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSE vs ground-truth Q")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def plot_theory(jsonl_path: Path, out_path: Path) -> None:
    """Expected iterations to convergence vs chain length, log scale."""
    records = []
    with open(jsonl_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    fig = Figure(figsize=(7, 4.5))
    ax = fig.subplots()
    per = sorted({(r["n"], r["e_per"]) for r in records})
    ax.plot([p[0] for p in per], [p[1] for p in per], "o-",
            color="tab:blue", label="proportional (exact)")
    by_rho: dict[float, list[tuple[int, float]]] = {}
    for r in records:
        by_rho.setdefault(r["rho"], []).append((r["n"], r["e_pser_bound"]))
    for rho in sorted(by_rho):
        pts = sorted(by_rho[rho])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "s--",
                label=f"decayed bound, rho={rho}")
    mc = sorted((r["n"], r["mc_mean"], r["mc_ci95_lo"], r["mc_ci95_hi"])
                for r in records if r["mc_mean"] is not None)
    if mc:
        ax.errorbar([p[0] for p in mc], [p[1] for p in mc],
                    yerr=[[p[1] - p[2] for p in mc], [p[3] - p[1] for p in mc]],
                    fmt="x", color="tab:red", label="Monte Carlo mean")
    ax.set_yscale("log")
    ax.set_xlabel("number of states")
    ax.set_ylabel("expected iterations to convergence")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
