"""Artifact writers: trace/aggregate CSVs, theory JSON-lines, run manifest.

All files are deterministic functions of (resolved config, seeds): floats
are rendered with shortest-roundtrip repr, line endings are LF, and rows
follow a fixed order. The manifest additionally records wall time, which is
run metadata rather than a data output, so determinism guarantees apply to
the files the manifest lists, not to the manifest itself.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .agent import ExperimentTrace
from .theory import TheoremResult

TOOL_VERSION = "0.1.0"


@dataclass(frozen=True)
class AggregateRow:
    iteration: int
    strategy: str
    mean_mse: float
    ci68_lo: float
    ci68_hi: float
    n_seeds: int


def write_trace_csv(path: Path, trace: ExperimentTrace) -> None:
    """Per-run trace: header ``iteration,mse``, one row per checkpoint."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "mse"])
        for it, m in zip(trace.iterations, trace.mse_values):
            w.writerow([it, repr(m)])


def aggregate_traces(traces: list[ExperimentTrace]) -> list[AggregateRow]:
    """Mean MSE and 68% band per traced iteration, grouped by strategy.

    The band is mean +/- one sample standard deviation across the seeds
    that are still running at that iteration (converged runs stop tracing,
    hence the per-row seed count).
    """
    by_strategy: dict[str, list[ExperimentTrace]] = {}
    for t in traces:
        by_strategy.setdefault(t.strategy.value, []).append(t)
    rows: list[AggregateRow] = []
    for strategy in sorted(by_strategy):
        group = by_strategy[strategy]
        per_iteration: dict[int, list[float]] = {}
        for t in group:
            for it, m in zip(t.iterations, t.mse_values):
                per_iteration.setdefault(it, []).append(m)
        for it in sorted(per_iteration):
            vals = per_iteration[it]
            k = len(vals)
            mean = sum(vals) / k
            if k > 1:
                std = math.sqrt(sum((v - mean) ** 2 for v in vals) / (k - 1))
            else:
                std = 0.0
            rows.append(AggregateRow(iteration=it, strategy=strategy,
                                     mean_mse=mean, ci68_lo=mean - std,
                                     ci68_hi=mean + std, n_seeds=k))
    return rows


def write_aggregate_csv(path: Path, rows: list[AggregateRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "strategy", "mean_mse", "ci68_lo", "ci68_hi",
                    "n_seeds"])
        for r in rows:
            w.writerow([r.iteration, r.strategy, repr(r.mean_mse),
                        repr(r.ci68_lo), repr(r.ci68_hi), r.n_seeds])


def write_runs_csv(path: Path, traces: list[ExperimentTrace]) -> None:
    """Per-run summary: convergence iteration and final error."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "seed", "converged_at", "iterations_run",
                    "final_mse"])
        for t in sorted(traces, key=lambda t: (t.strategy.value, t.seed)):
            w.writerow([t.strategy.value, t.seed,
                        "" if t.converged_at is None else t.converged_at,
                        t.iterations_run, repr(t.final_mse)])


def theorem_result_to_json(r: TheoremResult) -> dict:
    return {
        "n": r.n,
        "rho": r.rho,
        "variant": r.variant.value,
        "e_per": r.e_per,
        "e_pser_bound": r.e_pser_bound,
        "mc_mean": r.mc_mean,
        "mc_ci95_lo": None if r.mc_ci95 is None else r.mc_ci95[0],
        "mc_ci95_hi": None if r.mc_ci95 is None else r.mc_ci95[1],
        "trials": r.trials,
        "seed": r.seed,
    }


def write_theory_jsonl(path: Path, results: list[TheoremResult]) -> None:
    with open(path, "w", newline="") as fh:
        for r in results:
            fh.write(json.dumps(theorem_result_to_json(r)))
            fh.write("\n")


def config_hash(resolved_config: dict) -> str:
    """Content digest of the resolved configuration (canonical JSON)."""
    canonical = json.dumps(resolved_config, sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(path: Path, resolved_config: dict, seeds: list[int],
                   outputs: list[str], wall_time: float) -> None:
    """Run manifest: config echo + digest, seed list, outputs, timing."""
    doc = {
        "config_hash": config_hash(resolved_config),
        "config": resolved_config,
        "seeds": seeds,
        "outputs": outputs,
        "tool_version": TOOL_VERSION,
        "wall_time": wall_time,
    }
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
