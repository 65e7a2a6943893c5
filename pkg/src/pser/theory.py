"""Closed-form expected convergence steps and their Monte-Carlo checks.

Plain proportional prioritization on the n-state Cliffwalk converges in
``1 + (2^(n+1) - 2) * (1 - 1/2^(n-1))`` expected replay steps; with backward
decay at coefficient rho the expectation is bounded by
``n/(1-rho) - (rho - rho^(n+1))/(1-rho)^2``. Two published statements of the
decayed bound disagree (the variant in the appendix substitutes 2*rho and
carries an n(n+1)/2 special case at rho = 0.5, while its own derivation
matches the main formula); both are implemented and the main formula is the
default. Monte-Carlo verification replays the exact protocol over many
seeds and reports a normal-approximation confidence interval.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass
from enum import Enum

from .agent import ExperimentConfig, Mode, Strategy, run_experiment
from .cliffwalk import CliffwalkSpec
from .decay import DecayConfig

MAX_FORMULA_N = 50        # 2^(n+1) stays well inside float range
MC_BUDGET = 1_000_000     # generous per-trial step cap; exceeding it is anomalous


class BoundVariant(Enum):
    MAIN_TEXT = "main_text"
    APPENDIX = "appendix"


class ConvergenceAnomalyError(RuntimeError):
    """A Monte-Carlo trial failed to converge within the step budget."""


@dataclass(frozen=True)
class TheoremResult:
    """One grid point of the convergence-rate comparison."""

    n: int
    rho: float
    variant: BoundVariant
    e_per: float
    e_pser_bound: float
    mc_mean: float | None = None
    mc_ci95: tuple[float, float] | None = None
    trials: int = 0
    seed: int = 0


def expected_steps_per(n: int) -> float:
    """Expected replay steps to exact convergence, plain prioritization."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > MAX_FORMULA_N:
        raise ValueError(f"n must be <= {MAX_FORMULA_N} (overflow guard), got {n}")
    return 1.0 + (2.0 ** (n + 1) - 2.0) * (1.0 - 1.0 / 2.0 ** (n - 1))


def expected_steps_per_interval_sum(n: int) -> float:
    """Same expectation as the per-interval sum (independent cross-check)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > MAX_FORMULA_N:
        raise ValueError(f"n must be <= {MAX_FORMULA_N} (overflow guard), got {n}")
    total = 1.0
    transitions = 2.0 ** (n + 1) - 2.0
    for i in range(2, n + 1):
        total += transitions / 2.0 ** (i - 1)
    return total


def pser_bound_double_sum(n: int, rho: float) -> float:
    """Brute-force double sum sum_i sum_{k=0..n-i} rho^k (bound oracle)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    return sum(rho**k for i in range(1, n + 1) for k in range(0, n - i + 1))


def expected_steps_pser_bound(n: int, rho: float,
                              variant: BoundVariant = BoundVariant.MAIN_TEXT) -> float:
    """Upper bound on expected steps with backward decay at ``rho``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > MAX_FORMULA_N:
        raise ValueError(f"n must be <= {MAX_FORMULA_N} (overflow guard), got {n}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if variant is BoundVariant.MAIN_TEXT:
        return n / (1.0 - rho) - (rho - rho ** (n + 1)) / (1.0 - rho) ** 2
    # appendix statement, written in terms of 2*rho with a removable
    # singularity at rho = 0.5
    if abs(rho - 0.5) < 1e-9:
        return n * (n + 1) / 2.0
    r = 2.0 * rho
    return n / (1.0 - r) - (r - r ** (n + 1)) / (1.0 - r) ** 2


def theorem_config(strategy: Strategy, n: int, seed: int, rho: float = 0.4,
                   scheme=None, window: int | None = None,
                   max_iterations: int = MC_BUDGET) -> ExperimentConfig:
    """Exact-protocol experiment config used by the Monte-Carlo checks."""
    decay_kwargs = {"rho": rho}
    if scheme is not None:
        decay_kwargs["scheme"] = scheme
    if window is not None:
        decay_kwargs["window"] = window
    return ExperimentConfig(
        spec=CliffwalkSpec(n=n),
        strategy=strategy,
        decay=DecayConfig(**decay_kwargs),
        mode=Mode.THEOREM,
        max_iterations=max_iterations,
        seed=seed,
    )


def _trial_steps(cfg: ExperimentConfig) -> int:
    trace = run_experiment(cfg)
    if trace.converged_at is None:
        raise ConvergenceAnomalyError(
            f"trial seed={cfg.seed} n={cfg.spec.n} strategy={cfg.strategy.value} "
            f"did not converge within {cfg.max_iterations} steps")
    return trace.converged_at


def monte_carlo_steps(strategy: Strategy, n: int, trials: int, seed: int,
                      rho: float = 0.4, jobs: int = 1,
                      budget: int = MC_BUDGET) -> tuple[float, tuple[float, float]]:
    """Mean steps-to-convergence over seeded trials with a 95% normal CI.

    Trial i runs with seed ``seed + i``; results are independent of ``jobs``.
    Raises ConvergenceAnomalyError if any trial exhausts the budget.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    configs = [theorem_config(strategy, n, seed + i, rho=rho,
                              max_iterations=budget) for i in range(trials)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            steps = list(pool.map(_trial_steps, configs, chunksize=256))
    else:
        steps = [_trial_steps(c) for c in configs]
    mean = sum(steps) / trials
    if trials > 1:
        var = sum((s - mean) ** 2 for s in steps) / (trials - 1)
        half = 1.96 * math.sqrt(var / trials)
    else:
        half = 0.0
    return mean, (mean - half, mean + half)
