"""Command-line harness: seed sweeps, theory grids, buffer benchmarking.

Configuration comes from a JSON document, command-line flags, or both
(flags win). Unknown config keys are rejected. The resolved configuration
is echoed into the run manifest so every artifact can be traced back to the
exact parameters that produced it.

Exit codes: 0 success, 2 config error, 3 convergence anomaly,
4 consistency failure. Diagnostics go to stderr (PSER_LOG=off|info|debug);
data only ever goes to files or stdout.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import os
import random
import sys
import time
from pathlib import Path

import click

from .agent import ExperimentConfig, Mode, Strategy, run_experiment
from .cliffwalk import CliffwalkSpec
from .decay import DecayConfig, DecayScheme, compute_window
from .replay import InitMode, ReplayBuffer, Transition
from .report import (TOOL_VERSION, aggregate_traces, config_hash,
                     write_aggregate_csv, write_manifest, write_runs_csv,
                     write_theory_jsonl, write_trace_csv)
from .theory import (BoundVariant, ConvergenceAnomalyError, TheoremResult,
                     expected_steps_per, expected_steps_pser_bound,
                     monte_carlo_steps)

log = logging.getLogger("pser")

EXIT_CONFIG = 2
EXIT_ANOMALY = 3
EXIT_CONSISTENCY = 4

_SCHEMA_KEYS = {
    "n", "gamma", "strategies", "seeds", "init_priority", "rho", "window",
    "eta", "epsilon", "alpha", "beta", "scheme", "step_size", "mode",
    "max_iterations", "mse_every", "convergence_tol", "output_dir",
}
_STRATEGIES = {s.value: s for s in Strategy}


class ConfigError(Exception):
    pass


class _StderrHandler(logging.Handler):
    """Resolves sys.stderr at emit time (survives stream redirection)."""

    def emit(self, record):
        try:
            sys.stderr.write(self.format(record) + "\n")
        except Exception:
            self.handleError(record)


def _setup_logging() -> None:
    level_name = os.environ.get("PSER_LOG", "off").lower()
    levels = {"off": logging.CRITICAL + 10, "info": logging.INFO,
              "debug": logging.DEBUG}
    log.setLevel(levels.get(level_name, logging.CRITICAL + 10))
    if not log.handlers:
        handler = _StderrHandler()
        handler.setFormatter(
            logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        log.addHandler(handler)
    log.propagate = False


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(doc) - _SCHEMA_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)} "
                          f"(allowed: {', '.join(sorted(_SCHEMA_KEYS))})")
    return doc


def _parse_int_list(text: str) -> list[int]:
    """Accepts '0,1,2' or a half-open range 'a:b'."""
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi)))
    return [int(x) for x in text.split(",") if x.strip()]


def _merge(file_cfg: dict, overrides: dict) -> dict:
    merged = dict(file_cfg)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _resolve_cliffwalk(cfg: dict) -> tuple[dict, list[ExperimentConfig]]:
    """Validate + fill defaults; returns (resolved echo dict, run configs)."""
    if "n" not in cfg:
        raise ConfigError("missing required key: n")
    try:
        n = int(cfg["n"])
        mode_name = str(cfg.get("mode", "appendix_b"))
        if mode_name not in ("theorem", "appendix_b"):
            raise ConfigError(f"mode must be 'theorem' or 'appendix_b', "
                              f"got {mode_name!r}")
        mode = Mode.THEOREM if mode_name == "theorem" else Mode.APPENDIX_B
        strategies = cfg.get("strategies",
                             ["uniform", "oracle", "per", "pser"])
        if isinstance(strategies, str):
            strategies = [s.strip() for s in strategies.split(",") if s.strip()]
        bad = [s for s in strategies if s not in _STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies: {bad} "
                              f"(allowed: {sorted(_STRATEGIES)})")
        seeds = cfg.get("seeds", [0])
        if isinstance(seeds, str):
            seeds = _parse_int_list(seeds)
        seeds = [int(s) for s in seeds]
        if not seeds:
            raise ConfigError("seeds must be non-empty")
        scheme_name = str(cfg.get("scheme", "max"))
        if scheme_name not in ("max", "add"):
            raise ConfigError(f"scheme must be 'max' or 'add', got {scheme_name!r}")
        init_priority = str(cfg.get("init_priority", "max"))
        gamma = cfg.get("gamma")
        spec = CliffwalkSpec(n=n, gamma=None if gamma is None else float(gamma))
        window = cfg.get("window")
        decay = DecayConfig(
            rho=float(cfg.get("rho", 0.4)),
            window=None if window is None else int(window),
            eta=None if cfg.get("eta") is None else float(cfg["eta"]),
            epsilon=None if cfg.get("epsilon") is None else float(cfg["epsilon"]),
            alpha=None if cfg.get("alpha") is None else float(cfg["alpha"]),
            beta=None if cfg.get("beta") is None else float(cfg["beta"]),
            scheme=DecayScheme(scheme_name),
        )
        step_size = cfg.get("step_size")
        base = ExperimentConfig(
            spec=spec,
            strategy=Strategy.UNIFORM,
            decay=decay,
            mode=mode,
            step_size=None if step_size is None else float(step_size),
            init_priority=init_priority,
            max_iterations=int(cfg.get("max_iterations", 1_000_000)),
            mse_every=int(cfg.get("mse_every", 100)),
            convergence_tol=float(cfg.get("convergence_tol", 1e-4)),
        ).resolved()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e

    runs = []
    for name in strategies:
        for seed in seeds:
            runs.append(ExperimentConfig(
                spec=base.spec, strategy=_STRATEGIES[name], decay=base.decay,
                mode=base.mode, step_size=base.step_size,
                init_priority=base.init_priority,
                max_iterations=base.max_iterations, mse_every=base.mse_every,
                convergence_tol=base.convergence_tol, seed=seed))
    echo = {
        "n": n,
        "gamma": base.spec.gamma,
        "strategies": list(strategies),
        "seeds": seeds,
        "init_priority": base.init_priority,
        "rho": base.decay.rho,
        "window": base.decay.window,
        "eta": base.decay.eta,
        "epsilon": base.decay.epsilon,
        "alpha": base.decay.alpha,
        "beta": base.decay.beta,
        "scheme": base.decay.scheme.value,
        "step_size": base.step_size,
        "mode": mode_name,
        "max_iterations": base.max_iterations,
        "mse_every": base.mse_every,
        "convergence_tol": base.convergence_tol,
        "output_dir": str(cfg.get("output_dir", "pser_out")),
    }
    return echo, runs


def _run_all(runs: list[ExperimentConfig], jobs: int):
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_experiment, runs))
    return [run_experiment(cfg) for cfg in runs]


@click.group()
@click.version_option(TOOL_VERSION, prog_name="pser")
def main():
    """Prioritized sequence replay: Cliffwalk experiments and theory checks."""
    _setup_logging()


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; flags override its values.")
@click.option("--n", type=int, default=None, help="Chain length.")
@click.option("--gamma", type=float, default=None,
              help="Discount (default 1 - 1/n).")
@click.option("--strategies", type=str, default=None,
              help="Comma list of uniform,oracle,per,pser.")
@click.option("--seeds", type=str, default=None,
              help="Comma list '0,1,2' or range '0:10'.")
@click.option("--init-priority", "init_priority",
              type=click.Choice(["max", "epsilon"]), default=None)
@click.option("--rho", type=float, default=None, help="Decay coefficient.")
@click.option("--window", type=int, default=None,
              help="Decay window (default: derived from rho).")
@click.option("--eta", type=float, default=None, help="Retention coefficient.")
@click.option("--epsilon", type=float, default=None, help="Priority floor.")
@click.option("--alpha", type=float, default=None,
              help="Prioritization exponent.")
@click.option("--beta", type=float, default=None,
              help="Importance-sampling exponent.")
@click.option("--scheme", type=click.Choice(["max", "add"]), default=None)
@click.option("--step-size", "step_size", type=float, default=None)
@click.option("--mode", type=click.Choice(["theorem", "appendix_b"]),
              default=None)
@click.option("--max-iterations", "max_iterations", type=int, default=None)
@click.option("--mse-every", "mse_every", type=int, default=None)
@click.option("--convergence-tol", "convergence_tol", type=float, default=None)
@click.option("--output-dir", "output_dir", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel worker processes for the seed sweep.")
@click.option("--plot/--no-plot", default=True, show_default=True,
              help="Render figures next to the CSV outputs.")
@click.option("--allow-nonconverged", is_flag=True, default=False,
              help="Exit 0 even if some runs hit the iteration budget.")
def cliffwalk(config_path, jobs, plot, allow_nonconverged, **flags):
    """Run the Cliffwalk seed sweep and write trace/aggregate CSVs."""
    started = time.perf_counter()
    try:
        cfg = _merge(_load_config_file(config_path), flags)
        echo, runs = _resolve_cliffwalk(cfg)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    outdir = Path(echo["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    log.info("running %d experiments (jobs=%d)", len(runs), jobs)
    traces = _run_all(runs, jobs)
    for t in traces:
        log.info("%s seed=%d converged_at=%s final_mse=%g",
                 t.strategy.value, t.seed, t.converged_at, t.final_mse)

    outputs = []
    for t in traces:
        name = f"trace_{t.strategy.value}_seed{t.seed}.csv"
        write_trace_csv(outdir / name, t)
        outputs.append(name)
    write_aggregate_csv(outdir / "aggregate.csv", aggregate_traces(traces))
    outputs.append("aggregate.csv")
    write_runs_csv(outdir / "runs.csv", traces)
    outputs.append("runs.csv")
    if plot:
        from .plotting import plot_cliffwalk_aggregate
        fig_name = "cliffwalk_mse.png"
        plot_cliffwalk_aggregate(
            outdir / "aggregate.csv", outdir / fig_name,
            title=f"Blind Cliffwalk, n={echo['n']}, "
                  f"{echo['init_priority']}-initialized priorities")
        outputs.append(fig_name)
    write_manifest(outdir / "manifest.json", echo,
                   seeds=echo["seeds"], outputs=outputs,
                   wall_time=time.perf_counter() - started)

    stragglers = [t for t in traces if t.converged_at is None]
    if stragglers and not allow_nonconverged:
        for t in stragglers:
            click.echo(f"non-converged: {t.strategy.value} seed={t.seed} "
                       f"final_mse={t.final_mse!r}", err=True)
        sys.exit(EXIT_ANOMALY)


@main.command()
@click.option("--n-min", type=int, default=1, show_default=True)
@click.option("--n-max", type=int, default=16, show_default=True)
@click.option("--rho", "rhos", type=float, multiple=True,
              default=(0.4,), show_default=True)
@click.option("--variant", type=click.Choice(["main_text", "appendix"]),
              default="main_text", show_default=True)
@click.option("--trials", type=int, default=0, show_default=True,
              help="Monte-Carlo trials per grid point (0 = formulas only).")
@click.option("--mc-strategy", "mc_strategy",
              type=click.Choice(["per", "pser"]), default=None,
              help="Strategy to verify by Monte Carlo (required if trials>0).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--output-dir", "output_dir", type=click.Path(),
              default="pser_theory", show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def theory(n_min, n_max, rhos, variant, trials, mc_strategy, seed, jobs,
           output_dir, plot):
    """Evaluate the convergence formulas over a grid, optionally MC-checked."""
    started = time.perf_counter()
    if n_min < 1 or n_max < n_min:
        click.echo("config error: need 1 <= n-min <= n-max", err=True)
        sys.exit(EXIT_CONFIG)
    if trials > 0 and mc_strategy is None:
        click.echo("config error: --mc-strategy required when trials > 0",
                   err=True)
        sys.exit(EXIT_CONFIG)
    if any(not 0.0 < r < 1.0 for r in rhos):
        click.echo("config error: rho values must be in (0, 1)", err=True)
        sys.exit(EXIT_CONFIG)
    bv = BoundVariant(variant)
    results = []
    try:
        for n in range(n_min, n_max + 1):
            for rho in rhos:
                mc_mean = mc_ci = None
                if trials > 0:
                    mc_mean, mc_ci = monte_carlo_steps(
                        _STRATEGIES[mc_strategy], n, trials, seed, rho=rho,
                        jobs=jobs)
                results.append(TheoremResult(
                    n=n, rho=rho, variant=bv,
                    e_per=expected_steps_per(n),
                    e_pser_bound=expected_steps_pser_bound(n, rho, bv),
                    mc_mean=mc_mean, mc_ci95=mc_ci, trials=trials, seed=seed))
                log.info("theory n=%d rho=%g done", n, rho)
    except ConvergenceAnomalyError as e:
        click.echo(f"convergence anomaly: {e}", err=True)
        sys.exit(EXIT_ANOMALY)
    except ValueError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_theory_jsonl(outdir / "theory.jsonl", results)
    outputs = ["theory.jsonl"]
    if plot:
        from .plotting import plot_theory
        plot_theory(outdir / "theory.jsonl", outdir / "theory_curves.png")
        outputs.append("theory_curves.png")
    echo = {
        "n_min": n_min, "n_max": n_max, "rho": list(rhos), "variant": variant,
        "trials": trials, "mc_strategy": mc_strategy, "seed": seed,
        "output_dir": str(output_dir),
    }
    write_manifest(outdir / "manifest.json", echo, seeds=[seed],
                   outputs=outputs, wall_time=time.perf_counter() - started)


@main.command("buffer-bench")
@click.option("--capacity", type=int, default=1 << 10, show_default=True)
@click.option("--ops", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
def buffer_bench(capacity, ops, seed, alpha):
    """Seeded mixed insert/update/sample workload with a consistency check."""
    if not 1 <= capacity <= (1 << 26):
        click.echo("config error: capacity must be in [1, 2^26]", err=True)
        sys.exit(EXIT_CONFIG)
    rng = random.Random(seed)
    buf = ReplayBuffer(capacity, alpha=alpha, beta=0.5, epsilon=1e-4)
    episode = 0
    counts = {"insert": 0, "update": 0, "sample": 0}
    started = time.perf_counter()
    for _ in range(ops):
        r = rng.random()
        if r < 0.5 or len(buf) == 0:
            if rng.random() < 0.2:
                episode += 1
            t = Transition(state=rng.randrange(1 << 16), action=rng.randrange(2),
                           reward=rng.uniform(-1.0, 1.0),
                           next_state=rng.randrange(1 << 16),
                           terminal=rng.random() < 0.1, episode_id=episode)
            mode = rng.random()
            if mode < 0.4:
                buf.insert(t, InitMode.MAX_PRIO)
            elif mode < 0.7:
                buf.insert(t, InitMode.CURRENT_TD, current_td=rng.uniform(-2, 2))
            else:
                buf.insert(t, InitMode.FIXED, fixed_priority=rng.random())
            counts["insert"] += 1
        elif r < 0.8:
            buf.update_priority(rng.randrange(len(buf)), rng.random() * 2.0)
            counts["update"] += 1
        else:
            if buf.total_mass > 0:
                buf.sample(min(8, len(buf)), rng)
            counts["sample"] += 1
    elapsed = time.perf_counter() - started
    ok = buf.check_consistency(rel_tol=1e-9)
    doc = {
        "capacity": capacity,
        "ops": ops,
        "seed": seed,
        "alpha": alpha,
        "elapsed_sec": elapsed,
        "ops_per_sec": ops / elapsed if elapsed > 0 else None,
        "consistency_ok": ok,
        "deterministic": {
            "counts": counts,
            "size": len(buf),
            "total_mass": repr(buf.total_mass),
            "max_raw_priority": repr(buf.max_raw_priority()),
            "final_episode": episode,
        },
    }
    click.echo(json.dumps(doc, indent=2))
    if not ok:
        sys.exit(EXIT_CONSISTENCY)


if __name__ == "__main__":
    main()
