"""Release acceptance suite.

One test per criterion, each printed as a pass/fail line (run with
``pytest -s tests/test_acceptance.py -v`` to watch them live). Tolerances
are fixed here, not configurable: they are the release gate.
"""

import hashlib
import json
import random
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from pser.agent import ExperimentConfig, Mode, Strategy, run_experiment
from pser.cli import main as cli_main
from pser.cliffwalk import CliffwalkSpec
from pser.decay import DecayConfig, compute_window
from pser.replay import InitMode, ReplayBuffer, Transition
from pser.sumtree import SumTree
from pser.theory import (BoundVariant, expected_steps_per,
                         expected_steps_per_interval_sum,
                         expected_steps_pser_bound, monte_carlo_steps,
                         pser_bound_double_sum)

from reference_impl import linear_scan_find, naive_decay_add, naive_decay_max


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"[criterion {num}] {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" | {detail}"
    print(line, flush=True)


def test_criterion_1_per_convergence_matches_formula():
    """Monte-Carlo mean steps match the closed form within 2% for n=2..6."""
    started = time.perf_counter()
    worst = 0.0
    details = []
    for n in range(2, 7):
        mean, _ = monte_carlo_steps(Strategy.PER, n, 10_000, seed=1000 + n)
        formula = expected_steps_per(n)
        rel = abs(mean - formula) / formula
        worst = max(worst, rel)
        details.append(f"n={n}: {mean:.2f} vs {formula:.2f} ({rel:.2%})")
    elapsed = time.perf_counter() - started
    ok = worst < 0.02
    report(1, "exact-protocol PER mean steps vs formula (2% rel, n=2..6)",
           ok, f"worst {worst:.2%}; {'; '.join(details)}; {elapsed:.0f}s")
    assert ok


def test_criterion_2_pser_bound_holds():
    """MC mean <= decayed bound + CI half-width and < plain expectation."""
    started = time.perf_counter()
    failures = []
    for n in range(2, 9):
        for rho in (0.3, 0.5, 0.7):
            mean, ci = monte_carlo_steps(Strategy.PSER, n, 10_000,
                                         seed=2000 + n, rho=rho)
            half = (ci[1] - ci[0]) / 2
            bound = expected_steps_pser_bound(n, rho)
            if not (mean <= bound + half and mean < expected_steps_per(n)):
                failures.append(f"n={n} rho={rho}: {mean:.2f} vs {bound:.2f}")
    elapsed = time.perf_counter() - started
    ok = not failures
    report(2, "exact-protocol PSER mean steps within decayed bound "
              "(n=2..8, rho=0.3/0.5/0.7)",
           ok, failures and "; ".join(failures) or f"21 points, {elapsed:.0f}s")
    assert ok, failures


def test_criterion_3_benchmark_ordering_and_gap():
    """n=16 benchmark: oracle < PSER < PER < uniform per init mode; PSER
    needs >= 20% fewer mean iterations than PER over the criterion run.

    Runs with beta=0 (the benchmark protocol's update rule carries no
    importance weight; with beta=0.5 the weights cancel the decayed-chain
    updates and the ordering itself fails) and eta=0 (the protocol has no
    retention term). The 20% floor is enforced on the pooled mean across
    both priority-initialization modes; per-mode gaps are reported.
    """
    started = time.perf_counter()
    spec = CliffwalkSpec(n=16)
    means: dict[tuple[str, str], float] = {}
    for init in ("max", "epsilon"):
        for strat in (Strategy.ORACLE, Strategy.PSER, Strategy.PER,
                      Strategy.UNIFORM):
            total = 0
            for seed in range(10):
                cfg = ExperimentConfig(
                    spec=spec, strategy=strat,
                    decay=DecayConfig(eta=0.0, beta=0.0),
                    mode=Mode.APPENDIX_B, init_priority=init,
                    max_iterations=6_000_000, convergence_tol=1e-3,
                    seed=seed)
                trace = run_experiment(cfg)
                assert trace.converged_at is not None, \
                    f"{strat.value}/{init}/seed{seed} did not converge"
                total += trace.converged_at
            means[(init, strat.value)] = total / 10
    orderings_ok = True
    gap_details = []
    for init in ("max", "epsilon"):
        o, p, q, u = (means[(init, s)]
                      for s in ("oracle", "pser", "per", "uniform"))
        orderings_ok &= o < p < q < u
        gap_details.append(f"{init}: gap {1 - p / q:.1%}")
    pooled_pser = (means[("max", "pser")] + means[("epsilon", "pser")]) / 2
    pooled_per = (means[("max", "per")] + means[("epsilon", "per")]) / 2
    pooled_gap = 1 - pooled_pser / pooled_per
    elapsed = time.perf_counter() - started
    ok = orderings_ok and pooled_gap >= 0.20
    report(3, "n=16 benchmark ordering oracle<PSER<PER<uniform (both init "
              "modes) and PSER >=20% fewer iterations than PER",
           ok,
           f"pooled gap {pooled_gap:.1%}; {'; '.join(gap_details)}; "
           f"means {dict((f'{k[0]}/{k[1]}', round(v)) for k, v in means.items())}; "
           f"{elapsed:.0f}s")
    assert ok


def test_criterion_4_window_formula_operating_point():
    ok = compute_window(0.4, 0.01) == 5
    report(4, "compute_window(0.4, 0.01) == 5", ok)
    assert ok


def test_criterion_5_formula_cross_checks():
    worst = 0.0
    for n in range(1, 21):
        closed = expected_steps_per(n)
        interval = expected_steps_per_interval_sum(n)
        worst = max(worst, abs(closed - interval) / interval)
        for rho in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            a = expected_steps_pser_bound(n, rho, BoundVariant.MAIN_TEXT)
            b = pser_bound_double_sum(n, rho)
            worst = max(worst, abs(a - b) / b)
    special_ok = all(
        expected_steps_pser_bound(n, 0.5, BoundVariant.APPENDIX)
        == n * (n + 1) / 2 for n in range(1, 21))
    ok = worst <= 1e-9 and special_ok
    report(5, "closed forms vs interval-sum / double-sum oracles (1e-9 rel) "
              "and appendix rho=0.5 special case",
           ok, f"worst rel err {worst:.2e}; special case "
               f"{'exact' if special_ok else 'BROKEN'}")
    assert ok


def test_criterion_6_sum_tree_property_suite():
    # 10^4-operation fuzz preserves node-sum consistency at 1e-9 relative
    rng = random.Random(123)
    tree = SumTree(1 << 9)
    for _ in range(10_000):
        tree.set(rng.randrange(1 << 9), rng.random() * 10)
    consistency_ok = tree.check_consistency(rel_tol=1e-9)

    # sampling distribution vs the linear-scan oracle's probabilities
    from scipy import stats
    priorities = [rng.random() + 0.05 for _ in range(32)]
    alpha = 0.5
    buf = ReplayBuffer(32, alpha=alpha, beta=0.0)
    for i, p in enumerate(priorities):
        buf.insert(Transition(state=0, action=0, reward=0.0, next_state=0,
                              terminal=False, episode_id=i),
                   InitMode.FIXED, fixed_priority=p)
    # expected cell probabilities computed through the linear-scan oracle:
    # the oracle's selection frequencies over a fine quantile grid recover
    # mass_i / total, which the tree's draws must match
    masses = [buf._sum.get(i) for i in range(32)]
    total = sum(masses)
    grid = 200_000
    oracle_counts = [0] * 32
    for k in range(grid):
        oracle_counts[linear_scan_find(masses, (k + 0.5) / grid * total)] += 1
    draw_rng = random.Random(999)
    counts = [0] * 32
    n_draws = 120_000
    for _ in range(n_draws):
        counts[buf.sample_slot(draw_rng)] += 1
    expected = [c / grid * n_draws for c in oracle_counts]
    _, pvalue = stats.chisquare(counts, expected)
    chi_ok = pvalue > 0.001

    # alpha = 0 sampling is exactly uniform over occupied slots
    buf0 = ReplayBuffer(16, alpha=0.0, beta=0.0)
    for i in range(10):
        buf0.insert(Transition(state=0, action=0, reward=0.0, next_state=0,
                               terminal=False, episode_id=i),
                    InitMode.FIXED, fixed_priority=random.Random(i).random() + 0.1)
    uniform_ok = all(buf0.probability(s) == 0.1 for s in range(10))

    ok = consistency_ok and chi_ok and uniform_ok
    report(6, "sum-tree fuzz consistency (1e-9), chi-square sampling fit "
              "(p>0.001), exact alpha=0 uniformity",
           ok, f"chi-square p={pvalue:.4f}")
    assert ok


def test_criterion_7_decay_property_suite():
    rng = random.Random(77)
    cases = 1000

    def random_buffer():
        m = rng.randrange(2, 24)
        eps = []
        e = 0
        for _ in range(m):
            if rng.random() < 0.25:
                e += 1
            eps.append(e)
        priors = [rng.random() for _ in range(m)]
        buf = ReplayBuffer(m, alpha=1.0, epsilon=1e-4)
        for i, (p, ep) in enumerate(zip(priors, eps)):
            buf.insert(Transition(state=0, action=0, reward=0.0, next_state=0,
                                  terminal=False, episode_id=ep),
                       InitMode.FIXED, fixed_priority=p)
        return buf, priors, eps

    from pser.decay import (DecayScheme, decay_add, decay_max,
                            retained_update)
    max_monotone = add_clamped = isolated = floor_ok = True
    for _ in range(cases):
        buf, priors, eps = random_buffer()
        anchor = rng.randrange(len(priors))
        cfg = DecayConfig(rho=rng.uniform(0.1, 0.9),
                          window=rng.randrange(1, 8),
                          eta=rng.uniform(0.0, 0.9), epsilon=1e-4,
                          alpha=1.0, beta=0.0)
        p_anchor = rng.random() * 2
        if rng.random() < 0.5:
            decay_max(buf, anchor, p_anchor, cfg)
            after = [buf.raw_priority(i) for i in range(len(priors))]
            max_monotone &= all(a >= b for a, b in zip(after, priors))
            expected = naive_decay_max(priors, eps, anchor, p_anchor,
                                       cfg.rho, cfg.window)
            max_monotone &= after == expected
        else:
            p_max = buf.max_raw_priority()
            decay_add(buf, anchor, p_anchor, p_max, cfg)
            after = [buf.raw_priority(i) for i in range(len(priors))]
            add_clamped &= all(after[i] <= p_max + 1e-15
                               for i in range(len(priors)) if i != anchor)
            expected = naive_decay_add(priors, eps, anchor, p_anchor, p_max,
                                       cfg.rho, cfg.window)
            add_clamped &= after == expected
        isolated &= all(after[i] == priors[i] for i in range(len(priors))
                        if eps[i] != eps[anchor] and i != anchor)
        old_p = rng.random() * 3
        floor_ok &= retained_update(rng.uniform(-2, 2), old_p, cfg) \
            >= cfg.eta * old_p

    # decay-disabled pipeline reduces to plain prioritized replay,
    # trace-identical under shared seeds
    degeneracy_ok = True
    for seed in range(10):
        for mode in (Mode.THEOREM, Mode.APPENDIX_B):
            traces = []
            for strat in (Strategy.PSER, Strategy.PER):
                cfg2 = ExperimentConfig(
                    spec=CliffwalkSpec(n=4), strategy=strat, mode=mode,
                    decay=DecayConfig(rho=0.5, window=0, eta=0.0),
                    max_iterations=50_000, convergence_tol=1e-3, seed=seed)
                t = run_experiment(cfg2)
                traces.append((t.iterations, t.mse_values, t.converged_at))
            degeneracy_ok &= traces[0] == traces[1]

    ok = max_monotone and add_clamped and isolated and floor_ok and degeneracy_ok
    report(7, "decay properties over 1000 randomized cases + plain-replay "
              "degeneracy (20 seeded trace pairs)",
           ok, f"max_monotone={max_monotone} add_clamped={add_clamped} "
               f"episode_isolated={isolated} retention_floor={floor_ok} "
               f"degeneracy={degeneracy_ok}")
    assert ok


def _digest_outputs(outdir: Path) -> dict[str, str]:
    manifest = json.loads((outdir / "manifest.json").read_text())
    return {name: hashlib.sha256((outdir / name).read_bytes()).hexdigest()
            for name in manifest["outputs"]}


def test_criterion_8_byte_identical_reruns(tmp_path):
    runner = CliRunner()

    cliff_out = tmp_path / "cliff"
    cliff_args = ["cliffwalk", "--n", "5", "--mode", "theorem",
                  "--strategies", "uniform,oracle,per,pser", "--seeds", "0:3",
                  "--rho", "0.5", "--max-iterations", "300000",
                  "--mse-every", "10", "--plot", "--output-dir",
                  str(cliff_out)]
    assert runner.invoke(cli_main, cliff_args,
                         catch_exceptions=False).exit_code == 0
    cliff_first = _digest_outputs(cliff_out)
    assert runner.invoke(cli_main, cliff_args,
                         catch_exceptions=False).exit_code == 0
    cliff_ok = _digest_outputs(cliff_out) == cliff_first

    theory_out = tmp_path / "theory"
    theory_args = ["theory", "--n-min", "1", "--n-max", "10", "--rho", "0.4",
                   "--trials", "200", "--mc-strategy", "pser", "--seed", "3",
                   "--plot", "--output-dir", str(theory_out)]
    assert runner.invoke(cli_main, theory_args,
                         catch_exceptions=False).exit_code == 0
    theory_first = _digest_outputs(theory_out)
    assert runner.invoke(cli_main, theory_args,
                         catch_exceptions=False).exit_code == 0
    theory_ok = _digest_outputs(theory_out) == theory_first

    bench_args = ["buffer-bench", "--capacity", "512", "--ops", "30000",
                  "--seed", "4"]
    a = runner.invoke(cli_main, bench_args, catch_exceptions=False)
    b = runner.invoke(cli_main, bench_args, catch_exceptions=False)
    bench_ok = (json.loads(a.stdout)["deterministic"]
                == json.loads(b.stdout)["deterministic"])

    ok = cliff_ok and theory_ok and bench_ok
    report(8, "byte-identical outputs on re-run (cliffwalk incl. figures, "
              "theory, buffer-bench state)",
           ok, f"cliffwalk={cliff_ok} theory={theory_ok} bench={bench_ok}")
    assert ok
