"""Tabular Q-learning over a prefilled replay memory.

Four interchangeable sampling strategies replay transitions from the
exhaustive Cliffwalk prefill: uniform, an oracle that greedily picks the
transition whose update most reduces the error against the ground truth,
plain proportional prioritization, and prioritization with backward decay.

Two protocols are supported. The exact protocol (learning-rate 1, priorities
seeded from initial TD errors, convergence = bitwise match with the optimal
table) is the setting of the convergence-rate analysis. The benchmark
protocol (step size 1/4, max- or epsilon-initialized priorities, MSE traced
every fixed number of iterations) reproduces the convergence-speed
comparison figures.

Priority bookkeeping: the backward decay is always anchored on the TD
error observed at sampling time (the "surprise" that should be propagated
to the transitions leading here). The sampled slot's own new priority uses
that same pre-update error in the benchmark protocol (priorities are
updated before the value step, as in the replay algorithm's inner loop),
but the post-update error in the exact protocol, where the learning-rate-1
analysis requires a sampled transition's priority to drop to zero once its
cell is exact.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .cliffwalk import CliffwalkSpec, GroundTruth, episodes, ground_truth
from .decay import DecayConfig, DecayScheme, decay_add, decay_max
from .replay import ReplayBuffer, Transition

EXACT_CONVERGENCE_TOL = 1e-9  # learning-rate-1 updates hit Q* exactly


class Strategy(Enum):
    UNIFORM = "uniform"
    ORACLE = "oracle"
    PER = "per"
    PSER = "pser"


class Mode(Enum):
    THEOREM = "theorem"        # exact protocol, learning rate 1
    APPENDIX_B = "appendix_b"  # MSE-traced benchmark protocol


@dataclass
class QTable:
    """Flat tabular state-action values (two actions per state)."""

    n: int
    values: list[float]

    @classmethod
    def zeros(cls, n: int) -> "QTable":
        return cls(n=n, values=[0.0] * (2 * n))

    def get(self, state: int, action: int) -> float:
        return self.values[2 * state + action]

    def set(self, state: int, action: int, value: float) -> None:
        self.values[2 * state + action] = value

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float).reshape(self.n, 2)

    def copy(self) -> "QTable":
        return QTable(n=self.n, values=list(self.values))


def td_error(q: QTable, t: Transition, gamma: float) -> float:
    """r + gamma * max_a Q(s', a) - Q(s, a); terminal transitions do not bootstrap."""
    if t.terminal:
        target = t.reward
    else:
        j = 2 * t.next_state
        a, b = q.values[j], q.values[j + 1]
        target = t.reward + gamma * (a if a > b else b)
    return target - q.values[2 * t.state + t.action]


def apply_update(q: QTable, t: Transition, delta: float, step_size: float,
                 is_weight: float | None = None) -> None:
    """Single-cell gradient step: Q(s, a) += step * weight * delta."""
    w = 1.0 if is_weight is None else is_weight
    q.values[2 * t.state + t.action] += step_size * delta * w


def mse(q: QTable, gt: GroundTruth) -> float:
    """Mean squared error against the ground-truth table, over all cells."""
    diff = q.as_array() - gt.q_star
    return float(np.mean(diff * diff))


def oracle_select(buffer: ReplayBuffer, q: QTable, spec: CliffwalkSpec,
                  step_size: float = 1.0) -> int:
    """Slot whose (tentative) update minimizes the post-update MSE.

    Ranks by the single-cell squared-error change, which orders slots
    identically to recomputing the full MSE after each tentative update.
    Lowest slot wins ties.
    """
    if len(buffer) == 0:
        raise ValueError("buffer is empty")
    gt = ground_truth(spec).q_star
    gamma = spec.gamma
    best_slot = 0
    best_change = None
    for slot in range(buffer.capacity):
        if not buffer.occupied(slot):
            continue
        t = buffer.transition(slot)
        delta = td_error(q, t, gamma)
        old = q.get(t.state, t.action)
        g = gt[t.state, t.action]
        new = old + step_size * delta
        change = (new - g) ** 2 - (old - g) ** 2
        if best_change is None or change < best_change:
            best_change = change
            best_slot = slot
    return best_slot


@dataclass(frozen=True)
class ExperimentConfig:
    """One seeded run: environment, strategy, protocol and budgets."""

    spec: CliffwalkSpec
    strategy: Strategy
    decay: DecayConfig = DecayConfig()
    mode: Mode = Mode.APPENDIX_B
    step_size: float | None = None   # None: 1.0 exact / 0.25 benchmark
    init_priority: str = "max"       # benchmark prefill: "max" | "epsilon"
    max_iterations: int = 1_000_000
    mse_every: int = 100
    convergence_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.step_size is not None and not 0.0 < self.step_size <= 1.0:
            raise ValueError(f"step_size must be in (0, 1], got {self.step_size}")
        if self.init_priority not in ("max", "epsilon"):
            raise ValueError(f"init_priority must be 'max' or 'epsilon', "
                             f"got {self.init_priority!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.mse_every < 1:
            raise ValueError("mse_every must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")

    def resolved(self) -> "ExperimentConfig":
        exact = self.mode is Mode.THEOREM
        return replace(
            self,
            decay=self.decay.resolved(exact_protocol=exact),
            step_size=self.step_size if self.step_size is not None
            else (1.0 if exact else 0.25),
        )


@dataclass(frozen=True)
class ExperimentTrace:
    """Per-run MSE trace plus the first iteration that hit tolerance."""

    strategy: Strategy
    seed: int
    iterations: tuple[int, ...]
    mse_values: tuple[float, ...]
    converged_at: int | None
    iterations_run: int
    final_mse: float


def _build_columns(spec: CliffwalkSpec, rng: random.Random):
    """Exhaustive prefill as flat parallel columns, episodes shuffled."""
    eps = episodes(spec)
    order = list(range(len(eps)))
    rng.shuffle(order)
    states: list[int] = []
    actions: list[int] = []
    rewards: list[float] = []
    next_states: list[int] = []
    terminals: list[bool] = []
    episode_ids: list[int] = []
    for eid, idx in enumerate(order):
        for s, a, r, ns, term in eps[idx]:
            states.append(s)
            actions.append(a)
            rewards.append(r)
            next_states.append(ns)
            terminals.append(term)
            episode_ids.append(eid)
    return states, actions, rewards, next_states, terminals, episode_ids


def run_experiment(cfg: ExperimentConfig) -> ExperimentTrace:
    """Run one seeded experiment and return its trace.

    Non-convergence within the budget is reported through
    ``converged_at = None``, not as an error.
    """
    cfg = cfg.resolved()
    dcfg = cfg.decay
    spec = cfg.spec
    rng = random.Random(cfg.seed)
    cols = _build_columns(spec, rng)
    states, actions, rewards, next_states, terminals, episode_ids = cols
    m = len(states)
    exact = cfg.mode is Mode.THEOREM

    if exact:
        # priorities equal each transition's initial TD error (zero table):
        # exactly the rewarded transition is positive when epsilon is 0
        priorities = [r + dcfg.epsilon for r in rewards]
    elif cfg.init_priority == "max":
        priorities = [1.0] * m
    else:
        priorities = [dcfg.epsilon] * m

    gt = ground_truth(spec)
    gt_flat = gt.q_star.reshape(-1)

    strategy = cfg.strategy
    buffer = None
    if strategy in (Strategy.PER, Strategy.PSER):
        buffer = ReplayBuffer(capacity=m, alpha=dcfg.alpha, beta=dcfg.beta,
                              epsilon=dcfg.epsilon)
        buffer.preload_columns(*cols, priorities=priorities)
        if strategy is Strategy.PSER and dcfg.window > 0:
            rew_slot = rewards.index(1.0)
            # the analysis decays the initial priority over the whole
            # successful episode; the runtime window applies afterwards
            init_cfg = replace(dcfg, window=m) if exact else dcfg
            anchor = buffer.raw_priority(rew_slot)
            if dcfg.scheme is DecayScheme.MAX:
                decay_max(buffer, rew_slot, anchor, init_cfg)
            else:
                decay_add(buffer, rew_slot, anchor,
                          buffer.max_raw_priority(), init_cfg)

    if strategy is Strategy.ORACLE:
        runner = _run_oracle
        args = (cfg, cols, gt_flat)
    elif strategy is Strategy.UNIFORM:
        runner = _run_uniform
        args = (cfg, cols, gt_flat, rng)
    else:
        runner = _run_prioritized
        args = (cfg, cols, gt_flat, rng, buffer)
    iterations, mses, converged_at, iterations_run, final_mse = runner(*args)
    return ExperimentTrace(
        strategy=strategy,
        seed=cfg.seed,
        iterations=tuple(iterations),
        mse_values=tuple(mses),
        converged_at=converged_at,
        iterations_run=iterations_run,
        final_mse=final_mse,
    )


def _match_state(q: list[float], gt_flat) -> tuple[list[bool], int]:
    matched = [abs(v - g) <= EXACT_CONVERGENCE_TOL for v, g in zip(q, gt_flat)]
    return matched, sum(matched)


def _mse_flat(q: list[float], gt_flat, n_cells: int) -> float:
    return sum((v - g) ** 2 for v, g in zip(q, gt_flat)) / n_cells


def _run_uniform(cfg: ExperimentConfig, cols, gt_flat, rng: random.Random):
    states, actions, rewards, next_states, terminals, _ = cols
    m = len(states)
    n_cells = 2 * cfg.spec.n
    gamma = cfg.spec.gamma
    step = cfg.step_size
    exact = cfg.mode is Mode.THEOREM
    tol = cfg.convergence_tol
    mse_every = cfg.mse_every
    gtf = gt_flat.tolist()
    q = [0.0] * n_cells
    ia = [2 * s + a for s, a in zip(states, actions)]
    ins = [2 * ns for ns in next_states]
    matched, match_count = _match_state(q, gtf)

    iterations = [0]
    mses = [_mse_flat(q, gtf, n_cells)]
    converged_at = None
    if not exact and mses[0] <= tol:
        converged_at = 0
    rnd = rng.random
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        slot = int(rnd() * m)
        i = ia[slot]
        if terminals[slot]:
            target = rewards[slot]
        else:
            j = ins[slot]
            a, b = q[j], q[j + 1]
            target = rewards[slot] + gamma * (a if a > b else b)
        delta = target - q[i]
        if delta != 0.0:
            nv = q[i] + step * delta
            q[i] = nv
            if exact:
                now = abs(nv - gtf[i]) <= EXACT_CONVERGENCE_TOL
                if now != matched[i]:
                    matched[i] = now
                    match_count += 1 if now else -1
        if exact:
            if match_count == n_cells:
                converged_at = it
                break
        if it % mse_every == 0:
            cur = _mse_flat(q, gtf, n_cells)
            iterations.append(it)
            mses.append(cur)
            if not exact and cur <= tol:
                converged_at = it
                break
    final = _mse_flat(q, gtf, n_cells)
    return iterations, mses, converged_at, it, final


def _run_prioritized(cfg: ExperimentConfig, cols, gt_flat, rng: random.Random,
                     buffer: ReplayBuffer):
    states, actions, rewards, next_states, terminals, episode_ids = cols
    m = len(states)
    n_cells = 2 * cfg.spec.n
    gamma = cfg.spec.gamma
    step = cfg.step_size
    dcfg = cfg.decay
    eps = dcfg.epsilon
    eta = dcfg.eta
    rho = dcfg.rho
    window = dcfg.window
    beta = dcfg.beta
    pser = cfg.strategy is Strategy.PSER
    add_scheme = dcfg.scheme is DecayScheme.ADD
    exact = cfg.mode is Mode.THEOREM
    tol = cfg.convergence_tol
    mse_every = cfg.mse_every
    gtf = gt_flat.tolist()
    q = [0.0] * n_cells
    ia = [2 * s + a for s, a in zip(states, actions)]
    ins = [2 * ns for ns in next_states]
    matched, match_count = _match_state(q, gtf)

    sum_tree = buffer._sum
    raw = buffer._raw
    sum_nodes = sum_tree.nodes
    min_nodes = buffer._min.nodes
    leaf_base = sum_tree._base
    prefix_find = sum_tree.prefix_find
    update_priority = buffer.update_priority
    size = buffer.size

    iterations = [0]
    mses = [_mse_flat(q, gtf, n_cells)]
    converged_at = None
    if not exact and mses[0] <= tol:
        converged_at = 0
    rnd = rng.random
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        total = sum_nodes[1]
        if total > 0.0:
            u = rnd() * total
            slot = prefix_find(u if u < total else math.nextafter(total, 0.0))
        else:
            # all priorities zero (exact protocol): fall back to a uniform
            # draw over the occupied slots, matching the analysis
            slot = int(rnd() * m)

        i = ia[slot]
        if terminals[slot]:
            target = rewards[slot]
        else:
            j = ins[slot]
            a, b = q[j], q[j + 1]
            target = rewards[slot] + gamma * (a if a > b else b)
        delta = target - q[i]

        if beta != 0.0 and total > 0.0:
            prob = sum_nodes[leaf_base + slot] / total
            w_max = (size * (min_nodes[1] / total)) ** -beta
            w = (size * prob) ** -beta / w_max
        else:
            w = 1.0

        if delta != 0.0:
            nv = q[i] + step * delta * w
            q[i] = nv
            if exact:
                now = abs(nv - gtf[i]) <= EXACT_CONVERGENCE_TOL
                if now != matched[i]:
                    matched[i] = now
                    match_count += 1 if now else -1

        # exact protocol: slot priority from the post-update TD error
        # (drops to zero once the cell is exact); benchmark protocol:
        # from the error at sampling time, before the value step
        delta_prio = target - q[i] if exact else delta
        if pser:
            old = raw[slot]
            rp = abs(delta_prio) + eps
            et = eta * old
            update_priority(slot, rp if rp > et else et)
            if window > 0:
                anchor = abs(delta) + eps
                if anchor > 0.0:
                    e = episode_ids[slot]
                    if add_scheme:
                        p_max = buffer.max_raw_priority()
                        for off in range(1, window + 1):
                            j = slot - off
                            if j < 0 or episode_ids[j] != e:
                                break
                            old_p = raw[j]
                            cand = anchor * rho**off + old_p
                            if cand > p_max:
                                cand = p_max
                            if cand != old_p:
                                update_priority(j, cand)
                    else:
                        for off in range(1, window + 1):
                            j = slot - off
                            if j < 0 or episode_ids[j] != e:
                                break
                            cand = anchor * rho**off
                            if cand > raw[j]:
                                update_priority(j, cand)
        else:
            update_priority(slot, abs(delta_prio) + eps)

        if exact:
            if match_count == n_cells:
                converged_at = it
                break
        if it % mse_every == 0:
            cur = _mse_flat(q, gtf, n_cells)
            iterations.append(it)
            mses.append(cur)
            if not exact and cur <= tol:
                converged_at = it
                break
    final = _mse_flat(q, gtf, n_cells)
    return iterations, mses, converged_at, it, final


def _run_oracle(cfg: ExperimentConfig, cols, gt_flat):
    states, actions, rewards, next_states, terminals, _ = cols
    n_cells = 2 * cfg.spec.n
    gamma = cfg.spec.gamma
    step = cfg.step_size
    exact = cfg.mode is Mode.THEOREM
    tol = cfg.convergence_tol
    mse_every = cfg.mse_every

    q = np.zeros(n_cells)
    ia = np.array([2 * s + a for s, a in zip(states, actions)], dtype=np.intp)
    ins = np.array([2 * ns for ns in next_states], dtype=np.intp)
    rew = np.asarray(rewards, dtype=float)
    live = 1.0 - np.asarray(terminals, dtype=float)
    gt_cells = gt_flat[ia]

    matched = np.abs(q - gt_flat) <= EXACT_CONVERGENCE_TOL
    iterations = [0]
    mses = [float(np.mean((q - gt_flat) ** 2))]
    converged_at = None
    if not exact and mses[0] <= tol:
        converged_at = 0
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        bootstrap = np.maximum(q[ins], q[ins + 1])
        target = rew + gamma * live * bootstrap
        old = q[ia]
        delta = target - old
        new = old + step * delta
        err_change = (new - gt_cells) ** 2 - (old - gt_cells) ** 2
        slot = int(np.argmin(err_change))  # first minimum: lowest-index tie rule
        i = int(ia[slot])
        q[i] = old[slot] + step * delta[slot]
        if exact:
            matched[i] = abs(q[i] - gt_flat[i]) <= EXACT_CONVERGENCE_TOL
            if matched.all():
                converged_at = it
                break
        if it % mse_every == 0:
            cur = float(np.mean((q - gt_flat) ** 2))
            iterations.append(it)
            mses.append(cur)
            if not exact and cur <= tol:
                converged_at = it
                break
    final = float(np.mean((q - gt_flat) ** 2))
    return iterations, mses, converged_at, it, final
