"""Blind Cliffwalk: an n-state chain where only one action sequence pays.

Each state has two actions; the correct one (drawn per state from the spec
seed, so the policy cannot be trivial) advances the chain, the wrong one
terminates and resets. The single reward sits on the correct action of the
last state. Closed-form optimal values and an exhaustive replay prefill
(every one of the 2^n action sequences run to termination) make the chain a
controlled testbed for replay sampling strategies.
"""

from __future__ import annotations

import functools
import random
from dataclasses import dataclass, field

import numpy as np

from .replay import Transition

MAX_PREFILL_STATES = 24  # 2^(n+1) transitions must fit in memory


@dataclass(frozen=True, slots=True)
class CliffwalkSpec:
    """Environment parameters; immutable and freely shareable."""

    n: int
    gamma: float | None = None
    seed: int = 0
    correct_actions: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.gamma is None:
            # 1 - 1/n keeps values on the same scale across n; degenerate at
            # n = 1 where no transition ever bootstraps, so any gamma works.
            object.__setattr__(self, "gamma", 1.0 - 1.0 / self.n if self.n > 1 else 1.0)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.correct_actions is None:
            rng = random.Random(self.seed)
            object.__setattr__(
                self, "correct_actions",
                tuple(rng.randrange(2) for _ in range(self.n)))
        else:
            object.__setattr__(self, "correct_actions", tuple(self.correct_actions))
        if len(self.correct_actions) != self.n:
            raise ValueError("correct_actions must have length n")
        if any(a not in (0, 1) for a in self.correct_actions):
            raise ValueError("correct_actions entries must be 0 or 1")

    def to_json_dict(self) -> dict:
        return {"n": self.n, "gamma": self.gamma, "seed": self.seed}

    @classmethod
    def from_json_dict(cls, d: dict) -> "CliffwalkSpec":
        return cls(n=int(d["n"]), gamma=d.get("gamma"), seed=int(d.get("seed", 0)))


@dataclass(frozen=True)
class GroundTruth:
    """Optimal state-action values: gamma^(n-1-i) on the correct action."""

    q_star: np.ndarray  # shape (n, 2)


def step(spec: CliffwalkSpec, state: int, action: int) -> tuple[int, float, bool]:
    """Environment dynamics: (next_state, reward, terminal).

    Correct action advances the chain; at the last state it pays 1 and
    terminates. Any wrong action terminates with no reward. Termination
    resets to state 0.
    """
    if not 0 <= state < spec.n:
        raise ValueError(f"state {state} out of range for n={spec.n}")
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action}")
    if action == spec.correct_actions[state]:
        if state == spec.n - 1:
            return 0, 1.0, True
        return state + 1, 0.0, False
    return 0, 0.0, True


def ground_truth(spec: CliffwalkSpec) -> GroundTruth:
    """Closed-form optimal Q-table.

    The correct column is built by backward multiplication (q_i = gamma *
    q_{i+1}), the exact arithmetic order in which learning-rate-1 updates
    propagate the values, so converged tables match bit for bit.
    """
    q = np.zeros((spec.n, 2))
    value = 1.0
    for state in range(spec.n - 1, -1, -1):
        q[state, spec.correct_actions[state]] = value
        value *= spec.gamma
    return GroundTruth(q_star=q)


@functools.lru_cache(maxsize=32)
def episodes(spec: CliffwalkSpec) -> tuple[tuple[tuple[int, int, float, int, bool], ...], ...]:
    """All 2^n action sequences run to termination, in enumeration order.

    Each episode is a tuple of (state, action, reward, next_state, terminal)
    steps. Cached per spec; total step count is 2^(n+1) - 2.
    """
    if spec.n > MAX_PREFILL_STATES:
        raise ValueError(
            f"exhaustive prefill limited to n <= {MAX_PREFILL_STATES}, got {spec.n}")
    correct = spec.correct_actions
    n = spec.n
    out = []
    for seq in range(1 << n):
        ep = []
        state = 0
        for k in range(n):
            action = (seq >> k) & 1
            if action == correct[state]:
                if state == n - 1:
                    ep.append((state, action, 1.0, 0, True))
                    break
                ep.append((state, action, 0.0, state + 1, False))
                state += 1
            else:
                ep.append((state, action, 0.0, 0, True))
                break
        out.append(tuple(ep))
    return tuple(out)


def exhaustive_prefill(spec: CliffwalkSpec,
                       rng: random.Random | None = None) -> list[Transition]:
    """Every action sequence's trajectory, episodes in seeded-random order.

    Each transition carries the id of its (shuffled) episode; ids are
    therefore non-decreasing in emission order. The shuffle draws from
    ``rng`` (defaults to Random(spec.seed)) so runs are reproducible.
    """
    eps = episodes(spec)
    order = list(range(len(eps)))
    (rng or random.Random(spec.seed)).shuffle(order)
    out: list[Transition] = []
    for episode_id, idx in enumerate(order):
        for s, a, r, ns, term in eps[idx]:
            out.append(Transition(state=s, action=a, reward=r, next_state=ns,
                                  terminal=term, episode_id=episode_id))
    return out
