"""Bounded ring replay memory with proportional prioritized sampling.

Transitions live in a fixed-capacity ring. Each slot carries a raw priority
``p``; the sum tree stores the sampling mass ``p ** alpha`` so that a prefix
search over the tree realizes proportional sampling directly. Raw priorities
are kept in a parallel array because the decay rules (max/add propagation,
retention) operate on raw values, not on masses.

Sampling draws are i.i.d. proportional by default; stratified segment
sampling is available behind a flag but off by default.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

from .sumtree import MaxTree, MinTree, SumTree

RESUM_INTERVAL = 1 << 16  # full-leaf resummation period, caps float drift


class ReplayError(Exception):
    """Base class for replay-memory errors."""


class EmptyBufferError(ReplayError):
    """Sampling from an empty buffer or one with zero total mass."""


class InvalidSlotError(ReplayError):
    """Slot index out of range or not occupied."""


class InitMode(Enum):
    """How a newly inserted transition gets its priority."""

    MAX_PRIO = "max_prio"      # largest priority ever seen (1.0 if none yet)
    CURRENT_TD = "current_td"  # |td| + epsilon from the caller-supplied td
    FIXED = "fixed"            # caller-supplied constant


@dataclass(frozen=True, slots=True)
class Transition:
    """One (s, a, r, s', terminal) record tagged with its episode."""

    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool
    episode_id: int

    def __post_init__(self):
        if self.state < 0 or self.next_state < 0:
            raise ValueError("state indices must be non-negative")
        if self.action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {self.action}")
        if self.episode_id < 0:
            raise ValueError("episode_id must be non-negative")


@dataclass(frozen=True, slots=True)
class SampleBatch:
    """Result of one proportional draw of k transitions."""

    indices: list[int]
    transitions: list[Transition]
    probabilities: list[float]  # P(i) = mass_i / total mass
    is_weights: list[float]     # (N * P(i))^-beta, normalized to max 1


def sampling_mass(priority: float, alpha: float) -> float:
    """Mass stored in the tree for a raw priority.

    Zero priority always maps to zero mass (never sampled), even at
    alpha = 0 where ``p ** 0`` would otherwise be 1.
    """
    return 0.0 if priority == 0.0 else priority**alpha


class ReplayBuffer:
    """Ring buffer of transitions with sum-tree proportional sampling.

    Single-owner mutation: one logical owner calls insert/update/sample.
    The prioritization exponent alpha is fixed at construction because the
    tree stores ``p ** alpha`` directly; re-exponentiating the whole buffer
    per sample call would defeat the point of the tree.
    """

    def __init__(self, capacity: int, alpha: float = 0.5, beta: float = 0.5,
                 epsilon: float = 1e-4):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {beta}")
        if epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.epsilon = epsilon

        self._sum = SumTree(capacity)
        self._min = MinTree(capacity)
        self._max = MaxTree(capacity)
        self._raw = [0.0] * capacity
        self._states = [0] * capacity
        self._actions = [0] * capacity
        self._rewards = [0.0] * capacity
        self._next_states = [0] * capacity
        self._terminals = [False] * capacity
        self._episode_ids = [0] * capacity
        self._seq = [-1] * capacity  # global insertion counter per slot

        self._size = 0
        self._next_slot = 0
        self._insert_count = 0
        self._last_episode_id = -1
        self._max_seen: float | None = None  # largest raw priority ever written
        self._ops_since_resum = 0

    def __len__(self) -> int:
        return self._size

    @property
    def size(self) -> int:
        return self._size

    def occupied(self, slot: int) -> bool:
        return 0 <= slot < self.capacity and self._seq[slot] >= 0

    # -- storage ----------------------------------------------------------

    def insert(self, t: Transition, mode: InitMode = InitMode.MAX_PRIO,
               current_td: float | None = None,
               fixed_priority: float | None = None) -> int:
        """Store ``t`` at the ring cursor and return its slot.

        Evicts the oldest transition when full (its leaf is zeroed before
        the overwrite so the running sums stay honest).
        """
        if mode is InitMode.CURRENT_TD:
            if current_td is None or math.isnan(current_td):
                raise ValueError("CURRENT_TD insert requires a finite current_td")
            priority = abs(current_td) + self.epsilon
        elif mode is InitMode.FIXED:
            if fixed_priority is None or fixed_priority < 0 or math.isnan(fixed_priority):
                raise ValueError("FIXED insert requires fixed_priority >= 0")
            priority = fixed_priority
        else:
            priority = self._max_seen if self._max_seen is not None else 1.0
        if t.episode_id < self._last_episode_id:
            raise ValueError(
                f"episode_id must be non-decreasing: got {t.episode_id} "
                f"after {self._last_episode_id}")

        slot = self._next_slot
        if self._seq[slot] >= 0:
            self._set_priority(slot, 0.0)
        self._states[slot] = t.state
        self._actions[slot] = t.action
        self._rewards[slot] = t.reward
        self._next_states[slot] = t.next_state
        self._terminals[slot] = t.terminal
        self._episode_ids[slot] = t.episode_id
        self._seq[slot] = self._insert_count
        self._set_priority(slot, priority)

        self._insert_count += 1
        self._last_episode_id = t.episode_id
        self._next_slot = (slot + 1) % self.capacity
        if self._size < self.capacity:
            self._size += 1
        return slot

    def preload(self, transitions: list[Transition],
                priorities: list[float]) -> None:
        """Bulk-fill an empty buffer; equivalent to sequential FIXED inserts.

        Used by the experiment harness to avoid per-transition tree updates
        when loading an exhaustive prefill.
        """
        if self._size:
            raise ReplayError("preload requires an empty buffer")
        if len(transitions) != len(priorities):
            raise ValueError("transitions and priorities length mismatch")
        if len(transitions) > self.capacity:
            raise ValueError("preload exceeds capacity")
        cols = (
            [t.state for t in transitions],
            [t.action for t in transitions],
            [t.reward for t in transitions],
            [t.next_state for t in transitions],
            [t.terminal for t in transitions],
            [t.episode_id for t in transitions],
        )
        self.preload_columns(*cols, priorities=priorities)

    def preload_columns(self, states, actions, rewards, next_states,
                        terminals, episode_ids, priorities) -> None:
        """Column-wise bulk fill (fast path; see ``preload``)."""
        m = len(states)
        if self._size:
            raise ReplayError("preload requires an empty buffer")
        if m > self.capacity:
            raise ValueError("preload exceeds capacity")
        if any(e2 < e1 for e1, e2 in zip(episode_ids, episode_ids[1:])):
            raise ValueError("episode_id must be non-decreasing")
        self._states[:m] = states
        self._actions[:m] = actions
        self._rewards[:m] = rewards
        self._next_states[:m] = next_states
        self._terminals[:m] = terminals
        self._episode_ids[:m] = episode_ids
        self._seq[:m] = range(m)
        alpha = self.alpha
        raw = self._raw
        sum_nodes = self._sum.nodes
        min_nodes = self._min.nodes
        max_nodes = self._max.nodes
        base = self._sum._base
        for slot in range(m):
            p = priorities[slot]
            if p < 0 or math.isnan(p):
                raise ValueError(f"priority must be >= 0, got {p}")
            raw[slot] = p
            mass = 0.0 if p == 0.0 else p**alpha
            sum_nodes[base + slot] = mass
            min_nodes[base + slot] = mass if mass > 0.0 else math.inf
            max_nodes[base + slot] = p
        self._sum.rebuild()
        self._min.rebuild()
        self._max.rebuild()
        self._size = m
        self._insert_count = m
        self._next_slot = m % self.capacity
        self._last_episode_id = episode_ids[-1] if m else -1
        mx = max(priorities) if m else None
        self._max_seen = mx if mx is not None else self._max_seen

    # -- priorities -------------------------------------------------------

    def _set_priority(self, slot: int, priority: float) -> None:
        self._raw[slot] = priority
        mass = 0.0 if priority == 0.0 else priority**self.alpha
        self._sum.set(slot, mass)
        self._min.set(slot, mass if mass > 0.0 else math.inf)
        self._max.set(slot, priority)
        if priority > 0.0 and (self._max_seen is None or priority > self._max_seen):
            self._max_seen = priority
        self._ops_since_resum += 1
        if self._ops_since_resum >= RESUM_INTERVAL:
            self._sum.rebuild()
            self._min.rebuild()
            self._max.rebuild()
            self._ops_since_resum = 0

    def update_priority(self, slot: int, priority: float) -> None:
        """Set the raw priority of an occupied slot (mass becomes p**alpha)."""
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        if priority < 0 or math.isnan(priority):
            raise ValueError(f"priority must be >= 0, got {priority}")
        self._set_priority(slot, priority)

    def raw_priority(self, slot: int) -> float:
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        return self._raw[slot]

    def max_raw_priority(self) -> float:
        """Largest raw priority currently in the buffer."""
        return self._max.maximum

    def max_priority_seen(self) -> float:
        """Largest raw priority ever written (MAX_PRIO insert source)."""
        return self._max_seen if self._max_seen is not None else 1.0

    @property
    def total_mass(self) -> float:
        return self._sum.total

    def probability(self, slot: int) -> float:
        """P(slot) under proportional sampling on the stored masses."""
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        total = self._sum.total
        if total <= 0.0:
            raise EmptyBufferError("total sampling mass is zero")
        return self._sum.get(slot) / total

    # -- sampling ---------------------------------------------------------

    def prefix_find(self, mass: float) -> int:
        """Slot whose cumulative mass interval contains ``mass``."""
        if self._size == 0:
            raise EmptyBufferError("buffer is empty")
        return self._sum.prefix_find(mass)

    def sample_slot(self, rng: random.Random) -> int:
        """One proportional draw; cheap path used by the experiment loop."""
        total = self._sum.total
        if self._size == 0 or total <= 0.0:
            raise EmptyBufferError("nothing to sample: empty buffer or zero mass")
        u = rng.random() * total
        if u >= total:
            u = math.nextafter(total, 0.0)
        return self._sum.prefix_find(u)

    def _max_weight(self, beta: float) -> float:
        min_mass = self._min.minimum
        if not math.isfinite(min_mass):
            raise EmptyBufferError("total sampling mass is zero")
        p_min = min_mass / self._sum.total
        return (self._size * p_min) ** -beta

    def is_weight(self, slot: int, beta: float | None = None) -> float:
        """Importance weight (N * P(slot))^-beta normalized by the buffer max."""
        b = self.beta if beta is None else beta
        if b == 0.0:
            return 1.0
        p = self.probability(slot)
        return (self._size * p) ** -b / self._max_weight(b)

    def sample(self, k: int, rng: random.Random, beta: float | None = None,
               stratified: bool = False) -> SampleBatch:
        """Draw k transitions proportionally to the stored masses.

        Returns matching probabilities and importance weights; deterministic
        given the rng state. Raises EmptyBufferError when the buffer is empty
        or all masses are zero.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        total = self._sum.total
        if self._size == 0 or total <= 0.0:
            raise EmptyBufferError("nothing to sample: empty buffer or zero mass")
        b = self.beta if beta is None else beta
        w_norm = self._max_weight(b) if b != 0.0 else 1.0
        size = self._size
        indices: list[int] = []
        probs: list[float] = []
        weights: list[float] = []
        for i in range(k):
            if stratified:
                lo = total * i / k
                hi = total * (i + 1) / k
                u = lo + rng.random() * (hi - lo)
            else:
                u = rng.random() * total
            if u >= total:
                u = math.nextafter(total, 0.0)
            slot = self._sum.prefix_find(u)
            p = self._sum.get(slot) / total
            indices.append(slot)
            probs.append(p)
            weights.append(1.0 if b == 0.0 else (size * p) ** -b / w_norm)
        return SampleBatch(
            indices=indices,
            transitions=[self.transition(s) for s in indices],
            probabilities=probs,
            is_weights=weights,
        )

    # -- access -----------------------------------------------------------

    def transition(self, slot: int) -> Transition:
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        return Transition(
            state=self._states[slot],
            action=self._actions[slot],
            reward=self._rewards[slot],
            next_state=self._next_states[slot],
            terminal=self._terminals[slot],
            episode_id=self._episode_ids[slot],
        )

    def episode_id(self, slot: int) -> int:
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        return self._episode_ids[slot]

    def predecessor(self, slot: int) -> int | None:
        """Slot inserted immediately before ``slot``, if still present.

        Returns None at the start of the ring history or when the
        predecessor has been evicted and overwritten.
        """
        if not self.occupied(slot):
            raise InvalidSlotError(f"slot {slot} is not occupied")
        want = self._seq[slot] - 1
        if want < 0:
            return None
        prev = (slot - 1) % self.capacity
        if self._seq[prev] == want:
            return prev
        return None

    def check_consistency(self, rel_tol: float = 1e-9) -> bool:
        """Tree-sum consistency plus root-vs-leaf-scan agreement."""
        if not self._sum.check_consistency(rel_tol):
            return False
        leaf_sum = self._sum.leaf_sum()
        root = self._sum.total
        return abs(root - leaf_sum) <= rel_tol * max(abs(leaf_sum), abs(root), 1.0)
