"""Array-backed segment trees over a fixed number of slots.

The sum tree is the sampling workhorse: leaves hold non-negative masses,
internal nodes hold subtree sums, and ``prefix_find`` inverts the cumulative
mass function in O(log N). Min/max trees with the same layout track the
smallest positive mass (for importance-weight normalization) and the largest
raw priority (for the additive-decay clamp).

Layout is the classic 1-based heap array: root at index 1, children of ``i``
at ``2i`` and ``2i+1``, leaves at ``_base .. _base + capacity - 1`` where
``_base`` is the capacity rounded up to a power of two.
"""

from __future__ import annotations

import math

_INF = math.inf


def _round_up_pow2(capacity: int) -> int:
    n = 1
    while n < capacity:
        n <<= 1
    return n


class SumTree:
    """Sum-combined segment tree supporting prefix-mass search."""

    __slots__ = ("capacity", "_base", "nodes")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._base = _round_up_pow2(capacity)
        self.nodes = [0.0] * (2 * self._base)

    @property
    def total(self) -> float:
        return self.nodes[1]

    def get(self, slot: int) -> float:
        return self.nodes[self._base + slot]

    def set(self, slot: int, value: float) -> None:
        nodes = self.nodes
        i = self._base + slot
        nodes[i] = value
        i >>= 1
        while i:
            j = i << 1
            nodes[i] = nodes[j] + nodes[j + 1]
            i >>= 1

    def rebuild(self) -> None:
        """Recompute every internal node from the leaves (drift control)."""
        nodes = self.nodes
        for i in range(self._base - 1, 0, -1):
            j = i << 1
            nodes[i] = nodes[j] + nodes[j + 1]

    def prefix_find(self, mass: float) -> int:
        """Return the slot whose cumulative-mass interval contains ``mass``.

        The result is the unique ``i`` with ``cum(< i) <= mass < cum(<= i)``;
        zero-mass slots have empty intervals and are never returned.
        Raises ValueError unless ``0 <= mass < total``.
        """
        total = self.nodes[1]
        if not 0.0 <= mass < total:
            raise ValueError(f"mass {mass!r} outside [0, {total!r})")
        nodes = self.nodes
        base = self._base
        i = 1
        m = mass
        while i < base:
            i <<= 1
            left = nodes[i]
            if m >= left:
                m -= left
                i += 1
        slot = i - base
        if slot >= self.capacity or nodes[i] <= 0.0:
            # Internal sums can drift a few ulps from the true leaf sums;
            # resolve boundary queries with the exact linear scan.
            slot = self._scan_find(mass)
        return slot

    def _scan_find(self, mass: float) -> int:
        nodes = self.nodes
        base = self._base
        cum = 0.0
        last_positive = -1
        for slot in range(self.capacity):
            v = nodes[base + slot]
            if v > 0.0:
                cum += v
                last_positive = slot
                if mass < cum:
                    return slot
        if last_positive < 0:
            raise ValueError("no positive mass in tree")
        return last_positive

    def leaf_sum(self) -> float:
        base = self._base
        return math.fsum(self.nodes[base : base + self.capacity])

    def check_consistency(self, rel_tol: float = 1e-9) -> bool:
        """True iff every internal node matches the sum of its children."""
        nodes = self.nodes
        for i in range(1, self._base):
            j = i << 1
            s = nodes[j] + nodes[j + 1]
            if abs(nodes[i] - s) > rel_tol * max(abs(s), abs(nodes[i]), 1.0):
                return False
        return True


class MinTree:
    """Min-combined segment tree; empty slots hold +inf."""

    __slots__ = ("capacity", "_base", "nodes")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._base = _round_up_pow2(capacity)
        self.nodes = [_INF] * (2 * self._base)

    @property
    def minimum(self) -> float:
        return self.nodes[1]

    def set(self, slot: int, value: float) -> None:
        nodes = self.nodes
        i = self._base + slot
        nodes[i] = value
        i >>= 1
        while i:
            j = i << 1
            a, b = nodes[j], nodes[j + 1]
            nodes[i] = a if a < b else b
            i >>= 1

    def rebuild(self) -> None:
        nodes = self.nodes
        for i in range(self._base - 1, 0, -1):
            j = i << 1
            a, b = nodes[j], nodes[j + 1]
            nodes[i] = a if a < b else b


class MaxTree:
    """Max-combined segment tree; empty slots hold 0 (priorities are >= 0)."""

    __slots__ = ("capacity", "_base", "nodes")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._base = _round_up_pow2(capacity)
        self.nodes = [0.0] * (2 * self._base)

    @property
    def maximum(self) -> float:
        return self.nodes[1]

    def set(self, slot: int, value: float) -> None:
        nodes = self.nodes
        i = self._base + slot
        nodes[i] = value
        i >>= 1
        while i:
            j = i << 1
            a, b = nodes[j], nodes[j + 1]
            nodes[i] = a if a > b else b
            i >>= 1

    def rebuild(self) -> None:
        nodes = self.nodes
        for i in range(self._base - 1, 0, -1):
            j = i << 1
            a, b = nodes[j], nodes[j + 1]
            nodes[i] = a if a > b else b
