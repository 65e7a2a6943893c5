"""Priority-update pipeline: TD-derived priorities, windowed backward decay.

A sampled transition's new priority keeps a configurable fraction of its old
one (``retained_update``), and the TD-derived priority is propagated backward
over the same episode's predecessors, shrinking geometrically with the decay
coefficient. Two propagation schemes exist: MAX (elementwise max against the
existing priority) and ADD (additive, clamped at the current buffer maximum).

The decay window is derived from the coefficient: propagation stops once the
decayed value falls below a negligibility cutoff (1% of the anchor by
default). A window of 0 disables propagation entirely, which together with
zero retention reduces the pipeline to plain proportional prioritization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .replay import InitMode, ReplayBuffer

DEFAULT_CUTOFF = 0.01


class DecayScheme(Enum):
    MAX = "max"
    ADD = "add"


def compute_window(rho: float, cutoff: float = DEFAULT_CUTOFF) -> int:
    """Backward steps until a decayed priority drops below ``cutoff``.

    floor(ln(cutoff) / ln(rho)), at least 1. Floor semantics: the value at
    the last in-window step may sit marginally above the cutoff, the value
    one step past it is always below.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if not 0.0 < cutoff < 1.0:
        raise ValueError(f"cutoff must be in (0, 1), got {cutoff}")
    # tiny nudge keeps exact integer ratios (e.g. rho 0.1, cutoff 0.01) stable
    w = math.floor(math.log(cutoff) / math.log(rho) + 1e-12)
    return max(w, 1)


@dataclass(frozen=True, slots=True)
class DecayConfig:
    """All priority-pipeline hyperparameters.

    ``eta``, ``epsilon``, ``alpha`` and ``beta`` default to None and are
    filled in by ``resolved`` according to the experiment protocol: the
    exact learning-rate-1 protocol zeroes them all, the step-size-1/4
    benchmark protocol uses the Cliffwalk values (alpha 0.5, epsilon 1e-4,
    no retention, beta 0.5). ``window=None`` means "derive from rho and
    cutoff".
    """

    rho: float = 0.4
    window: int | None = None
    eta: float | None = None
    epsilon: float | None = None
    alpha: float | None = None
    beta: float | None = None
    scheme: DecayScheme = DecayScheme.MAX
    init_mode: InitMode = InitMode.MAX_PRIO
    fixed_priority: float | None = None
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError(f"cutoff must be in (0, 1), got {self.cutoff}")
        if self.window is not None and self.window < 0:
            raise ValueError(f"window must be >= 0, got {self.window}")
        if self.eta is not None and not 0.0 <= self.eta < 1.0:
            raise ValueError(f"eta must be in [0, 1), got {self.eta}")
        if self.epsilon is not None and self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.init_mode is InitMode.FIXED and self.fixed_priority is None:
            raise ValueError("FIXED init_mode requires fixed_priority")

    @property
    def is_resolved(self) -> bool:
        return None not in (self.window, self.eta, self.epsilon,
                            self.alpha, self.beta)

    def resolved(self, exact_protocol: bool = False) -> "DecayConfig":
        """Fill unset fields with protocol defaults.

        exact_protocol=True is the learning-rate-1 convergence analysis
        setting (full prioritization, no retention, no epsilon floor, no
        importance weighting). The benchmark defaults follow the Cliffwalk
        protocol (alpha 0.5, epsilon 1e-4, eta 0: the protocol has no
        retention term) with beta 0.5; eta = 0.7 is the published
        large-scale operating point and remains a config knob.
        """
        if exact_protocol:
            defaults = dict(eta=0.0, epsilon=0.0, alpha=1.0, beta=0.0)
        else:
            defaults = dict(eta=0.0, epsilon=1e-4, alpha=0.5, beta=0.5)
        return replace(
            self,
            window=self.window if self.window is not None
            else compute_window(self.rho, self.cutoff),
            eta=self.eta if self.eta is not None else defaults["eta"],
            epsilon=self.epsilon if self.epsilon is not None else defaults["epsilon"],
            alpha=self.alpha if self.alpha is not None else defaults["alpha"],
            beta=self.beta if self.beta is not None else defaults["beta"],
        )

    def _require_resolved(self) -> None:
        if not self.is_resolved:
            raise ValueError("DecayConfig has unresolved fields; call resolved()")


def priority_from_td(delta: float, epsilon: float) -> float:
    """New-transition priority |delta| + epsilon."""
    if math.isnan(delta):
        raise ValueError("delta must not be NaN")
    if epsilon < 0.0 or math.isnan(epsilon):
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return abs(delta) + epsilon


def retained_update(delta: float, old_p: float, cfg: DecayConfig) -> float:
    """Priority of a re-sampled transition: max(|delta| + eps, eta * old)."""
    cfg._require_resolved()
    if math.isnan(delta) or math.isnan(old_p):
        raise ValueError("delta and old_p must not be NaN")
    if old_p < 0.0:
        raise ValueError(f"old_p must be >= 0, got {old_p}")
    return max(abs(delta) + cfg.epsilon, cfg.eta * old_p)


def _walk_backward(buffer: ReplayBuffer, anchor_slot: int, window: int):
    """Yield (offset, slot) for in-episode predecessors of the anchor.

    Stops at an episode boundary or where the ring has evicted the
    predecessor; never yields the anchor itself.
    """
    episode = buffer.episode_id(anchor_slot)
    slot = anchor_slot
    for offset in range(1, window + 1):
        prev = buffer.predecessor(slot)
        if prev is None or buffer.episode_id(prev) != episode:
            return
        yield offset, prev
        slot = prev


def decay_max(buffer: ReplayBuffer, anchor_slot: int, p_anchor: float,
              cfg: DecayConfig) -> int:
    """MAX-scheme backward decay; returns the number of slots changed.

    Predecessor ``l`` steps back becomes max(p_anchor * rho**l, old); the
    max keeps an earlier, larger decay from being overwritten.
    """
    cfg._require_resolved()
    rho = cfg.rho
    changed = 0
    for offset, slot in _walk_backward(buffer, anchor_slot, cfg.window):
        candidate = p_anchor * rho**offset
        if candidate > buffer.raw_priority(slot):
            buffer.update_priority(slot, candidate)
            changed += 1
    return changed


def decay_add(buffer: ReplayBuffer, anchor_slot: int, p_anchor: float,
              p_max: float, cfg: DecayConfig) -> int:
    """ADD-scheme backward decay clamped at ``p_max``; returns slots changed.

    Predecessor ``l`` steps back becomes min(p_anchor * rho**l + old, p_max),
    keeping decayed priorities below the current buffer maximum.
    """
    cfg._require_resolved()
    rho = cfg.rho
    changed = 0
    for offset, slot in _walk_backward(buffer, anchor_slot, cfg.window):
        old = buffer.raw_priority(slot)
        candidate = p_anchor * rho**offset + old
        if candidate > p_max:
            candidate = p_max
        if candidate != old:
            buffer.update_priority(slot, candidate)
            changed += 1
    return changed


def apply_sampled_update(buffer: ReplayBuffer, slot: int, delta: float,
                         cfg: DecayConfig,
                         decay_delta: float | None = None) -> None:
    """Full pipeline for one sampled transition.

    Sets the slot's priority via ``retained_update`` and then propagates the
    TD-derived priority (not the retained one) backward under the configured
    scheme. ``decay_delta`` lets the caller anchor the propagation on a
    different TD error than the retention (the experiment loop anchors on
    the error observed at sampling time while the slot's own priority uses
    the post-update error); by default both use ``delta``.
    """
    cfg._require_resolved()
    old = buffer.raw_priority(slot)
    buffer.update_priority(slot, retained_update(delta, old, cfg))
    if cfg.window == 0:
        return
    anchor_delta = delta if decay_delta is None else decay_delta
    p_anchor = priority_from_td(anchor_delta, cfg.epsilon)
    if cfg.scheme is DecayScheme.MAX:
        decay_max(buffer, slot, p_anchor, cfg)
    else:
        decay_add(buffer, slot, p_anchor, buffer.max_raw_priority(), cfg)
