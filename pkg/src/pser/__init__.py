"""Prioritized sequence experience replay and its Cliffwalk testbed."""

from .agent import (ExperimentConfig, ExperimentTrace, Mode, QTable, Strategy,
                    apply_update, mse, oracle_select, run_experiment, td_error)
from .cliffwalk import (CliffwalkSpec, GroundTruth, exhaustive_prefill,
                        ground_truth, step)
from .decay import (DecayConfig, DecayScheme, apply_sampled_update,
                    compute_window, decay_add, decay_max, priority_from_td,
                    retained_update)
from .replay import (EmptyBufferError, InitMode, InvalidSlotError, ReplayBuffer,
                     ReplayError, SampleBatch, Transition, sampling_mass)
from .sumtree import MaxTree, MinTree, SumTree
from .theory import (BoundVariant, ConvergenceAnomalyError, TheoremResult,
                     expected_steps_per, expected_steps_per_interval_sum,
                     expected_steps_pser_bound, monte_carlo_steps,
                     pser_bound_double_sum, theorem_config)

__version__ = "0.1.0"

__all__ = [
    "BoundVariant",
    "CliffwalkSpec",
    "ConvergenceAnomalyError",
    "DecayConfig",
    "DecayScheme",
    "EmptyBufferError",
    "ExperimentConfig",
    "ExperimentTrace",
    "GroundTruth",
    "InitMode",
    "InvalidSlotError",
    "MaxTree",
    "MinTree",
    "Mode",
    "QTable",
    "ReplayBuffer",
    "ReplayError",
    "SampleBatch",
    "Strategy",
    "SumTree",
    "TheoremResult",
    "Transition",
    "apply_sampled_update",
    "apply_update",
    "compute_window",
    "decay_add",
    "decay_max",
    "exhaustive_prefill",
    "expected_steps_per",
    "expected_steps_per_interval_sum",
    "expected_steps_pser_bound",
    "ground_truth",
    "monte_carlo_steps",
    "mse",
    "oracle_select",
    "priority_from_td",
    "pser_bound_double_sum",
    "retained_update",
    "run_experiment",
    "sampling_mass",
    "step",
    "td_error",
    "theorem_config",
    "__version__",
]
