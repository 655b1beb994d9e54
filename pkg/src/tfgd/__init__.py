"""Tempered fractional gradient descent (TFGD)."""

from .optimizer import (
    Mode,
    Optimizer,
    OptimizerConfig,
    OptimizerState,
    Schedule,
    init_state,
    memory_overhead,
    recursion_gap,
    step,
    step_size,
)
from .weights import (
    Convention,
    WeightParams,
    WeightSequence,
    alignment_coefficient,
    tail_bound,
    tempered_partial_sum,
    variance_bound,
    weight,
)

__all__ = [
    "Convention",
    "Mode",
    "Optimizer",
    "OptimizerConfig",
    "OptimizerState",
    "Schedule",
    "WeightParams",
    "WeightSequence",
    "alignment_coefficient",
    "init_state",
    "memory_overhead",
    "recursion_gap",
    "step",
    "step_size",
    "tail_bound",
    "tempered_partial_sum",
    "variance_bound",
    "weight",
]

__version__ = "0.1.0"
