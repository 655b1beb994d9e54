"""TFGD parameter updates.

Four modes share one state type:

* ``EXACT`` keeps every past gradient and applies the full tempered sum
  ``sum_j w_j exp(-lambda j) g_{k-j}``.  Memory grows as ``O(k d)``; it is a
  correctness reference, not a production mode.
* ``WINDOWED`` keeps only the newest ``W`` gradients in a ring buffer.
* ``RECURSIVE`` keeps one accumulator ``S <- g + exp(-lambda) S``.  This is the
  single-vector recursion; it uses ``w_0 = 1`` for every age, so its effective
  kernel is ``exp(-lambda j)`` rather than ``w_j exp(-lambda j)``.  See
  :func:`recursion_gap`.
* ``SGD`` is the memoryless baseline ``theta <- theta - eta g``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .weights import WeightParams, tail_bound, tempered_weights


class Mode(enum.Enum):
    EXACT = "exact"
    WINDOWED = "windowed"
    RECURSIVE = "recursive"
    SGD = "sgd"


class Schedule(enum.Enum):
    CONSTANT = "constant"
    POWER_DECAY = "power"


def window_for_tolerance(params: WeightParams, tolerance: float) -> int:
    """Smallest ``W >= 1`` with ``tail_bound(W) < tolerance``."""
    if not tolerance > 0:
        raise ValueError(f"tail tolerance must be positive, got {tolerance}")
    w = 1
    while tail_bound(params, w).value >= tolerance:
        w += 1
    return w


@dataclass(frozen=True)
class OptimizerConfig:
    mode: Mode
    weights: WeightParams
    eta0: float
    schedule: Schedule = Schedule.CONSTANT
    window: int | None = None
    tail_tolerance: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if not (self.eta0 > 0) or not math.isfinite(self.eta0):
            raise ValueError(f"eta0 must be a finite positive number, got {self.eta0!r}")
        if self.mode is Mode.WINDOWED:
            if self.window is None:
                object.__setattr__(
                    self, "window", window_for_tolerance(self.weights, self.tail_tolerance)
                )
            elif self.window < 1:
                raise ValueError(f"window must be >= 1, got {self.window}")

    @classmethod
    def sgd(cls, eta0: float, schedule: Schedule = Schedule.CONSTANT, alpha: float = 1.0):
        # weights are unused by SGD except for the PowerDecay exponent
        return cls(Mode.SGD, WeightParams(alpha, 1.0), eta0, schedule)


def step_size(k: int, config: OptimizerConfig) -> float:
    """Learning rate for the ``k``-th update (``k`` counts from 1 under PowerDecay)."""
    if config.schedule is Schedule.CONSTANT:
        return config.eta0
    if k < 1:
        raise ValueError(f"PowerDecay step index starts at 1, got {k}")
    return config.eta0 / k ** (config.weights.alpha / 2.0)


@dataclass
class OptimizerState:
    """Mutable optimizer state; owned by one run at a time."""

    params: np.ndarray
    step_count: int = 0
    #: gradient rows; chronological in EXACT mode, a ring in WINDOWED mode
    history: np.ndarray | None = field(default=None, repr=False)
    history_len: int = 0
    #: ring slot that receives the next gradient (WINDOWED mode)
    head: int = 0
    accumulator: np.ndarray | None = None
    #: direction subtracted on the last step (tempered sum, S, or the gradient)
    direction: np.ndarray | None = field(default=None, repr=False)
    last_eta: float = float("nan")
    _coef: np.ndarray | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.params.shape[0]

    def stored_gradients(self) -> np.ndarray:
        """Stored gradients, oldest first."""
        if self.history is None or self.history_len == 0:
            return np.empty((0, self.dimension))
        if self.head == 0 or self.history_len < self.history.shape[0]:
            return self.history[: self.history_len]
        return np.concatenate((self.history[self.head :], self.history[: self.head]))


def init_state(params, config: OptimizerConfig) -> OptimizerState:
    theta = np.array(params, dtype=np.float64)
    if theta.ndim != 1:
        raise ValueError("parameters must be a 1-D vector")
    state = OptimizerState(theta)
    d = theta.shape[0]
    if config.mode is Mode.RECURSIVE:
        state.accumulator = np.zeros(d)
        state.direction = state.accumulator
    elif config.mode is Mode.EXACT:
        state.history = np.empty((16, d))
        state._coef = tempered_weights(15, config.weights)
    elif config.mode is Mode.WINDOWED:
        state.history = np.empty((config.window, d))
        state._coef = tempered_weights(config.window - 1, config.weights)
    return state


def _check_gradient(state: OptimizerState, gradient) -> np.ndarray:
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.params.shape:
        raise ValueError(
            f"gradient has shape {g.shape}, parameters have shape {state.params.shape}"
        )
    if not np.isfinite(g).all():
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise ValueError(f"non-finite gradient entry at index {bad}: {g[bad]!r}")
    return g


def _ensure_capacity(state: OptimizerState, config: OptimizerConfig) -> None:
    n = state.history_len
    if n < state.history.shape[0]:
        return
    grown = np.empty((2 * state.history.shape[0], state.dimension))
    grown[:n] = state.history
    state.history = grown
    state._coef = tempered_weights(grown.shape[0] - 1, config.weights)


def step(state: OptimizerState, gradient, config: OptimizerConfig) -> OptimizerState:
    """Apply one update in place and return ``state``."""
    g = _check_gradient(state, gradient)
    eta = step_size(state.step_count + 1, config)
    mode = config.mode

    if mode is Mode.SGD:
        direction = g
    elif mode is Mode.RECURSIVE:
        s = state.accumulator
        s *= config.weights.decay
        s += g
        direction = s
    else:
        if mode is Mode.EXACT:
            _ensure_capacity(state, config)
            state.history[state.history_len] = g
            state.history_len += 1
        else:
            cap = state.history.shape[0]
            state.history[state.head] = g
            state.head = (state.head + 1) % cap
            state.history_len = min(state.history_len + 1, cap)
        n = state.history_len
        # oldest-first rows against reversed coefficients: age j gets w_j e^{-lambda j}
        direction = state._coef[n - 1 :: -1] @ state.stored_gradients()

    state.params -= eta * direction
    state.direction = direction
    state.last_eta = eta
    state.step_count += 1
    return state


class Optimizer:
    """Convenience wrapper pairing a config with its state."""

    def __init__(self, params, config: OptimizerConfig):
        self.config = config
        self.state = init_state(params, config)

    @property
    def params(self) -> np.ndarray:
        return self.state.params

    def step(self, gradient) -> np.ndarray:
        step(self.state, gradient, self.config)
        return self.state.params


def replay_directions(gradients, config: OptimizerConfig) -> np.ndarray:
    """Feed a fixed gradient stream through ``config`` and record each step's direction."""
    stream = np.asarray(gradients, dtype=np.float64)
    if stream.ndim != 2:
        raise ValueError("gradient stream must be a 2-D array (steps x dimension)")
    state = init_state(np.zeros(stream.shape[1]), config)
    out = np.empty_like(stream)
    for k, g in enumerate(stream):
        step(state, g, config)
        out[k] = state.direction
    return out


def recursion_gap(exact_directions: Sequence, recursive_directions: Sequence) -> np.ndarray:
    """Per-step norm of the difference between recursive and exact tempered sums.

    Both sequences must come from the same gradient stream, e.g. via
    :func:`replay_directions` with EXACT and RECURSIVE configs.
    """
    a = np.asarray(exact_directions, dtype=np.float64)
    b = np.asarray(recursive_directions, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"stream length mismatch: {a.shape} vs {b.shape}")
    return np.linalg.norm(b - a, axis=-1)


def stream_recursion_gap(gradients, weights: WeightParams) -> np.ndarray:
    """:func:`recursion_gap` for a gradient stream under the given weights."""
    exact = replay_directions(gradients, OptimizerConfig(Mode.EXACT, weights, 1.0))
    rec = replay_directions(gradients, OptimizerConfig(Mode.RECURSIVE, weights, 1.0))
    return recursion_gap(exact, rec)


def memory_overhead(d: int, lam: float, K: int) -> float:
    """Stored-scalar overhead ``d (1 - exp(-lambda K)) / lambda``."""
    if d < 1 or K < 1:
        raise ValueError(f"need d >= 1 and K >= 1, got d={d}, K={K}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return d * -math.expm1(-lam * K) / lam
