"""Tempered fractional weight sequences.

The optimizer weights gradient ``j`` steps old by ``w_j * exp(-lambda * j)``.
Two coefficient conventions are supported:

``RISING_FACTORIAL``
    ``w_j = Gamma(alpha + j) / (Gamma(alpha) j!)``, the power-series
    coefficients of ``(1 - z)^(-alpha)``.  Under this convention the infinite
    tempered sum has the closed form ``(1 - exp(-lambda))^(-alpha)``.

``GL_ABSOLUTE``
    ``w_j = |binom(alpha, j)|``, the absolute Grunwald-Letnikov coefficients.
    Their asymptotic decay ``~ j^-(1 + alpha)`` is what :func:`tail_bound`
    describes.

All coefficients come from multiplicative recurrences; no gamma quotients are
formed, so nothing overflows for large ``j``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

#: Hard cap on the number of precomputed terms.
MAX_WINDOW = 10_000_000

_CHUNK = 1 << 16


class Convention(enum.Enum):
    RISING_FACTORIAL = "rising"
    GL_ABSOLUTE = "gl"


@dataclass(frozen=True)
class WeightParams:
    """Fractional order, tempering rate and coefficient convention."""

    alpha: float
    lam: float
    convention: Convention = Convention.RISING_FACTORIAL

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0) or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not (self.lam > 0.0) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be a finite positive number, got {self.lam!r}")
        if not isinstance(self.convention, Convention):
            object.__setattr__(self, "convention", Convention(self.convention))

    @property
    def decay(self) -> float:
        """Per-step tempering factor ``exp(-lambda)``."""
        return math.exp(-self.lam)


def _ratio(j: np.ndarray | int, params: WeightParams):
    # w_j / w_{j-1} for j >= 1
    if params.convention is Convention.RISING_FACTORIAL:
        return (params.alpha + j - 1) / j
    return abs(params.alpha - j + 1) / j


def weight(j: int, params: WeightParams) -> float:
    """Raw coefficient ``w_j`` (without tempering)."""
    if j < 0:
        raise ValueError(f"weight index must be non-negative, got {j}")
    w = 1.0
    for i in range(1, j + 1):
        w *= _ratio(i, params)
    return w


def raw_weights(n: int, params: WeightParams) -> np.ndarray:
    """Return ``w_0, ..., w_n`` as a float64 array."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    j = np.arange(1, n + 1, dtype=np.float64)
    out = np.empty(n + 1)
    out[0] = 1.0
    if n:
        if params.convention is Convention.RISING_FACTORIAL:
            ratios = (params.alpha + j - 1.0) / j
        else:
            ratios = np.abs(params.alpha - j + 1.0) / j
        np.cumprod(ratios, out=out[1:])
    return out


def tempered_weights(n: int, params: WeightParams) -> np.ndarray:
    """Return ``w_j * exp(-lambda j)`` for ``j = 0..n``."""
    return raw_weights(n, params) * np.exp(-params.lam * np.arange(n + 1))


def _tempered_chunks(params: WeightParams, power: int = 1) -> Iterator[np.ndarray]:
    """Yield consecutive blocks of ``(w_j exp(-lambda j))**power`` forever.

    For ``j >= 1`` every block is built from the previous block's last raw
    weight, so the stream is one uninterrupted recurrence.
    """
    start = 0
    last_raw = 1.0
    while True:
        j = np.arange(max(start, 1), start + _CHUNK, dtype=np.float64)
        if params.convention is Convention.RISING_FACTORIAL:
            ratios = (params.alpha + j - 1.0) / j
        else:
            ratios = np.abs(params.alpha - j + 1.0) / j
        raw = last_raw * np.cumprod(ratios)
        if start == 0:
            raw = np.concatenate(([1.0], raw))
        last_raw = float(raw[-1])
        idx = np.arange(start, start + raw.size, dtype=np.float64)
        block = raw * np.exp(-params.lam * idx)
        yield block**power if power != 1 else block
        start += raw.size


def _negligible(last: float, total: float, params: WeightParams) -> bool:
    # remaining terms are dominated by a geometric series started at `last`
    return last == 0.0 or last / -math.expm1(-params.lam) < 1e-17 * total


def _series_sum(params: WeightParams, K: int | None, power: int = 1) -> float:
    """Sum terms ``j = 0..K`` (all terms when ``K`` is None).

    The terms are non-increasing for ``j >= 1``, so an open-ended sum stops
    once the remainder cannot move the total in the last representable digit.
    """
    total = 0.0
    seen = 0
    for block in _tempered_chunks(params, power):
        if K is not None and seen + block.size > K + 1:
            block = block[: K + 1 - seen]
        total += math.fsum(block)
        seen += block.size
        if (K is not None and seen >= K + 1) or block[-1] == 0.0:
            break
        if K is None and _negligible(block[-1], total, params):
            break
    return total


def has_closed_form(params: WeightParams) -> bool:
    return params.convention is Convention.RISING_FACTORIAL


def alignment_coefficient(params: WeightParams) -> float:
    """Infinite tempered weight sum ``d = sum_j w_j exp(-lambda j)``.

    Rising-factorial weights give the closed form ``(1 - exp(-lambda))^-alpha``.
    For GL weights there is no closed form and the series is summed
    numerically instead; check :func:`has_closed_form` to tell them apart.
    """
    if has_closed_form(params):
        return (-math.expm1(-params.lam)) ** (-params.alpha)
    return _series_sum(params, None)


def tempered_partial_sum(params: WeightParams, K: int) -> float:
    """``sum_{j=0}^{K} w_j exp(-lambda j)``."""
    if K < 0:
        raise ValueError(f"K must be non-negative, got {K}")
    return _series_sum(params, K)


class TailBound(NamedTuple):
    value: float
    constant: float
    #: Convention whose coefficient asymptotics the bound is derived from.
    applies_to: Convention


def tail_constant(params: WeightParams) -> float:
    """``Gamma(1 + alpha) / (Gamma(1 - alpha) lambda)``; zero at ``alpha = 1``."""
    a = params.alpha
    # 1/Gamma(1-a) -> 0 as a -> 1 (pole of Gamma at 0)
    rgamma = 0.0 if a >= 1.0 else 1.0 / math.gamma(1.0 - a)
    return math.gamma(1.0 + a) * rgamma / params.lam


def tail_bound(params: WeightParams, k: int, constant: float | None = None) -> TailBound:
    """Upper bound ``C exp(-lambda k) / k^(1 + alpha)`` on the tail past ``k``.

    The bound follows the ``j^-(1 + alpha)`` decay of GL coefficients and is
    only guaranteed for :attr:`Convention.GL_ABSOLUTE`; rising-factorial
    coefficients decay like ``j^(alpha - 1)`` and can exceed it.  Pass
    ``constant`` to evaluate the same shape with a different ``C``.
    """
    if k < 1:
        raise ValueError(f"tail bound needs k >= 1, got {k}")
    c = tail_constant(params) if constant is None else constant
    value = c * math.exp(-params.lam * k) / k ** (1.0 + params.alpha)
    return TailBound(value, c, Convention.GL_ABSOLUTE)


def tail_sum(params: WeightParams, k: int) -> float:
    """Actual tail ``sum_{j>k} w_j exp(-lambda j)``, summed numerically."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    tail = 0.0
    seen = 0
    for block in _tempered_chunks(params):
        lo = max(0, k + 1 - seen)
        if lo < block.size:
            tail += math.fsum(block[lo:])
        seen += block.size
        if seen > k + 1 and _negligible(block[-1], tail, params):
            break
    return tail


class VarianceBound(NamedTuple):
    bound: float
    #: ``sum_j (w_j exp(-lambda j))^2`` summed to convergence.
    empirical: float

    @property
    def holds(self) -> bool:
        return self.empirical <= self.bound


def variance_bound(params: WeightParams) -> VarianceBound:
    """Closed-form bound on the squared tempered weight sum plus the series itself."""
    a, lam = params.alpha, params.lam
    rhs = math.gamma(1.0 + 2.0 * a) / ((2.0 * lam) ** (2.0 * a) * math.gamma(1.0 + a) ** 2)
    return VarianceBound(rhs, _series_sum(params, None, power=2))


def default_window(params: WeightParams, tolerance: float = 1e-12) -> int:
    """Smallest ``W`` whose tempered term drops below ``tolerance`` times the running sum."""
    total = 0.0
    seen = 0
    for block in _tempered_chunks(params):
        partial = total + np.cumsum(block)
        hit = np.flatnonzero(block < tolerance * partial)
        if hit.size:
            return min(seen + int(hit[0]), MAX_WINDOW)
        total = float(partial[-1])
        seen += block.size
        if seen >= MAX_WINDOW:
            return MAX_WINDOW


@dataclass(frozen=True)
class WeightSequence:
    """Precomputed tempered coefficients over a finite window ``0..W``."""

    params: WeightParams
    window: int
    raw: np.ndarray = field(repr=False)
    tempered: np.ndarray = field(repr=False)
    tail_estimate: float

    @classmethod
    def build(cls, params: WeightParams, window: int | None = None) -> "WeightSequence":
        w = default_window(params) if window is None else int(window)
        if not (0 <= w <= MAX_WINDOW):
            raise ValueError(f"window must lie in [0, {MAX_WINDOW}], got {w}")
        raw = raw_weights(w, params)
        tempered = raw * np.exp(-params.lam * np.arange(w + 1))
        raw.flags.writeable = False
        tempered.flags.writeable = False
        if has_closed_form(params):
            tail = max(alignment_coefficient(params) - math.fsum(tempered), 0.0)
        else:
            tail = tail_bound(params, max(w, 1)).value
        return cls(params, w, raw, tempered, tail)

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.tempered)

    def __len__(self) -> int:
        return self.window + 1
