"""Differentiable test objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Problem:
    """A differentiable objective on ``R^d``.

    Subclasses set ``dimension`` and implement :meth:`loss` and
    :meth:`gradient`.  ``optimum``/``optimal_value`` and ``lipschitz`` are
    ``None`` when unknown.
    """

    dimension: int
    optimum: np.ndarray | None = None
    optimal_value: float | None = None
    lipschitz: float | None = None

    def loss(self, params: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, params: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def suboptimality(self, params: np.ndarray) -> float:
        if self.optimal_value is None:
            raise ValueError("problem has no known optimal value")
        return self.loss(params) - self.optimal_value

    def _check(self, params) -> np.ndarray:
        theta = np.asarray(params, dtype=np.float64)
        if theta.shape != (self.dimension,):
            raise ValueError(f"expected parameters of shape ({self.dimension},), got {theta.shape}")
        return theta


class Quadratic(Problem):
    """``(scale / 2) ||theta - center||^2``."""

    def __init__(self, center, scale: float = 1.0):
        center = np.array(center, dtype=np.float64)
        if center.ndim != 1:
            raise ValueError("center must be a 1-D vector")
        if not scale > 0:
            raise ValueError(f"scale must be positive, got {scale}")
        center.flags.writeable = False
        self.center = center
        self.scale = float(scale)
        self.dimension = center.shape[0]
        self.optimum = center
        self.optimal_value = 0.0
        self.lipschitz = self.scale

    def loss(self, params) -> float:
        r = self._check(params) - self.center
        return 0.5 * self.scale * float(r @ r)

    def gradient(self, params) -> np.ndarray:
        return self.scale * (self._check(params) - self.center)


def quadratic(d: int, center=None, scale: float = 1.0) -> Quadratic:
    """Quadratic bowl of dimension ``d``.

    ``center`` may be a vector, a scalar fill value, or ``None`` for the origin.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if center is None:
        center = np.zeros(d)
    elif np.ndim(center) == 0:
        center = np.full(d, float(center))
    elif len(center) != d:
        raise ValueError(f"center has length {len(center)}, expected {d}")
    return Quadratic(center, scale)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def add_bias(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    return np.hstack((x, np.ones((x.shape[0], 1))))


class Logistic(Problem):
    """Mean binary cross-entropy of a logistic model with bias, plus L2.

    The bias weight is the last coordinate.  ``lipschitz`` is the upper
    bound ``||X||_op^2 / (4N) + l2`` with the operator norm from power
    iteration.
    """

    def __init__(self, features, labels, l2: float = 0.0):
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("features must be a non-empty 2-D matrix")
        if y.shape != (x.shape[0],):
            raise ValueError(f"labels have shape {y.shape}, expected ({x.shape[0]},)")
        if not np.isfinite(x).all():
            row = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
            raise ValueError(f"non-finite feature in row {row}")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be 0 or 1")
        if l2 < 0:
            raise ValueError(f"l2 must be non-negative, got {l2}")
        self.x = add_bias(x)
        self.y = y
        self.l2 = float(l2)
        self.n = x.shape[0]
        self.dimension = self.x.shape[1]
        self.lipschitz = _operator_norm_sq(self.x) / (4.0 * self.n) + self.l2

    def _loss(self, theta, x, y) -> float:
        z = x @ theta
        # log(1 + e^z) - y z  ==  -y log s(z) - (1 - y) log(1 - s(z))
        data = float(np.mean(np.logaddexp(0.0, z) - y * z))
        return data + 0.5 * self.l2 * float(theta @ theta)

    def _gradient(self, theta, x, y) -> np.ndarray:
        r = _sigmoid(x @ theta) - y
        return x.T @ r / x.shape[0] + self.l2 * theta

    def loss(self, params) -> float:
        return self._loss(self._check(params), self.x, self.y)

    def gradient(self, params) -> np.ndarray:
        return self._gradient(self._check(params), self.x, self.y)

    def batch_gradient(self, params, rows) -> np.ndarray:
        """Gradient of the loss restricted to the given training rows."""
        rows = np.asarray(rows)
        return self._gradient(self._check(params), self.x[rows], self.y[rows])

    def predict_proba(self, params, features=None) -> np.ndarray:
        x = self.x if features is None else add_bias(features)
        return _sigmoid(x @ self._check(params))

    def evaluate(self, params, features, labels) -> tuple[float, float]:
        """(loss, accuracy) on another sample, e.g. the test split."""
        theta = self._check(params)
        x = add_bias(features)
        y = np.asarray(labels, dtype=np.float64)
        pred = _sigmoid(x @ theta) >= 0.5
        return self._loss(theta, x, y), float(np.mean(pred == (y == 1.0)))

    def accuracy(self, params) -> float:
        return float(np.mean((self.predict_proba(params) >= 0.5) == (self.y == 1.0)))


def _operator_norm_sq(x: np.ndarray, iterations: int = 100) -> float:
    """Largest eigenvalue of ``x^T x`` by power iteration from the ones vector."""
    v = np.ones(x.shape[1]) / np.sqrt(x.shape[1])
    eig = 0.0
    for _ in range(iterations):
        w = x.T @ (x @ v)
        eig = float(np.linalg.norm(w))
        if eig == 0.0:
            return 0.0
        v = w / eig
    return eig


def logistic(features, labels, l2: float = 0.0) -> Logistic:
    return Logistic(features, labels, l2)


@dataclass
class NoisyOracle:
    """Gradient oracle adding isotropic Gaussian noise to ``base``.

    Noise comes from a Philox generator keyed by ``seed``, so a fixed seed
    reproduces the same noise sequence.
    """

    base: Problem
    sigma: float
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        self._rng = np.random.Generator(np.random.Philox(self.seed))

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def loss(self, params) -> float:
        return self.base.loss(params)

    def gradient(self, params) -> np.ndarray:
        g = self.base.gradient(params)
        if self.sigma == 0:
            return g
        return g + self.sigma * self._rng.standard_normal(g.shape[0])


def noisy_gradient(oracle: NoisyOracle, params) -> np.ndarray:
    return oracle.gradient(params)
