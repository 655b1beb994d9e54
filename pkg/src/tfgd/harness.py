"""Training experiments, convergence metrics, rate fits and scaling benchmarks."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import data as data_mod
from .optimizer import (
    Mode,
    OptimizerConfig,
    init_state,
    memory_overhead,
    step,
)
from .problems import Logistic, NoisyOracle, Problem, logistic, quadratic

METRICS_HEADER = ("epoch", "train_loss", "test_loss", "train_acc", "test_acc", "eta", "cumulative_ms")
SUMMARY_HEADER = (
    "optimizer",
    "test_accuracy",
    "final_loss",
    "convergence_epoch",
    "total_ms",
    "memory_units",
)
RATE_HEADER = ("K_min", "K_max", "slope", "intercept", "r_squared")
TIMING_COLUMNS = frozenset({"cumulative_ms", "total_ms"})

CONVERGENCE_DEFINITION = (
    "convergence epoch = first epoch e with train_loss(e) - final_train_loss "
    "<= tol * max(1, final_train_loss)"
)


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, param_norm: float):
        super().__init__(f"non-finite loss at epoch {epoch} (last parameter norm {param_norm:.6g})")
        self.epoch = epoch
        self.param_norm = param_norm


@dataclass(frozen=True)
class QuadraticSpec:
    dim: int = 10
    scale: float = 1.0
    center: float = 1.0
    #: per-coordinate gradient noise; 0 gives exact gradients
    sigma: float = 0.0


@dataclass(frozen=True)
class WDBCSpec:
    path: str
    test_fraction: float = 0.2
    l2: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: QuadraticSpec | WDBCSpec
    optimizers: Mapping[str, OptimizerConfig]
    epochs: int = 100
    #: None runs one full-batch step per epoch
    batch_size: int | None = None
    seed: int = 42
    convergence_tol: float = 1e-2

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.optimizers:
            raise ValueError("at least one optimizer is required")

    def echo(self) -> dict:
        return _plain(self)

    def digest(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _plain(obj):
    if is_dataclass(obj):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float
    eta: float
    cumulative_ms: float


class Convergence(NamedTuple):
    epoch: int
    converged: bool


@dataclass
class TrainReport:
    optimizer: str
    rows: list[EpochRow]
    initial_loss: float
    convergence: Convergence
    memory_overhead_units: float
    config: dict
    params: np.ndarray = field(repr=False)
    #: per-step gradients, kept only when requested
    gradients: np.ndarray | None = field(default=None, repr=False)

    @property
    def final(self) -> EpochRow:
        return self.rows[-1]

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.rows])


def convergence_epoch(report_or_losses, tol: float = 1e-2) -> Convergence:
    """First epoch whose train loss is within ``tol * max(1, final)`` of the final loss.

    If only the last epoch qualifies the run is flagged as not converged.
    """
    if isinstance(report_or_losses, TrainReport):
        losses = report_or_losses.train_losses
    else:
        losses = np.asarray(report_or_losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("empty loss sequence")
    final = losses[-1]
    band = tol * max(1.0, final)
    epoch = int(np.flatnonzero(losses - final <= band)[0]) + 1
    return Convergence(epoch, epoch < losses.size)


class _Prepared(NamedTuple):
    problem: Problem
    test: tuple[np.ndarray, np.ndarray] | None
    noise_sigma: float


def _prepare(config: ExperimentConfig) -> _Prepared:
    spec = config.problem
    if isinstance(spec, QuadraticSpec):
        if config.batch_size is not None:
            raise ValueError("mini-batches are only defined for dataset problems")
        return _Prepared(quadratic(spec.dim, spec.center, spec.scale), None, spec.sigma)
    ds = data_mod.load_wdbc(spec.path)
    sp = data_mod.split(ds, config.seed, spec.test_fraction)
    ds = data_mod.standardize(ds, sp)
    if config.batch_size is not None and config.batch_size > sp.train.size:
        raise ValueError(
            f"batch size {config.batch_size} exceeds training-set size {sp.train.size}"
        )
    x_tr, y_tr = ds.subset(sp.train)
    return _Prepared(logistic(x_tr, y_tr, spec.l2), ds.subset(sp.test), 0.0)


def _train(
    name: str,
    opt: OptimizerConfig,
    prep: _Prepared,
    config: ExperimentConfig,
    record_gradients: bool,
) -> TrainReport:
    problem = prep.problem
    state = init_state(np.zeros(problem.dimension), opt)
    oracle = NoisyOracle(problem, prep.noise_sigma, config.seed) if prep.noise_sigma else problem
    batch_rng = np.random.Generator(np.random.Philox(key=config.seed))
    is_logistic = isinstance(problem, Logistic)
    n_train = problem.n if is_logistic else 0

    rows: list[EpochRow] = []
    grads: list[np.ndarray] = []
    initial = problem.loss(state.params)
    elapsed = 0.0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        if config.batch_size is None:
            batches: Iterable = (None,)
        else:
            order = batch_rng.permutation(n_train)
            batches = (order[i : i + config.batch_size] for i in range(0, n_train, config.batch_size))
        for rows_idx in batches:
            if rows_idx is None:
                g = oracle.gradient(state.params)
            else:
                g = problem.batch_gradient(state.params, rows_idx)
            if record_gradients:
                grads.append(np.array(g))
            step(state, g, opt)
        elapsed += (time.perf_counter() - t0) * 1e3

        train_loss = problem.loss(state.params)
        if not math.isfinite(train_loss):
            raise DivergenceError(epoch, float(np.linalg.norm(state.params)))
        if is_logistic:
            train_acc = problem.accuracy(state.params)
            test_loss, test_acc = problem.evaluate(state.params, *prep.test)
        else:
            test_loss, train_acc, test_acc = train_loss, math.nan, math.nan
        rows.append(EpochRow(epoch, train_loss, test_loss, train_acc, test_acc, state.last_eta, elapsed))

    conv = convergence_epoch([r.train_loss for r in rows], config.convergence_tol)
    if opt.mode is Mode.SGD:
        units = 0.0
    else:
        units = memory_overhead(problem.dimension, opt.weights.lam, state.step_count)
    return TrainReport(
        optimizer=name,
        rows=rows,
        initial_loss=initial,
        convergence=conv,
        memory_overhead_units=units,
        config={"digest": config.digest(), "optimizer": _plain(opt), **config.echo()},
        params=state.params.copy(),
        gradients=np.array(grads) if record_gradients else None,
    )


def run_experiment(config: ExperimentConfig, record_gradients: bool = False) -> dict[str, TrainReport]:
    """Train every configured optimizer from ``theta_0 = 0`` on the same problem."""
    prep = _prepare(config)
    return {
        name: _train(name, opt, prep, config, record_gradients)
        for name, opt in config.optimizers.items()
    }


# ---------------------------------------------------------------------------
# rate fitting


class RateFit(NamedTuple):
    exponent: float
    intercept: float
    r_squared: float
    k_min: int
    k_max: int


def running_average(values) -> np.ndarray:
    """``out[K-1] = mean(values[:K])``."""
    v = np.asarray(values, dtype=np.float64)
    return np.cumsum(v) / np.arange(1, v.size + 1)


def _loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_rate(sequence, k_min: int, k_max: int) -> RateFit:
    """Least-squares slope of ``log sequence[K-1]`` against ``log K`` for ``K`` in ``[k_min, k_max]``.

    Pass ``running_average(suboptimality)`` to fit the averaged-iterate rate.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if k_min < 1 or k_max > seq.size:
        raise ValueError(f"K range [{k_min}, {k_max}] outside sequence of length {seq.size}")
    if k_max - k_min + 1 < 10:
        raise ValueError("a rate fit needs at least 10 points")
    ks = np.arange(k_min, k_max + 1)
    ys = seq[ks - 1]
    if not (ys > 0).all():
        bad = int(ks[np.flatnonzero(~(ys > 0))[0]])
        raise ValueError(f"non-positive value at K={bad}; cannot take logarithms")
    slope, intercept, r2 = _loglog(ks.astype(np.float64), ys)
    return RateFit(slope, intercept, r2, int(k_min), int(k_max))


def suboptimality_trace(problem: Problem, opt: OptimizerConfig, steps: int, theta0=None, oracle=None) -> np.ndarray:
    """``L(theta_k) - L*`` for ``k = 0..steps-1`` (evaluated before each update)."""
    theta0 = np.zeros(problem.dimension) if theta0 is None else theta0
    source = problem if oracle is None else oracle
    state = init_state(theta0, opt)
    out = np.empty(steps)
    for k in range(steps):
        out[k] = problem.suboptimality(state.params)
        step(state, source.gradient(state.params), opt)
    return out


def stochastic_suboptimality(
    problem: Problem,
    opt: OptimizerConfig,
    sigma: float,
    seeds: Sequence[int],
    checkpoints: Sequence[int],
) -> np.ndarray:
    """Mean over seeds of ``L(theta_K) - L*`` after ``K`` noisy steps, per checkpoint."""
    cps = sorted(int(c) for c in checkpoints)
    totals = np.zeros(len(cps))
    for seed in seeds:
        oracle = NoisyOracle(problem, sigma, seed)
        state = init_state(np.zeros(problem.dimension), opt)
        done = 0
        for i, K in enumerate(cps):
            for _ in range(K - done):
                step(state, oracle.gradient(state.params), opt)
            done = K
            totals[i] += problem.suboptimality(state.params)
    return totals / len(seeds)


# ---------------------------------------------------------------------------
# scaling benchmark


class BenchRow(NamedTuple):
    d: int
    tfgd_step_us: float
    sgd_step_us: float
    memory_units: float


def bench_scaling(dims: Sequence[int], steps: int, config: OptimizerConfig, warmup: int = 10) -> list[BenchRow]:
    """Median wall time of one gradient-plus-update step, TFGD (Recursive) vs SGD.

    TFGD and SGD steps are interleaved so drifts in machine load hit both.
    """
    dims = list(dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError("dimensions must be positive")
    if dims != sorted(dims):
        raise ValueError("dimensions must be sorted ascending")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    tfgd_cfg = OptimizerConfig(Mode.RECURSIVE, config.weights, config.eta0, config.schedule)
    sgd_cfg = OptimizerConfig(Mode.SGD, config.weights, config.eta0, config.schedule)
    out = []
    for d in dims:
        problem = quadratic(d, 1.0, 1.0)
        a = init_state(np.zeros(d), tfgd_cfg)
        b = init_state(np.zeros(d), sgd_cfg)
        ta, tb = [], []
        clock = time.perf_counter_ns
        for i in range(warmup + steps):
            t0 = clock()
            step(a, problem.gradient(a.params), tfgd_cfg)
            t1 = clock()
            step(b, problem.gradient(b.params), sgd_cfg)
            t2 = clock()
            if i >= warmup:
                ta.append(t1 - t0)
                tb.append(t2 - t1)
        out.append(
            BenchRow(
                d,
                float(np.median(ta)) / 1e3,
                float(np.median(tb)) / 1e3,
                memory_overhead(d, config.weights.lam, steps),
            )
        )
    return out


def scaling_slope(rows: Sequence[BenchRow]) -> float:
    """Log-log slope of TFGD step time against dimension."""
    d = np.array([r.d for r in rows], dtype=np.float64)
    t = np.array([r.tfgd_step_us for r in rows])
    return _loglog(d, t)[0]


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_metrics_csv(report: TrainReport, path) -> None:
    _write(path, METRICS_HEADER, ([getattr(r, c) for c in METRICS_HEADER] for r in report.rows))


def summary_rows(reports: Mapping[str, TrainReport]) -> list[tuple]:
    return [
        (
            name,
            r.final.test_acc,
            r.final.train_loss,
            r.convergence.epoch,
            r.final.cumulative_ms,
            r.memory_overhead_units,
        )
        for name, r in reports.items()
    ]


def write_summary_csv(reports: Mapping[str, TrainReport], path) -> None:
    _write(path, SUMMARY_HEADER, summary_rows(reports))


def write_rate_fit_csv(fits: Iterable[RateFit], path) -> None:
    _write(path, RATE_HEADER, ((f.k_min, f.k_max, f.exponent, f.intercept, f.r_squared) for f in fits))


def write_reports(reports: Mapping[str, TrainReport], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, report in reports.items():
        p = out / f"metrics_{name}.csv"
        write_metrics_csv(report, p)
        written.append(p)
    p = out / "summary.csv"
    write_summary_csv(reports, p)
    written.append(p)
    return written
