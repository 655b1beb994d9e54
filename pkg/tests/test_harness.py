import csv
import math

import numpy as np
import pytest

from tfgd.harness import (
    METRICS_HEADER,
    RATE_HEADER,
    SUMMARY_HEADER,
    BenchRow,
    DivergenceError,
    ExperimentConfig,
    QuadraticSpec,
    RateFit,
    WDBCSpec,
    bench_scaling,
    convergence_epoch,
    fit_rate,
    run_experiment,
    running_average,
    scaling_slope,
    stochastic_suboptimality,
    suboptimality_trace,
    write_rate_fit_csv,
    write_reports,
)
from tfgd.optimizer import Mode, OptimizerConfig, Schedule, stream_recursion_gap
from tfgd.problems import logistic, quadratic
from tfgd.weights import WeightParams

W = WeightParams(0.6, 0.5)


def tfgd(eta=0.1, weights=W, mode=Mode.RECURSIVE, **kw):
    return OptimizerConfig(mode, weights, eta, **kw)


def sgd(eta=0.1):
    return OptimizerConfig.sgd(eta)


class TestConfig:
    def test_epochs(self):
        with pytest.raises(ValueError):
            ExperimentConfig(QuadraticSpec(), {"s": sgd()}, epochs=0)

    def test_batch(self):
        with pytest.raises(ValueError):
            ExperimentConfig(QuadraticSpec(), {"s": sgd()}, batch_size=0)

    def test_batch_larger_than_train(self, wdbc_path):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"s": sgd()}, epochs=1, batch_size=10_000)
        with pytest.raises(ValueError, match="exceeds"):
            run_experiment(cfg)

    def test_digest_stable(self):
        a = ExperimentConfig(QuadraticSpec(), {"s": sgd()})
        b = ExperimentConfig(QuadraticSpec(), {"s": sgd()})
        assert a.digest() == b.digest()
        assert a.digest() != ExperimentConfig(QuadraticSpec(), {"s": sgd()}, seed=1).digest()


class TestRunExperiment:
    def test_sgd_quadratic_closed_form(self):
        cfg = ExperimentConfig(QuadraticSpec(dim=10, scale=1.0, center=1.0), {"sgd": sgd(0.5)}, epochs=50)
        rep = run_experiment(cfg)["sgd"]
        loss0 = rep.initial_loss
        assert loss0 == 5.0
        for r in rep.rows:
            assert r.train_loss == pytest.approx(0.25**r.epoch * loss0, abs=1e-10, rel=1e-12)

    def test_report_invariants(self, wdbc_path):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd(), "s": sgd()}, epochs=20)
        for rep in run_experiment(cfg).values():
            assert len(rep.rows) == 20
            ms = [r.cumulative_ms for r in rep.rows]
            assert all(b >= a for a, b in zip(ms, ms[1:]))
            for r in rep.rows:
                assert 0 <= r.train_acc <= 1 and 0 <= r.test_acc <= 1

    def test_first_epoch_is_one_gradient_step(self, wdbc_path, wdbc_split):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd()}, epochs=1)
        rep = run_experiment(cfg)["t"]
        ds, sp = wdbc_split
        x, y = ds.subset(sp.train)
        xb = np.hstack((x, np.ones((x.shape[0], 1))))
        # hand step from theta = 0: sigmoid(0) = 1/2
        g = xb.T @ (0.5 - y) / x.shape[0]
        theta1 = -0.1 * g
        z = xb @ theta1
        expected = np.mean(np.logaddexp(0, z) - y * z)
        assert rep.initial_loss == pytest.approx(math.log(2), abs=1e-15)
        assert rep.rows[0].train_loss == pytest.approx(expected, rel=1e-12)
        assert rep.rows[0].train_loss < rep.initial_loss

    def test_minibatch_deterministic(self, wdbc_path):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd()}, epochs=3, batch_size=32)
        a, b = run_experiment(cfg)["t"], run_experiment(cfg)["t"]
        assert a.params.tobytes() == b.params.tobytes()
        full = run_experiment(ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd()}, epochs=3))["t"]
        assert not np.array_equal(a.params, full.params)

    def test_minibatch_needs_dataset(self):
        with pytest.raises(ValueError, match="mini-batch"):
            run_experiment(ExperimentConfig(QuadraticSpec(), {"s": sgd()}, batch_size=4))

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence(self):
        cfg = ExperimentConfig(QuadraticSpec(scale=10.0), {"s": sgd(1e200)}, epochs=5)
        with pytest.raises(DivergenceError) as info:
            run_experiment(cfg)
        assert info.value.epoch == 1

    def test_memory_units(self, wdbc_path):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd(), "s": sgd()}, epochs=100)
        reps = run_experiment(cfg)
        # 30 features plus bias
        assert reps["t"].memory_overhead_units == pytest.approx(31 * (1 - math.exp(-50)) / 0.5)
        assert reps["s"].memory_overhead_units == 0.0

    def test_recursion_gap_shrinks_with_lambda(self, wdbc_path):
        gaps = []
        for lam in (0.25, 0.5, 1.0, 2.0):
            w = WeightParams(0.6, lam)
            cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd(weights=w)}, epochs=100)
            rep = run_experiment(cfg, record_gradients=True)["t"]
            assert rep.gradients.shape == (100, 31)
            gaps.append(stream_recursion_gap(rep.gradients, w)[-1])
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))


class TestConvergenceEpoch:
    def test_band_hit(self):
        # strictly decreasing; gap to the final value drops to <= 0.01 at epoch 35
        losses = [0.05 + 0.011 + 0.1 * (35 - e) if e < 35 else 0.05 + 0.009 * (65 - e) / 30 for e in range(1, 66)]
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert convergence_epoch(losses) == (35, True)

    def test_constant(self):
        assert convergence_epoch([0.3] * 10) == (1, True)

    def test_never_converged(self):
        ep = convergence_epoch([5.0, 4.0, 3.0, 2.0, 1.0])
        assert ep.epoch == 5 and not ep.converged

    def test_wdbc_tfgd_faster(self, wdbc_path):
        cfg = ExperimentConfig(WDBCSpec(str(wdbc_path)), {"t": tfgd(), "s": sgd()}, epochs=100, seed=42)
        reps = run_experiment(cfg)
        assert reps["t"].convergence.epoch < reps["s"].convergence.epoch


class TestRateFit:
    @pytest.mark.parametrize("p", [1.0, 0.6])
    def test_synthetic_power_law(self, p):
        ks = np.arange(1, 3001)
        fit = fit_rate(3.7 / ks**p, 50, 2000)
        assert fit.exponent == pytest.approx(-p, abs=1e-6)
        assert fit.intercept == pytest.approx(math.log(3.7), abs=1e-6)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_positive(self):
        seq = np.ones(100)
        seq[60] = 0.0
        with pytest.raises(ValueError, match="K=61"):
            fit_rate(seq, 10, 90)

    def test_needs_ten_points(self):
        with pytest.raises(ValueError):
            fit_rate(np.ones(100), 10, 18)

    def test_running_average(self):
        np.testing.assert_allclose(running_average([1, 2, 3, 6]), [1, 1.5, 2, 3])

    def test_convex_rate_exact_mode(self):
        q = quadratic(10, 1.0, 1.0)
        opt = OptimizerConfig(Mode.EXACT, W, 1.0 / q.lipschitz)
        sub = suboptimality_trace(q, opt, 2000)
        fit = fit_rate(running_average(sub), 50, 2000)
        assert -1.3 <= fit.exponent <= -0.7
        assert fit.r_squared >= 0.95

    def test_csv(self, tmp_path):
        p = tmp_path / "rate.csv"
        write_rate_fit_csv([RateFit(-1.0, 0.5, 0.99, 50, 2000)], p)
        rows = list(csv.reader(p.open()))
        assert tuple(rows[0]) == RATE_HEADER
        assert rows[1] == ["50", "2000", "-1.0", "0.5", "0.99"]


class TestStochastic:
    def test_decreasing_mean_suboptimality(self):
        q = quadratic(10, 1.0, 1.0)
        opt = OptimizerConfig(Mode.RECURSIVE, W, 0.1, Schedule.POWER_DECAY)
        m = stochastic_suboptimality(q, opt, 0.1, range(20), [100, 400, 1600])
        assert m[2] < m[1] < m[0]

    def test_zero_noise_matches_trace(self):
        q = quadratic(4, 1.0, 1.0)
        opt = OptimizerConfig(Mode.RECURSIVE, W, 0.1)
        m = stochastic_suboptimality(q, opt, 0.0, [0, 1], [5, 10])
        trace = suboptimality_trace(q, opt, 11)
        np.testing.assert_allclose(m, [trace[5], trace[10]], rtol=1e-14)


class TestBench:
    def test_rows_and_memory(self):
        rows = bench_scaling([30, 100], 100, tfgd())
        assert [r.d for r in rows] == [30, 100]
        assert rows[0].memory_units == pytest.approx(60.0, rel=0.05)
        assert all(r.tfgd_step_us > 0 and r.sgd_step_us > 0 for r in rows)

    def test_single_dim(self):
        assert len(bench_scaling([50], 5, tfgd())) == 1

    def test_sorted(self):
        with pytest.raises(ValueError):
            bench_scaling([100, 10], 5, tfgd())

    def test_slope_helper(self):
        rows = [BenchRow(d, 3.0 * d, 1.0, 0.0) for d in (10, 100, 1000)]
        assert scaling_slope(rows) == pytest.approx(1.0)


class TestCsv:
    def test_headers(self, tmp_path):
        cfg = ExperimentConfig(QuadraticSpec(), {"a": tfgd(), "b": sgd()}, epochs=3)
        paths = write_reports(run_experiment(cfg), tmp_path)
        assert [p.name for p in paths] == ["metrics_a.csv", "metrics_b.csv", "summary.csv"]
        assert (tmp_path / "metrics_a.csv").read_text().splitlines()[0] == ",".join(METRICS_HEADER)
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == ",".join(SUMMARY_HEADER)
        assert len(summary) == 3
        assert len((tmp_path / "metrics_b.csv").read_text().splitlines()) == 4
