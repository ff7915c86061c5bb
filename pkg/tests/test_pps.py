import numpy as np
import pytest

from feedtune.channel import FunctionChannel
from feedtune.models import evaluate, unpack_parameters
from feedtune.oracle import FeedbackOracle
from feedtune.params import make_rng
from feedtune.pps import (
    FairnessConfig,
    PpsConfig,
    default_batch_size,
    fairness_pps_run,
    pps_run,
    random_search,
)
from feedtune.scenarios import get_scenario, prepare


def quadratic(target):
    return lambda th: -float(np.sum((th - target) ** 2))


class TestDefaultBatch:
    def test_heuristic_values(self):
        # 4 + floor(3 ln d), bumped to even
        assert default_batch_size(80) == 18
        assert default_batch_size(10) == 10
        assert default_batch_size(1) == 4

    def test_always_even(self):
        assert all(default_batch_size(d) % 2 == 0 for d in range(1, 5000, 37))


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(batch_size=5), dict(batch_size=20, query_budget=10), dict(learning_rate=0.0), dict(sigma=-1.0)],
    )
    def test_invalid(self, kwargs):
        cfg = PpsConfig(**{"query_budget": 100, "batch_size": 8, **kwargs})
        with pytest.raises(ValueError):
            cfg.validate(10)

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            FairnessConfig(100, batch_size=8, rho=-0.1).validate(4)


class TestPps:
    def test_start_at_optimum(self):
        target = make_rng(0).standard_normal(8)
        ch = FunctionChannel(quadratic(target), 200)
        best, trace = pps_run(target, ch, PpsConfig(200, 0.05, 8, 0.1, seed=1))
        assert trace.best_score == 0.0
        assert np.linalg.norm(best - target) <= 3 * 0.1 * np.sqrt(8)

    def test_zero_budget(self):
        theta0 = np.arange(3.0)
        best, trace = pps_run(theta0, FunctionChannel(quadratic(np.zeros(3)), 0), PpsConfig(0, batch_size=2))
        np.testing.assert_array_equal(best, theta0)
        assert trace.records == [] and trace.queries_spent == 0

    def test_query_accounting(self):
        ch = FunctionChannel(quadratic(np.ones(5)), 1000)
        _, trace = pps_run(np.zeros(5), ch, PpsConfig(1 + 8 * 5 + 3, 0.1, 8, 0.1))
        # the evaluation of theta0, five full batches, and the short remainder is left unspent
        assert ch.calls == trace.queries_spent == 41
        assert [r.queries_spent for r in trace.records] == [9, 17, 25, 33, 41]

    def test_best_so_far_monotone(self):
        _, trace = pps_run(np.zeros(6), FunctionChannel(quadratic(np.ones(6)), 300), PpsConfig(300, 0.1, 8, 0.1))
        curve = np.array(trace.best_curve)
        assert np.all(np.diff(curve) >= 0)

    def test_improves_quadratic(self):
        target = make_rng(3).standard_normal(10)
        best, trace = pps_run(np.zeros(10), FunctionChannel(quadratic(target), 400), PpsConfig(400, 0.1, 8, 0.1))
        assert trace.best_score > 0.5 * trace.initial_score

    def test_deterministic(self):
        run = lambda: pps_run(np.zeros(4), FunctionChannel(quadratic(np.ones(4)), 100), PpsConfig(100, 0.1, 8, 0.1, seed=9))
        (a, ta), (b, tb) = run(), run()
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ta.final_iterate, tb.final_iterate)

    def test_affine_feedback_invariance(self):
        target = make_rng(4).standard_normal(5)
        f = quadratic(target)
        cfg = PpsConfig(200, 0.1, 8, 0.1, seed=2)
        _, ta = pps_run(np.zeros(5), FunctionChannel(f, 200), cfg)
        _, tb = pps_run(np.zeros(5), FunctionChannel(lambda th: 3.0 * f(th) + 7.0, 200), cfg)
        for ra, rb in zip(ta.records, tb.records):
            np.testing.assert_allclose(ra.iterate, rb.iterate, rtol=1e-12, atol=1e-12)

    def test_early_stop_prefix(self):
        f = quadratic(make_rng(5).standard_normal(6))
        _, long = pps_run(np.zeros(6), FunctionChannel(f, 1 + 8 * 10), PpsConfig(1 + 8 * 10, 0.1, 8, 0.1, seed=3))
        _, short = pps_run(np.zeros(6), FunctionChannel(f, 1 + 8 * 4), PpsConfig(1 + 8 * 4, 0.1, 8, 0.1, seed=3))
        assert len(short.records) == 4
        for a, b in zip(short.records, long.records):
            np.testing.assert_array_equal(a.iterate, b.iterate)

    def test_returns_best_evaluated_not_last(self):
        f = quadratic(np.zeros(3))
        best, trace = pps_run(np.full(3, 0.5), FunctionChannel(f, 81), PpsConfig(81, 2.0, 8, 0.5, seed=0))
        assert f(best) == trace.best_score
        assert trace.best_score >= f(trace.final_iterate)

    def test_toy_gain(self):
        sc = get_scenario("toy")
        prep = prepare(sc, 0)
        oracle = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, "accuracy", 80)
        _, trace = pps_run(oracle.initial_parameters(), oracle, PpsConfig(80, 0.5, 8, 0.4, seed=0))
        assert trace.best_score >= trace.initial_score + 0.10


class TestRandomSearch:
    def test_single_query_is_theta0(self):
        theta0 = np.ones(3)
        best, trace = random_search(theta0, FunctionChannel(quadratic(np.zeros(3)), 1), 1, 0.5)
        np.testing.assert_array_equal(best, theta0)
        assert trace.queries_spent == 1

    def test_worse_perturbation_keeps_theta0(self):
        theta0 = np.zeros(3)
        best, trace = random_search(theta0, FunctionChannel(quadratic(np.zeros(3)), 2), 2, 0.5)
        assert trace.queries_spent == 2
        np.testing.assert_array_equal(best, theta0)

    def test_zero_sigma(self):
        theta0 = np.array([1.0, -1.0])
        best, _ = random_search(theta0, FunctionChannel(quadratic(np.zeros(2)), 20), 20, 0.0)
        np.testing.assert_array_equal(best, theta0)

    def test_perturbs_theta0_only(self):
        seen = []

        def f(th):
            seen.append(th.copy())
            return -float(np.sum(th**2))

        random_search(np.full(4, 3.0), FunctionChannel(f, 50), 50, 0.1, seed=1)
        dev = np.array(seen[1:]) - 3.0
        assert np.max(np.abs(dev)) < 0.1 * 6

    def test_pps_beats_rs_on_quadratic(self):
        wins = 0
        for seed in range(10):
            target = make_rng(100 + seed).standard_normal(80)
            f = quadratic(target)
            _, tp = pps_run(np.zeros(80), FunctionChannel(f, 1000), PpsConfig(1000, 0.1, None, 0.1, seed=seed))
            _, tr = random_search(np.zeros(80), FunctionChannel(f, 1000), 1000, 0.1, seed=seed)
            wins += tr.best_score < tp.best_score
        assert wins >= 9


class TestFairness:
    def test_scalar_channel_rejected(self):
        with pytest.raises(ValueError, match="tuple"):
            fairness_pps_run(np.zeros(2), FunctionChannel(lambda th: 1.0, 20), FairnessConfig(20, batch_size=4))

    def test_zero_disparity_reduces_to_pps(self):
        target = make_rng(6).standard_normal(5)
        f = quadratic(target)
        cfg = dict(query_budget=200, learning_rate=0.1, batch_size=8, sigma=0.1, seed=4)
        _, tp = pps_run(np.zeros(5), FunctionChannel(f, 200), PpsConfig(**cfg))
        _, tf = fairness_pps_run(np.zeros(5), FunctionChannel(lambda th: (f(th), 0.0), 200), FairnessConfig(**cfg, rho=1.0))
        for a, b in zip(tp.records, tf.records):
            np.testing.assert_array_equal(a.iterate, b.iterate)

    def test_large_rho_is_rescaled_pps(self):
        f = quadratic(make_rng(7).standard_normal(5))
        base = dict(query_budget=120, batch_size=8, sigma=0.1, seed=5)
        _, tp = pps_run(np.zeros(5), FunctionChannel(f, 120), PpsConfig(**base, learning_rate=0.1 * 50))
        _, tf = fairness_pps_run(np.zeros(5), FunctionChannel(lambda th: (f(th), 0.0), 120),
                                 FairnessConfig(**base, learning_rate=0.1, rho=50.0))
        # same update up to the order in which eta and rho are multiplied in
        for a, b in zip(tp.records, tf.records):
            np.testing.assert_allclose(a.iterate, b.iterate, rtol=1e-9, atol=1e-12)

    def test_rho_zero_lowers_disparity(self):
        sc = get_scenario("fairness")
        before, after = [], []
        for seed in range(10):
            prep = prepare(sc, seed)
            oracle = FeedbackOracle(prep.model, "last", prep.support, prep.holdout, sc.metric, 200)
            theta0 = oracle.initial_parameters()
            best, _ = fairness_pps_run(theta0, oracle, FairnessConfig(200, 0.03, 8, 0.1, seed=seed, rho=0.0))
            m0 = unpack_parameters(prep.model, theta0, "last")
            m1 = unpack_parameters(prep.model, best, "last")
            before.append(evaluate(m0, prep.support, sc.metric)[1])
            after.append(evaluate(m1, prep.support, sc.metric)[1])
        assert np.mean(after) <= np.mean(before)

    def test_best_ranked_by_combined_objective(self):
        def f(th):
            return (float(-np.sum(th**2)), float(abs(th[0])))

        best, trace = fairness_pps_run(np.ones(3), FunctionChannel(f, 60), FairnessConfig(60, 0.1, 4, 0.2, rho=0.4))
        e, g = f(best)
        assert 0.4 * e - g == pytest.approx(trace.best_score)
