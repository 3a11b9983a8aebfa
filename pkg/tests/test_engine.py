"""Simulator semantics: exact recursions, determinism, divergence, IO."""

import dataclasses

import numpy as np
import pytest

from localsgd.core import (
    RECORD_COMM,
    RULE_CONVEX,
    RULE_MANUAL,
    RULE_STRONGLY_CONVEX,
    RngStream,
    RunConfig,
    StepsizePolicy,
    make_schedule,
)
from localsgd.engine import (
    STATUS_COMPLETED,
    STATUS_DIVERGED,
    load_trace_csv,
    precompute_interpolator,
    run_local_sgd,
    run_many,
    run_minibatch_baseline,
    save_trace_csv,
)
from localsgd.partition import partition_even
from localsgd.problems import (
    exact_separator,
    make_hinge_problem,
    make_linsep_dataset,
    make_prop1_instance,
    make_prop2_instance,
    make_shared_optimum_quadratic,
)


def quad_config(K, R, rule=RULE_STRONGLY_CONVEX, **kw):
    return RunConfig(schedule=make_schedule(K, R), stepsize=StepsizePolicy(rule), **kw)


class TestExactRecursions:
    def test_single_node_one_step_hits_optimum(self):
        # gradient descent on (1/2)x^2 at eta = 1/L jumps straight to 0
        q = make_shared_optimum_quadratic([1.0], np.zeros(1))
        cfg = quad_config(1, 1, x0=np.array([3.0]))
        res = run_local_sgd(q, cfg)
        assert res.trace[-1].e_t == 0.0
        assert res.trace[-1].r_t == 0.0

    def test_worst_case_similarity_recursion(self):
        # one curved node among n: each round multiplies the average by
        # exactly (n-1)/n, so after R rounds of K steps the gap is known
        # in closed form; K=4, R=2, n=8 gives f(xbar) = (1/16)(49/64)^2
        problem, cfg = make_prop1_instance(1.0, 4, 2)
        res = run_local_sgd(problem, cfg)
        assert res.final_gap == 2401.0 / 65536.0
        means = res.metric("e_t")
        comm = [rec for rec in res.trace if rec.is_comm]
        assert len(comm) == 3
        factor = 7.0 / 8.0
        assert comm[1].e_t == pytest.approx(comm[0].e_t * factor ** 2, rel=1e-12)
        assert comm[2].e_t == pytest.approx(comm[1].e_t * factor ** 2, rel=1e-12)
        assert np.all(np.diff(means) <= 1e-15)

    def test_nonconvergence_node_recursions(self):
        # f_1 = (L/2)x^2 steps as x(1 - eta L); f_2 = -(L/4)x^2 steps as
        # x(1 + eta L / 2); at eta = 2/(LK) neither node nor the average
        # ever drops below the starting point at round boundaries
        L, K, R = 1.0, 4, 5
        problem = make_prop2_instance(L)
        cfg = RunConfig(schedule=make_schedule(K, R),
                        stepsize=StepsizePolicy(RULE_MANUAL, eta=2.0 / (L * K)),
                        record_node_states=True)
        res = run_local_sgd(problem, cfg)
        states = res.node_states
        eta = res.eta
        for r in range(R):
            start = states[r * K, 0, 0]
            assert states[r * K, 1, 0] == start
            for s in range(1, K + 1):
                t = r * K + s
                x1 = states[t, 0, 0] if t % K else res.half_states[t - 1, 0, 0]
                x2 = states[t, 1, 0] if t % K else res.half_states[t - 1, 1, 0]
                assert x1 == pytest.approx(start * (1 - eta * L) ** s, rel=1e-12, abs=1e-15)
                assert x2 == pytest.approx(start * (1 + eta * L / 2) ** s, rel=1e-12)
        comm_means = states[::K, :, :].mean(axis=1)
        assert np.all(comm_means >= 1.0 - 1e-12)
        assert min(rec.h_t for rec in res.trace) >= L ** 2 / 16.0

    def test_minibatch_matches_gd_closed_form(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        cfg = quad_config(4, 6, x0=np.ones(2))
        res = run_minibatch_baseline(q, cfg)
        # deterministic nodes: averaged step is gradient descent on f,
        # which contracts x by (1 - eta * mean curvature) per iteration
        rate = 1.0 - res.eta * 2.0
        for rec in res.trace:
            assert rec.r_t == pytest.approx(2.0 * rate ** (2 * rec.t), rel=1e-12)


class TestConsensus:
    def test_K1_zero_consensus_error_everywhere(self):
        q = make_shared_optimum_quadratic([1.0, 2.0, 4.0], np.zeros(2))
        res = run_local_sgd(q, quad_config(1, 10, x0=np.ones(2)))
        assert all(rec.V_t == 0.0 for rec in res.trace)

    def test_K1_equals_minibatch(self):
        q = make_shared_optimum_quadratic([1.0, 2.0, 4.0], np.zeros(2))
        cfg = quad_config(1, 10, x0=np.ones(2))
        a = run_local_sgd(q, cfg)
        b = run_minibatch_baseline(q, cfg)
        assert a.trace == b.trace

    def test_zero_at_comm_times_positive_between(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        res = run_local_sgd(q, quad_config(4, 4, x0=np.ones(2)))
        for rec in res.trace:
            if rec.is_comm:
                assert rec.V_t == 0.0
            else:
                assert rec.V_t > 0.0

    def test_homogeneous_nodes_never_disperse(self):
        q = make_shared_optimum_quadratic([2.0, 2.0, 2.0], np.zeros(3))
        res_local = run_local_sgd(q, quad_config(5, 4, x0=np.ones(3)))
        res_batch = run_minibatch_baseline(q, quad_config(5, 4, x0=np.ones(3)))
        assert all(rec.V_t == 0.0 for rec in res_local.trace)
        local_comm = {rec.t: rec for rec in res_local.trace if rec.is_comm}
        batch_by_budget = {rec.t * 5: rec for rec in res_batch.trace}
        for t, rec in local_comm.items():
            assert rec.e_t == pytest.approx(batch_by_budget[t].e_t, rel=1e-12, abs=1e-30)


class TestDeterminism:
    def test_bit_identical_reruns(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2), sample_spread=0.5)
        cfg = quad_config(3, 5, x0=np.ones(2), seed=123)
        a = run_local_sgd(q, cfg)
        b = run_local_sgd(q, cfg)
        assert a.trace == b.trace
        assert np.array_equal(a.final_average, b.final_average)
        assert np.array_equal(a.weighted_average, b.weighted_average)

    def test_seed_matters_with_sampling(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2), sample_spread=0.5)
        a = run_local_sgd(q, quad_config(3, 5, x0=np.ones(2), seed=1))
        b = run_local_sgd(q, quad_config(3, 5, x0=np.ones(2), seed=2))
        assert a.final_gap != b.final_gap

    def test_run_many_parallel_equals_serial(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2), sample_spread=0.5)
        cfg = quad_config(3, 4, x0=np.ones(2))
        serial = run_many(q, cfg, seeds=range(4), jobs=1)
        parallel = run_many(q, cfg, seeds=range(4), jobs=4)
        for a, b in zip(serial, parallel):
            assert a.trace == b.trace

    def test_deterministic_problem_ignores_seed(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        a = run_local_sgd(q, quad_config(3, 5, x0=np.ones(2), seed=1))
        b = run_local_sgd(q, quad_config(3, 5, x0=np.ones(2), seed=99))
        assert a.trace == b.trace


class TestRecording:
    def test_every_granularity_row_count(self):
        q = make_shared_optimum_quadratic([1.0], np.zeros(1))
        res = run_local_sgd(q, quad_config(4, 3, x0=np.ones(1)))
        assert [rec.t for rec in res.trace] == list(range(13))

    def test_comm_granularity_row_count(self):
        q = make_shared_optimum_quadratic([1.0], np.zeros(1))
        cfg = quad_config(4, 3, x0=np.ones(1), record_granularity=RECORD_COMM)
        res = run_local_sgd(q, cfg)
        assert [rec.t for rec in res.trace] == [0, 4, 8, 12]
        assert all(rec.is_comm for rec in res.trace)

    def test_weights_follow_schedule(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        res = run_local_sgd(q, quad_config(4, 2, RULE_CONVEX, x0=np.ones(2)))
        # weight 1 exactly at communication times and just before them
        expected_one = {0, 3, 4, 7, 8}
        for rec in res.trace:
            if rec.t in expected_one:
                assert rec.w_t == 1.0
            else:
                assert rec.w_t == q.c

    def test_weighted_average_recomputed(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        cfg = quad_config(4, 3, RULE_CONVEX, x0=np.ones(2), record_node_states=True)
        res = run_local_sgd(q, cfg)
        T = cfg.schedule.T
        means = res.node_states.mean(axis=1)
        weights = np.array([rec.w_t for rec in res.trace[:T]])
        manual = (weights[:, None] * means[:T]).sum(axis=0) / weights.sum()
        assert np.allclose(manual, res.weighted_average, rtol=1e-12, atol=0)
        # the normalizer matches its closed form R(2 + (K-2)c)
        assert weights.sum() == pytest.approx(3 * (2 + 2 * q.c), rel=1e-12)

    def test_r_t_absent_without_optimum(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        anon = dataclasses.replace(q, optimum=None)
        res = run_local_sgd(anon, quad_config(2, 2, x0=np.ones(2)))
        assert all(rec.r_t is None for rec in res.trace)

    def test_state_arrays_consistent(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        cfg = quad_config(3, 3, x0=np.ones(2), record_node_states=True)
        res = run_local_sgd(q, cfg)
        T, n = 9, 2
        assert res.node_states.shape == (T + 1, n, 2)
        assert res.half_states.shape == (T, n, 2)
        for t in range(T):
            if (t + 1) % 3 == 0:
                mean = res.half_states[t].mean(axis=0)
                assert np.array_equal(res.node_states[t + 1],
                                      np.tile(mean, (n, 1)))
            else:
                assert np.array_equal(res.node_states[t + 1], res.half_states[t])


class TestDivergence:
    @pytest.mark.filterwarnings("ignore::localsgd.core.StepsizeWarning")
    def test_unstable_stepsize_flagged(self):
        q = make_shared_optimum_quadratic([1.0], np.zeros(1))
        cfg = RunConfig(schedule=make_schedule(2, 500),
                        stepsize=StepsizePolicy(RULE_MANUAL, eta=2.5),
                        x0=np.array([1.0]))
        res = run_local_sgd(q, cfg)
        assert res.status == STATUS_DIVERGED
        assert res.diverged_at is not None
        assert res.trace[-1].t < res.diverged_at
        assert all(np.isfinite(rec.e_t) for rec in res.trace)

    def test_stable_run_completes(self):
        q = make_shared_optimum_quadratic([1.0], np.zeros(1))
        res = run_local_sgd(q, quad_config(2, 5, x0=np.ones(1)))
        assert res.status == STATUS_COMPLETED
        assert res.diverged_at is None


class TestStochasticSampling:
    def test_batch_mean_reduces_variance(self):
        q = make_shared_optimum_quadratic([2.0, 2.0], np.zeros(1), sample_spread=1.0)
        small = [run_local_sgd(q, quad_config(2, 4, x0=np.ones(1), seed=s)).final_gap
                 for s in range(64)]
        big = [run_local_sgd(q, quad_config(2, 4, x0=np.ones(1), seed=s, batch_size=16)).final_gap
               for s in range(64)]
        assert np.var(big) < np.var(small)

    def test_contraction_in_expectation(self):
        # single node, two samples with curvatures a +- delta at eta = 1/L:
        # the expected one-step squared distance is the mean of the two
        # squared step factors, computable by hand
        a, delta = 2.0, 1.0
        q = make_shared_optimum_quadratic([a], np.zeros(1), sample_spread=delta)
        eta = 1.0 / q.L
        factors = np.array([1 - eta * (a - delta), 1 - eta * (a + delta)])
        expected = np.mean(factors ** 2)
        finals = [
            run_local_sgd(q, quad_config(1, 1, x0=np.ones(1), seed=s)).trace[-1].r_t
            for s in range(400)
        ]
        se = np.std(finals, ddof=1) / np.sqrt(len(finals))
        assert np.mean(finals) == pytest.approx(expected, abs=3.5 * se + 1e-12)


class TestTraceIO:
    def test_round_trip_lossless(self, tmp_path):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2), sample_spread=0.5)
        res = run_local_sgd(q, quad_config(3, 4, x0=np.ones(2), seed=7))
        path = tmp_path / "trace.csv"
        save_trace_csv(res.trace, str(path))
        assert load_trace_csv(str(path)) == res.trace
        header = path.read_text().splitlines()[0]
        assert header == "t,is_comm,e_t,r_t,h_t,V_t,w_t"

    def test_round_trip_with_missing_r(self, tmp_path):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        anon = dataclasses.replace(q, optimum=None)
        res = run_local_sgd(anon, quad_config(2, 2, x0=np.ones(2)))
        path = tmp_path / "trace.csv"
        save_trace_csv(res.trace, str(path))
        back = load_trace_csv(str(path))
        assert back == res.trace
        assert back[0].r_t is None

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,gap\n0,1.0\n")
        with pytest.raises(ValueError):
            load_trace_csv(str(path))


class TestHingeRuns:
    def test_interpolator_center_has_zero_loss(self):
        ds = make_linsep_dataset(80, 5, 0.1, RngStream(3))
        part = partition_even(80, 4, RngStream(3))
        w = precompute_interpolator(ds, part, seed=0, K=5, rounds=60)
        plain = make_hinge_problem(ds, part)
        assert plain.objective_value(w) == 0.0

    def test_hinge_loss_decreases(self):
        ds = make_linsep_dataset(80, 5, 0.1, RngStream(3))
        part = partition_even(80, 4, RngStream(3))
        problem = make_hinge_problem(ds, part)
        cfg = RunConfig(schedule=make_schedule(5, 30),
                        stepsize=StepsizePolicy(RULE_CONVEX))
        res = run_local_sgd(problem, cfg)
        assert res.final_gap < 0.5 * res.trace[0].e_t

    def test_separator_start_stays_put(self):
        ds = make_linsep_dataset(40, 4, 0.2, RngStream(5))
        part = partition_even(40, 4, RngStream(5))
        problem = make_hinge_problem(ds, part)
        w = exact_separator(ds)
        cfg = RunConfig(schedule=make_schedule(3, 3),
                        stepsize=StepsizePolicy(RULE_CONVEX), x0=w)
        res = run_local_sgd(problem, cfg)
        assert res.final_gap == 0.0
        assert np.array_equal(res.final_average, w)
