"""Loss families, constant estimators, datasets."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from localsgd.core import RngStream
from localsgd.partition import partition_even, partition_worst_case
from localsgd.problems import (
    EstimateUndefinedError,
    HingeShardLoss,
    QuadraticLoss,
    ZeroLoss,
    c_estimate,
    c_exact_quadratic,
    exact_separator,
    load_dataset_csv,
    make_hinge_problem,
    make_linsep_dataset,
    make_prop1_instance,
    make_prop2_instance,
    make_shared_optimum_quadratic,
    rho_estimate,
    save_dataset_csv,
    verify_interpolation,
)


def fd_grad(fn, x, step=1e-5):
    """Central finite differences, the oracle for every analytic gradient."""
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=np.float64)
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


class TestQuadraticLoss:
    def test_value_and_grad(self):
        loss = QuadraticLoss(2.0, np.array([1.0, -1.0]))
        x = np.array([3.0, 1.0])
        assert loss.value(x) == pytest.approx(0.5 * 2.0 * 8.0)
        assert np.allclose(loss.grad(x), 2.0 * (x - loss.x_star))

    def test_grad_matches_finite_differences(self):
        loss = QuadraticLoss(1.7, np.array([0.3, -2.0, 1.1]))
        x = np.array([0.5, 0.25, -1.5])
        assert np.allclose(loss.grad(x), fd_grad(loss.value, x), rtol=1e-5, atol=1e-5)

    def test_spread_unbiased(self):
        loss = QuadraticLoss(2.0, np.zeros(2), sample_spread=1.0)
        assert loss.sample_count == 2
        x = np.array([1.0, -2.0])
        mean_g = (loss.stoch_grad(x, 0) + loss.stoch_grad(x, 1)) / 2
        assert np.allclose(mean_g, loss.grad(x), rtol=0, atol=1e-10)

    def test_spread_constants(self):
        loss = QuadraticLoss(2.0, np.zeros(1), sample_spread=0.5)
        assert loss.smoothness == pytest.approx(2.5)
        assert loss.strong_convexity == pytest.approx(1.5)

    def test_zero_curvature_allowed(self):
        loss = QuadraticLoss(0.0, np.zeros(1))
        assert loss.value(np.array([5.0])) == 0.0
        assert loss.grad(np.array([5.0]))[0] == 0.0


class TestZeroLoss:
    def test_identically_zero(self):
        loss = ZeroLoss(3)
        x = np.array([1.0, 2.0, 3.0])
        assert loss.value(x) == 0.0
        assert np.array_equal(loss.grad(x), np.zeros(3))
        assert loss.sample_count == 0

    def test_stoch_grad_rejected(self):
        with pytest.raises(ValueError):
            ZeroLoss(1).stoch_grad(np.zeros(1), 0)


class TestHingeShardLoss:
    def test_single_point_oracle(self):
        # one point x=(1,0), y=+1, evaluated at w=0: margin term is 1,
        # so the loss is 1 and the gradient is -2yx
        loss = HingeShardLoss(np.array([[1.0, 0.0]]), np.array([1.0]))
        w = np.zeros(2)
        assert loss.value(w) == pytest.approx(1.0)
        assert np.allclose(loss.grad(w), np.array([-2.0, 0.0]))

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(6, 3))
        labels = np.sign(rng.normal(size=6))
        loss = HingeShardLoss(pts, labels)
        w = rng.normal(size=3) * 0.5
        assert np.allclose(loss.grad(w), fd_grad(loss.value, w), rtol=1e-5, atol=1e-5)

    def test_grad_with_correction_matches_fd(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(4, 2))
        labels = np.array([1.0, -1.0, 1.0, -1.0])
        center = rng.normal(size=2)
        loss = HingeShardLoss(pts, labels, mu_correction=0.3, center=center)
        w = rng.normal(size=2)
        assert np.allclose(loss.grad(w), fd_grad(loss.value, w), rtol=1e-5, atol=1e-5)

    def test_unbiased(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(5, 2))
        labels = np.sign(rng.normal(size=5))
        loss = HingeShardLoss(pts, labels, mu_correction=0.2, center=np.zeros(2))
        w = np.array([0.4, -0.2])
        mean_g = np.mean([loss.stoch_grad(w, s) for s in range(5)], axis=0)
        assert np.allclose(mean_g, loss.grad(w), rtol=0, atol=1e-10)

    def test_beyond_margin_is_flat(self):
        loss = HingeShardLoss(np.array([[1.0, 0.0]]), np.array([1.0]))
        w = np.array([2.0, 0.0])  # margin 2 > 1: inactive
        assert loss.value(w) == 0.0
        assert np.array_equal(loss.grad(w), np.zeros(2))

    def test_empty_shard(self):
        loss = HingeShardLoss(np.zeros((0, 4)), np.zeros(0))
        assert loss.sample_count == 0
        assert loss.value(np.ones(4)) == 0.0
        assert np.array_equal(loss.grad(np.ones(4)), np.zeros(4))

    def test_smoothness_estimate(self):
        pts = np.array([[1.0, 2.0], [3.0, 0.0]])
        loss = HingeShardLoss(pts, np.array([1.0, -1.0]), mu_correction=0.1,
                              center=np.zeros(2))
        assert loss.smoothness == pytest.approx(2 * 9.0 + 0.1)


class TestSimilarityConstant:
    def test_homogeneous_is_one(self):
        assert c_exact_quadratic([2.0, 2.0, 2.0]) == 1.0

    def test_zero_curvature_gives_zero(self):
        assert c_exact_quadratic([1.0, 0.0]) == 0.0

    def test_one_three_is_three_quarters(self):
        assert c_exact_quadratic([1.0, 3.0]) == pytest.approx(0.75, abs=1e-12)

    def test_against_numeric_minimization(self):
        # c is the minimum over per-node points x_i of
        #   mean_i (f_i(x_i) - f_i*)   over   f(mean x_i) - f*.
        # In 1-d with x_1 = 1 fixed, scan x_2 densely.
        a = np.array([1.0, 3.0])
        t2 = np.linspace(-3.0, 3.0, 120001)
        mean_gap = (0.5 * a[0] * 1.0 + 0.5 * a[1] * t2 ** 2) / 2.0
        gap_at_mean = 0.5 * np.mean(a) * ((1.0 + t2) / 2.0) ** 2
        keep = gap_at_mean > 1e-9
        ratio = mean_gap[keep] / gap_at_mean[keep]
        assert ratio.min() == pytest.approx(c_exact_quadratic(a), abs=1e-6)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            c_exact_quadratic([1.0, -1.0])

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError):
            c_exact_quadratic([0.0, 0.0])

    @given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8))
    def test_in_unit_interval(self, curvatures):
        c = c_exact_quadratic(curvatures)
        assert 0.0 <= c <= 1.0


class TestCEstimate:
    def test_upper_bounds_exact_value(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        est = c_estimate(q, 500, 1.0, RngStream(0))
        assert est >= q.c - 1e-12

    def test_homogeneous_at_least_one(self):
        q = make_shared_optimum_quadratic([1.0, 1.0], np.zeros(2))
        est = c_estimate(q, 2000, 1.0, RngStream(0))
        assert est >= 1.0 - 1e-12
        assert est < 1.3  # min over 2000 trials gets close to the Jensen floor

    def test_prop1_shape_near_zero(self):
        problem, _ = make_prop1_instance(1.0, 4, 2)
        est = c_estimate(problem, 20000, 1.0, RngStream(0))
        assert est <= 0.05

    def test_monotone_in_trials(self):
        q = make_shared_optimum_quadratic([1.0, 4.0], np.zeros(2))
        small = c_estimate(q, 50, 1.0, RngStream(5))
        large = c_estimate(q, 400, 1.0, RngStream(5))
        assert large <= small + 1e-15

    def test_needs_optimum(self):
        q = make_shared_optimum_quadratic([1.0, 2.0], np.zeros(1))
        with pytest.raises(ValueError):
            c_estimate(dataclasses.replace(q, optimum=None), 10, 1.0, RngStream(0))


class TestFactories:
    def test_prop1_objective_is_scaled_quadratic(self):
        problem, config = make_prop1_instance(1.0, 4, 2)
        assert problem.n_nodes == 8
        x = np.array([2.0])
        # one curved node among n: f(x) = (L/2n) x^2 = x^2/16
        assert problem.objective_value(x) == pytest.approx(4.0 / 16.0, rel=1e-12)
        assert problem.c == 0.0
        assert config.schedule.K == 4 and config.schedule.R == 2
        assert np.array_equal(problem.default_x0, np.ones(1))

    def test_prop2_values_and_grad(self):
        problem = make_prop2_instance(1.0)
        one = np.array([1.0])
        assert problem.losses[0].value(one) == pytest.approx(0.5)
        assert problem.losses[1].value(one) == pytest.approx(-0.25)
        assert problem.objective_value(one) == pytest.approx(0.25)
        assert problem.objective_grad(one)[0] == pytest.approx(0.5)
        assert problem.objective_grad(np.array([3.0]))[0] == pytest.approx(1.5)

    def test_quadratic_metadata(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        assert q.L == 3.0
        assert q.mu == 1.0
        assert q.c == pytest.approx(0.75)
        assert q.f_star == 0.0
        assert np.array_equal(q.optimum, np.zeros(2))

    def test_quadratic_spread_rho(self):
        q = make_shared_optimum_quadratic([2.0, 2.0], np.zeros(2), sample_spread=1.0)
        assert q.rho == pytest.approx(1.25)
        measured = rho_estimate(q, [np.ones(2)])
        assert measured == pytest.approx(q.rho, abs=1e-12)


class TestRhoEstimate:
    def test_homogeneous_deterministic_is_one(self):
        q = make_shared_optimum_quadratic([2.0, 2.0], np.zeros(2))
        assert rho_estimate(q, [np.ones(2), 2 * np.ones(2)]) == pytest.approx(1.0)

    def test_prop2_grid_is_four(self):
        problem = make_prop2_instance(1.0)
        probes = [s * np.ones(1) for s in np.linspace(0.1, 2.0, 20)]
        assert rho_estimate(problem, probes) == pytest.approx(4.0, abs=1e-12)

    def test_flat_node_doubles_growth(self):
        q = make_shared_optimum_quadratic([1.0, 0.0], np.zeros(1))
        assert rho_estimate(q, [np.ones(1)]) == pytest.approx(4.0)

    def test_stationary_probes_rejected(self):
        q = make_shared_optimum_quadratic([1.0, 1.0], np.zeros(2))
        with pytest.raises(EstimateUndefinedError):
            rho_estimate(q, [np.zeros(2)])


class TestInterpolation:
    def test_shared_optimum_quadratic_passes(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        assert verify_interpolation(q).passed

    def test_wrong_optimum_fails(self):
        q = make_shared_optimum_quadratic([1.0, 3.0], np.zeros(2))
        report = verify_interpolation(dataclasses.replace(q, optimum=np.ones(2)))
        assert not report.passed
        assert report.worst > 1.0

    def test_hinge_with_separator_center(self):
        rng = RngStream(3)
        ds = make_linsep_dataset(40, 4, 0.2, rng)
        shards = partition_even(40, 4, rng)
        w = exact_separator(ds)
        problem = make_hinge_problem(ds, shards, center=w)
        assert verify_interpolation(problem).passed


class TestLinSepDataset:
    def test_margins_respected(self):
        ds = make_linsep_dataset(1000, 20, 0.05, RngStream(7))
        assert ds.N == 1000 and ds.d == 20
        assert ds.min_margin() >= 0.05

    def test_labels_match_normal_side(self):
        ds = make_linsep_dataset(200, 6, 0.1, RngStream(1))
        proj = ds.points @ ds.generator_normal
        assert np.array_equal(np.sign(proj), ds.labels)

    def test_deterministic_in_seed(self):
        a = make_linsep_dataset(50, 3, 0.1, RngStream(9))
        b = make_linsep_dataset(50, 3, 0.1, RngStream(9))
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)
        c = make_linsep_dataset(50, 3, 0.1, RngStream(10))
        assert not np.array_equal(a.points, c.points)

    def test_degenerate_sizes(self):
        ds = make_linsep_dataset(1, 1, 0.0, RngStream(0))
        assert ds.N == 1 and ds.d == 1

    @pytest.mark.parametrize("N,d,margin", [(0, 3, 0.1), (5, 0, 0.1), (5, 3, 1.0), (5, 3, -0.1)])
    def test_rejects_bad_arguments(self, N, d, margin):
        with pytest.raises(ValueError):
            make_linsep_dataset(N, d, margin, RngStream(0))

    def test_exact_separator_clears_unit_margin(self):
        ds = make_linsep_dataset(100, 5, 0.05, RngStream(4))
        w = exact_separator(ds)
        functional_margins = ds.labels * (ds.points @ w)
        assert functional_margins.min() >= 3.0 - 1e-9

    def test_csv_round_trip(self, tmp_path):
        ds = make_linsep_dataset(30, 4, 0.1, RngStream(11))
        path = tmp_path / "ds.csv"
        save_dataset_csv(ds, str(path))
        back = load_dataset_csv(str(path))
        assert np.array_equal(back.points, ds.points)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.generator_normal, ds.generator_normal)


class TestMakeHingeProblem:
    def test_smoothness_covers_all_shards(self):
        ds = make_linsep_dataset(60, 5, 0.1, RngStream(3))
        shards = partition_even(60, 4, RngStream(3))
        problem = make_hinge_problem(ds, shards)
        expected = 2 * max(np.sum(ds.points ** 2, axis=1))
        assert problem.L == pytest.approx(expected)
        assert problem.mu == 0.0

    def test_empty_shards_are_fine(self):
        ds = make_linsep_dataset(20, 3, 0.1, RngStream(2))
        shards = partition_worst_case(20, 4)
        problem = make_hinge_problem(ds, shards)
        assert problem.losses[1].sample_count == 0
        assert problem.objective_value(np.zeros(3)) == pytest.approx(
            np.mean([loss.value(np.zeros(3)) for loss in problem.losses]))

    def test_correction_requires_center(self):
        ds = make_linsep_dataset(20, 3, 0.1, RngStream(2))
        shards = partition_even(20, 2, RngStream(2))
        with pytest.raises(ValueError):
            make_hinge_problem(ds, shards, mu_correction=0.1)

    def test_correction_shifts_strong_convexity(self):
        ds = make_linsep_dataset(20, 3, 0.1, RngStream(2))
        shards = partition_even(20, 2, RngStream(2))
        w = exact_separator(ds)
        problem = make_hinge_problem(ds, shards, mu_correction=0.1, center=w)
        assert problem.mu == pytest.approx(0.1)
        assert np.array_equal(problem.optimum, w)
        # the corrected objective is exactly zero at the center
        assert problem.objective_value(w) == pytest.approx(0.0, abs=1e-30)


@settings(max_examples=60, deadline=None)
@given(
    curvatures=st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5),
    seed=st.integers(0, 2**16),
)
def test_gap_nonnegative_on_random_points(curvatures, seed):
    """f(x) - f* >= 0 everywhere for shared-optimum quadratics."""
    q = make_shared_optimum_quadratic(curvatures, np.zeros(3))
    x = RngStream(seed).generator(0, 0).standard_normal(3)
    assert q.gap(x) >= -1e-15
