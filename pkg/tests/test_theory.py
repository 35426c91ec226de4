"""Closed-form bounds, Monte Carlo consistency estimates, lemma checks."""

import math
import random

import numpy as np
import pytest

from tabforge.theory import (
    DEFAULT_GRID,
    AnswerModel,
    DomainError,
    GridError,
    check_lemmas,
    check_posterior_dominance,
    covariance_identity_residual,
    independent_expected_pe,
    posterior_bound,
    posterior_bound_gap,
    random_error_dist,
    same_dist_joint_pe,
    same_dist_pe,
    simulate_consistency,
    sum_of_squares_gap,
    verify_theorems,
)


class TestClosedForms:
    def test_posterior_bound_frozen(self):
        # 0.36 / (0.36 + 0.16) = 9/13
        assert posterior_bound(0.6) == pytest.approx(0.36 / 0.52, abs=1e-15)
        assert posterior_bound(0.6) == pytest.approx(0.6923076923076923, abs=1e-12)

    def test_posterior_bound_endpoints(self):
        assert posterior_bound(0.5) == 0.5
        assert posterior_bound(1.0) == 1.0
        assert posterior_bound(0.0) == 0.0

    def test_gap_matches_direct_difference(self):
        rng = random.Random(0)
        for _ in range(500):
            p = rng.random()
            direct = posterior_bound(p) - p
            assert posterior_bound_gap(p) == pytest.approx(direct, abs=1e-12)

    def test_gap_positive_above_half(self):
        # smallest grid margin: p just above 1/2 still strictly improves
        g = posterior_bound_gap(0.51)
        assert g > 0
        assert g == pytest.approx(0.51 * 0.49 * 0.02 / (0.49**2 + 0.51**2), abs=1e-15)

    def test_independent_expected_pe_frozen(self):
        assert independent_expected_pe(0.8, 4) == pytest.approx(0.01, abs=1e-15)

    def test_shared_uniform_joint_frozen(self):
        dist = (0.05, 0.05, 0.05, 0.05)
        assert same_dist_joint_pe(0.8, dist) == pytest.approx(0.01, abs=1e-15)
        assert same_dist_pe(0.8, dist) == pytest.approx(0.01 / 0.36, abs=1e-15)

    def test_shared_joint_between_bounds(self):
        # sum of squares of weights summing to 1-p lies in [(1-p)^2/k, (1-p)^2]
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = rng.uniform(0.5, 0.99)
            k = int(rng.integers(1, 9))
            dist = random_error_dist(p, k, rng)
            joint = same_dist_joint_pe(p, dist)
            assert independent_expected_pe(p, k) - 1e-12 <= joint <= (1 - p) ** 2 + 1e-12

    def test_same_dist_pe_at_p_one(self):
        assert same_dist_pe(1.0, (0.0,)) == 0.0

    @pytest.mark.parametrize("p", [-0.1, 1.1, math.nan])
    def test_domain_errors(self, p):
        with pytest.raises(DomainError):
            posterior_bound(p)

    def test_weight_validation(self):
        with pytest.raises(DomainError):
            same_dist_joint_pe(0.8, (0.1, 0.2))  # sums to 0.3, not 0.2
        with pytest.raises(DomainError):
            same_dist_joint_pe(0.8, (-0.1, 0.3))
        with pytest.raises(DomainError):
            same_dist_joint_pe(0.8, ())
        with pytest.raises(DomainError):
            independent_expected_pe(0.8, 0)


class TestAnswerModel:
    def test_shared_uniform(self):
        m = AnswerModel.shared_uniform(0.8, 4)
        assert m.k == 4
        assert m.error_dist_a == pytest.approx((0.05,) * 4)
        assert m.shared

    def test_shared_requires_identical_dists(self):
        with pytest.raises(DomainError):
            AnswerModel(
                p=0.8,
                error_dist_a=(0.2,),
                error_dist_b=(0.1, 0.1),
                shared=True,
            )

    def test_independent(self):
        m = AnswerModel.independent(0.8, (0.15, 0.05), (0.05, 0.15))
        assert not m.shared
        assert m.k == 2

    def test_mismatched_k(self):
        with pytest.raises(DomainError):
            AnswerModel.independent(0.8, (0.2,), (0.1, 0.1))


class TestSimulation:
    def test_p_one_always_agrees_correctly(self):
        est = simulate_consistency(AnswerModel.shared_uniform(1.0, 3), 1000, seed=0)
        assert est.p_y_given_e == 1.0
        assert est.conditioned_trials == 1000
        assert est.not_y_trials == 0
        assert math.isnan(est.p_e_given_not_y)

    def test_p_zero_single_error_always_agrees_wrongly(self):
        est = simulate_consistency(AnswerModel.shared_uniform(0.0, 1), 1000, seed=0)
        assert est.p_y_given_e == 0.0
        assert est.p_e_given_not_y == 1.0

    def test_matches_analytic_value(self):
        # shared uniform p=0.7, k=5: P(Y|E) = p^2 / (p^2 + (1-p)^2/k)
        p, k = 0.7, 5
        est = simulate_consistency(AnswerModel.shared_uniform(p, k), 1_000_000, seed=7)
        analytic = p * p / (p * p + (1 - p) ** 2 / k)
        assert abs(est.p_y_given_e - analytic) <= 3 * est.stderr

    def test_seed_determinism(self):
        m = AnswerModel.shared_uniform(0.8, 4)
        a = simulate_consistency(m, 50_000, seed=123)
        b = simulate_consistency(m, 50_000, seed=123)
        assert a == b
        c = simulate_consistency(m, 50_000, seed=124)
        assert c != a

    def test_trials_validated(self):
        with pytest.raises(DomainError):
            simulate_consistency(AnswerModel.shared_uniform(0.8, 2), 0)

    def test_estimate_counts_are_consistent(self):
        est = simulate_consistency(AnswerModel.shared_uniform(0.6, 3), 10_000, seed=5)
        assert 0 <= est.conditioned_trials <= est.trials
        assert 0 <= est.not_y_trials <= est.trials
        assert 0.0 <= est.p_y_given_e <= 1.0
        assert 0.0 <= est.p_e_given_not_y <= 1.0


class TestLemmas:
    def test_random_error_dist_shape(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = rng.uniform(0.0, 1.0)
            k = int(rng.integers(1, 10))
            dist = random_error_dist(p, k, rng)
            assert len(dist) == k
            assert all(w >= 0 for w in dist)
            assert sum(dist) == pytest.approx(1 - p, abs=1e-9)

    def test_sum_of_squares_gap_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            k = int(rng.integers(1, 12))
            x = rng.normal(size=k) * rng.uniform(0.1, 100)
            assert sum_of_squares_gap(x) >= -1e-9

    def test_sum_of_squares_gap_uniform_equality(self):
        assert sum_of_squares_gap(np.full(7, 0.3)) == pytest.approx(0.0, abs=1e-12)

    def test_covariance_identity_oracle(self):
        # recompute both sides by hand for a small fixed vector pair
        x = np.array([1.0, 2.0, 4.0])
        y = np.array([0.5, -1.0, 3.0])
        lhs = float((x * y).sum())
        xbar, ybar = x.mean(), y.mean()
        rhs = float(((x - xbar) * (y - ybar)).sum() + 3 * xbar * ybar)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        assert covariance_identity_residual(x, y) <= 1e-12

    def test_check_lemmas_passes(self):
        checks = check_lemmas(n_vectors=2_000, seed=0)
        assert checks.passed
        assert checks.min_sum_sq_gap >= -1e-12
        assert checks.max_uniform_gap <= 1e-12
        assert checks.max_cov_residual <= 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            covariance_identity_residual(np.ones(3), np.ones(4))


class TestDominance:
    def test_sweep(self):
        check = check_posterior_dominance(step=1e-3)
        assert check.ok
        assert check.strict_interior
        assert check.equality_endpoints
        assert check.n_points == 501


class TestVerifyTheorems:
    def test_small_grid_passes(self):
        report = verify_theorems(
            grid=((0.6, 3), (0.8, 5), (0.95, 2)),
            trials=50_000,
            seed=0,
            n_pairs=30,
            pair_trials=5_000,
            n_weight_checks=500,
            dominance_step=1e-3,
        )
        assert report.passed
        for r in report.grid_results:
            assert r.thm1_ok and r.bound_dominates
            assert r.joint_bounds_ok
            assert r.thm2_joint_ok and r.thm2_ordering_ok

    def test_byte_reproducible(self):
        kwargs = dict(
            grid=((0.7, 2),),
            trials=20_000,
            seed=42,
            n_pairs=5,
            pair_trials=2_000,
            n_weight_checks=100,
            dominance_step=1e-2,
        )
        assert verify_theorems(**kwargs) == verify_theorems(**kwargs)

    def test_grid_rejects_low_p(self):
        with pytest.raises(GridError):
            verify_theorems(grid=((0.4, 2),), trials=100, n_pairs=2, pair_trials=100)
        with pytest.raises(GridError):
            verify_theorems(grid=((0.5, 2),), trials=100, n_pairs=2, pair_trials=100)

    def test_needs_two_pairs(self):
        with pytest.raises(GridError):
            verify_theorems(grid=((0.8, 2),), trials=100, n_pairs=1, pair_trials=100)

    def test_rows_align_with_grid(self):
        report = verify_theorems(
            grid=((0.7, 2), (0.9, 4)),
            trials=5_000,
            seed=1,
            n_pairs=3,
            pair_trials=1_000,
            n_weight_checks=50,
            dominance_step=1e-2,
        )
        rows = report.rows()
        assert [(r["p"], r["k"]) for r in rows] == [(0.7, 2), (0.9, 4)]
        assert all("sim_p_y_given_e" in r for r in rows)

    def test_default_grid_shape(self):
        assert len(DEFAULT_GRID) == 24
        assert all(p > 0.5 for p, _ in DEFAULT_GRID)
