"""Function-class construction and the three structural coefficients."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import consistency_table, weighted_sq_norm
from sbeedlab import (
    ClassSpec,
    FiniteMdp,
    FunctionClasses,
    SoftParams,
    build_perturbation_classes,
    classes_from_json,
    classes_to_json,
    concentrability,
    consistency_operator,
    helper_realizability_error,
    load_classes,
    make_rng,
    mu_digest,
    occupancy_distribution,
    random_mdp,
    realizability_error,
    save_classes,
    soft_value_iteration,
    uniform_distribution,
    v_lambda_max,
    validate_classes,
    validate_distribution,
    validate_mdp,
    weighted_norm,
)
from sbeedlab.errors import (
    ClassConstraintViolation,
    InfeasibleSpec,
    NegativeEntry,
    NonStochasticRow,
    ShapeMismatch,
    ZeroSupport,
)


def single_state_mdp(rewards):
    rewards = np.asarray(rewards, dtype=np.float64)[None, :]
    n_actions = rewards.shape[1]
    return validate_mdp(
        FiniteMdp(
            transition=np.ones((1, n_actions, 1)),
            reward=rewards,
            discount=0.5,
            init_dist=np.ones(1),
            r_max=1.0,
        )
    )


def hand_classes(mdp, lam, values, policies, helpers):
    values = np.asarray(values, dtype=np.float64)
    policies = np.asarray(policies, dtype=np.float64)
    helpers = np.asarray(helpers, dtype=np.float64)
    spec = ClassSpec(values.shape[0], policies.shape[0], helpers.shape[0])
    return FunctionClasses(
        values=values,
        policies=policies,
        helpers=helpers,
        v_lambda_max=v_lambda_max(mdp, lam),
        lam=lam.lam,
        seed=0,
        spec=spec,
    )


class TestWeightedNorm:
    @given(st.floats(-50.0, 50.0))
    @settings(max_examples=40, deadline=None)
    def test_constant_table(self, c):
        mu = np.full((2, 3), 1.0 / 6.0)
        assert weighted_norm(np.full((2, 3), c), mu) == pytest.approx(abs(c), abs=1e-12)

    def test_zero(self):
        assert weighted_norm(np.zeros((3, 2)), np.full((3, 2), 1.0 / 6.0)) == 0.0

    def test_uniform_four_cell(self):
        mu = np.full((2, 2), 0.25)
        f = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert weighted_norm(f, mu) == pytest.approx(math.sqrt(30.0 / 4.0), rel=1e-14)

    def test_matches_loop_oracle(self):
        rng = make_rng(9)
        f = rng.standard_normal((4, 3))
        mu = rng.dirichlet(np.ones(12)).reshape(4, 3)
        assert weighted_norm(f, mu) == pytest.approx(
            math.sqrt(weighted_sq_norm(f, mu)), rel=1e-14
        )

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            weighted_norm(np.zeros((2, 2)), np.full((2, 3), 1.0 / 6.0))


class TestConcentrability:
    def test_matching_visitation_gives_one(self):
        mdp = single_state_mdp([0.0, 0.0])
        lam = SoftParams(1.0)
        uniform = np.full((1, 2), 0.5)
        classes = hand_classes(mdp, lam, [[0.0]], [uniform], [np.zeros((1, 2))])
        _, pi_star = soft_value_iteration(mdp, lam)
        mu = occupancy_distribution(mdp, uniform)
        assert concentrability(classes, pi_star, mu, mdp) == pytest.approx(1.0, abs=1e-12)

    def test_single_state_hand_value(self):
        mdp = single_state_mdp([0.0, 0.0])
        lam = SoftParams(1.0)
        skewed = np.array([[0.75, 0.25]])
        classes = hand_classes(mdp, lam, [[0.0]], [skewed], [np.zeros((1, 2))])
        _, pi_star = soft_value_iteration(mdp, lam)
        mu = np.full((1, 2), 0.5)
        # 0.75^2/0.5 + 0.25^2/0.5 beats the uniform reference policy's 1.0.
        assert concentrability(classes, pi_star, mu, mdp) == pytest.approx(1.25, abs=1e-12)

    def test_at_least_one(self):
        for i in range(20):
            mdp = random_mdp(2 + i % 5, 2 + i % 3, (0.4, 0.8)[i % 2], seed=(121, i))
            lam = SoftParams((0.2, 1.0)[i % 2])
            classes = build_perturbation_classes(
                mdp, lam, ClassSpec(2, 3, 2, realizable=bool(i % 2)), seed=i
            )
            _, pi_star = soft_value_iteration(mdp, lam)
            mu = uniform_distribution(mdp)
            assert concentrability(classes, pi_star, mu, mdp) >= 1.0

    def test_zero_support_rejected(self):
        mdp = single_state_mdp([0.0, 0.0])
        lam = SoftParams(1.0)
        classes = hand_classes(
            mdp, lam, [[0.0]], [np.full((1, 2), 0.5)], [np.zeros((1, 2))]
        )
        _, pi_star = soft_value_iteration(mdp, lam)
        with pytest.raises(ZeroSupport):
            concentrability(classes, pi_star, np.array([[1.0, 0.0]]), mdp)


class TestRealizabilityError:
    def test_exact_members_give_zero(self):
        mdp = random_mdp(4, 3, 0.6, seed=33)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(4, 4, 4, realizable=True), seed=3
        )
        eps, pair = realizability_error(classes, uniform_distribution(mdp), mdp, lam)
        assert eps <= 1e-16
        assert pair == (0, 0)

    def test_constant_shift_hand_value(self):
        mdp = random_mdp(3, 2, 0.5, seed=44)
        lam = SoftParams(0.4)
        v_star, pi_star = soft_value_iteration(mdp, lam)
        classes = hand_classes(
            mdp,
            lam,
            [v_star + 0.1],
            [pi_star],
            [np.zeros((3, 2))],
        )
        mu = uniform_distribution(mdp)
        eps, _ = realizability_error(classes, mu, mdp, lam)
        # A constant shift c survives the backup as c (1 - gamma).
        assert eps == pytest.approx((0.1 * 0.5) ** 2, rel=1e-8)
        resid = (v_star + 0.1)[:, None] - consistency_table(
            mdp, v_star + 0.1, pi_star, lam.lam
        )
        assert eps == pytest.approx(weighted_sq_norm(resid, mu), rel=1e-12)

    def test_singleton_argmin(self):
        mdp = random_mdp(3, 2, 0.5, seed=45)
        lam = SoftParams(0.4)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(1, 1, 1, realizable=False), seed=9
        )
        _, pair = realizability_error(classes, uniform_distribution(mdp), mdp, lam)
        assert pair == (0, 0)


class TestHelperRealizabilityError:
    def test_closure_gives_zero(self):
        mdp = random_mdp(4, 3, 0.6, seed=34)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(3, 3, 9, realizable=True, helper_complete=True), seed=4
        )
        assert helper_realizability_error(classes, uniform_distribution(mdp), mdp, lam) <= 1e-16

    def test_constant_offset_hand_value(self):
        mdp = random_mdp(4, 3, 0.6, seed=35)
        lam = SoftParams(0.5)
        v_star, pi_star = soft_value_iteration(mdp, lam)
        image = consistency_operator(mdp, v_star, pi_star, lam)
        classes = hand_classes(mdp, lam, [v_star], [pi_star], [image + 0.2])
        eps = helper_realizability_error(classes, uniform_distribution(mdp), mdp, lam)
        assert eps == pytest.approx(0.04, rel=1e-12)

    def test_more_helpers_never_increase(self):
        mdp = random_mdp(4, 3, 0.6, seed=36)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(3, 3, 6, realizable=True), seed=5
        )
        mu = uniform_distribution(mdp)
        eps_full = helper_realizability_error(classes, mu, mdp, lam)
        smaller = dataclasses.replace(classes, helpers=classes.helpers[:2])
        assert eps_full <= helper_realizability_error(smaller, mu, mdp, lam) + 1e-18


class TestStructuralMonotonicity:
    @pytest.fixture
    def setup(self):
        mdp = random_mdp(4, 3, 0.7, seed=55)
        lam = SoftParams(0.3)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(6, 5, 7, realizable=False), seed=6
        )
        return mdp, lam, classes, uniform_distribution(mdp)

    def test_enlarging_pairs_never_increases_fit_error(self, setup):
        mdp, lam, classes, mu = setup
        eps_full, _ = realizability_error(classes, mu, mdp, lam)
        sub = dataclasses.replace(
            classes, values=classes.values[:2], policies=classes.policies[:2]
        )
        eps_sub, _ = realizability_error(sub, mu, mdp, lam)
        assert eps_full <= eps_sub + 1e-18

    def test_enlarging_pairs_never_decreases_helper_error(self, setup):
        mdp, lam, classes, mu = setup
        eps_full = helper_realizability_error(classes, mu, mdp, lam)
        sub = dataclasses.replace(
            classes, values=classes.values[:2], policies=classes.policies[:2]
        )
        assert eps_full >= helper_realizability_error(sub, mu, mdp, lam) - 1e-18

    def test_permutation_invariance(self, setup):
        mdp, lam, classes, mu = setup
        rng = make_rng(66)
        shuffled = dataclasses.replace(
            classes,
            values=classes.values[rng.permutation(classes.values.shape[0])],
            policies=classes.policies[rng.permutation(classes.policies.shape[0])],
            helpers=classes.helpers[rng.permutation(classes.helpers.shape[0])],
        )
        eps_a, _ = realizability_error(classes, mu, mdp, lam)
        eps_b, _ = realizability_error(shuffled, mu, mdp, lam)
        assert eps_a == eps_b
        assert helper_realizability_error(classes, mu, mdp, lam) == (
            helper_realizability_error(shuffled, mu, mdp, lam)
        )
        _, pi_star = soft_value_iteration(mdp, lam)
        assert concentrability(classes, pi_star, mu, mdp) == (
            concentrability(shuffled, pi_star, mu, mdp)
        )


class TestBuildPerturbationClasses:
    def test_realizable_complete_eps_floor(self):
        mdp = random_mdp(4, 3, 0.6, seed=71)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(3, 3, 9, realizable=True, helper_complete=True), seed=7
        )
        mu = uniform_distribution(mdp)
        eps_vp, _ = realizability_error(classes, mu, mdp, lam)
        assert eps_vp <= 1e-16
        assert helper_realizability_error(classes, mu, mdp, lam) <= 1e-16

    def test_same_seed_identical(self):
        mdp = random_mdp(4, 3, 0.6, seed=72)
        lam = SoftParams(0.5)
        spec = ClassSpec(5, 4, 6, realizable=True)
        a = build_perturbation_classes(mdp, lam, spec, seed=8)
        b = build_perturbation_classes(mdp, lam, spec, seed=8)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.policies, b.policies)
        assert np.array_equal(a.helpers, b.helpers)

    def test_degenerate_counts_give_exact_solution(self):
        mdp = random_mdp(4, 3, 0.5, seed=73)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(1, 1, 1, realizable=True), seed=9
        )
        v_star, pi_star = soft_value_iteration(mdp, lam)
        assert np.allclose(classes.values[0], v_star, atol=1e-9)
        assert np.allclose(classes.policies[0], pi_star, atol=1e-9)
        assert np.allclose(
            classes.helpers[0], consistency_operator(mdp, v_star, pi_star, lam), atol=1e-9
        )

    def test_helper_closure_size(self):
        mdp = random_mdp(3, 2, 0.5, seed=74)
        lam = SoftParams(0.5)
        full = build_perturbation_classes(
            mdp, lam, ClassSpec(3, 2, 1, realizable=True, helper_complete=True), seed=10
        )
        assert full.helpers.shape[0] == 6  # closure of 3 x 2 pairs wins over the count
        padded = build_perturbation_classes(
            mdp, lam, ClassSpec(3, 2, 10, realizable=True, helper_complete=True), seed=10
        )
        assert padded.helpers.shape[0] == 10

    def test_box_constraints(self):
        for i in range(6):
            mdp = random_mdp(3 + i % 3, 2 + i % 2, (0.5, 0.9)[i % 2], seed=(75, i))
            lam = SoftParams((0.1, 1.0)[i % 2])
            classes = build_perturbation_classes(
                mdp, lam, ClassSpec(4, 4, 5, scale=2.0, realizable=False), seed=i
            )
            vmax = v_lambda_max(mdp, lam)
            assert np.all(classes.values >= 0.0)
            assert np.all(classes.values <= vmax + 1e-12)
            assert np.all(classes.helpers >= 0.0)
            assert np.all(classes.helpers <= 2.0 * vmax + 1e-12)
            assert np.all(classes.policies > 0.0)
            assert np.allclose(classes.policies.sum(axis=2), 1.0, atol=1e-12)
            assert np.max(np.abs(np.log(classes.policies))) <= vmax / lam.lam * (1 + 1e-9)

    def test_member_scales_decay(self):
        # Later perturbed members hug the anchor more tightly than early ones.
        mdp = random_mdp(4, 3, 0.5, seed=76)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(
            mdp, lam, ClassSpec(10, 2, 2, scale=0.5, realizable=True), seed=11
        )
        v_star = classes.values[0]
        gaps = np.max(np.abs(classes.values[1:] - v_star), axis=1)
        assert gaps[-1] < gaps[0]
        assert gaps[-1] < 0.02  # 0.5 * 0.6^8 is about 0.008

    def test_infeasible_specs(self):
        mdp = random_mdp(3, 2, 0.5, seed=77)
        lam = SoftParams(0.5)
        with pytest.raises(InfeasibleSpec):
            build_perturbation_classes(mdp, lam, ClassSpec(0, 1, 1), seed=0)
        with pytest.raises(InfeasibleSpec):
            build_perturbation_classes(mdp, lam, ClassSpec(1, 1, 1, scale=-0.5), seed=0)
        with pytest.raises(InfeasibleSpec):
            build_perturbation_classes(
                mdp, lam, ClassSpec(1, 1, 1, scale=float("nan")), seed=0
            )


class TestValidateClasses:
    @pytest.fixture
    def valid(self):
        mdp = random_mdp(3, 2, 0.5, seed=81)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(mdp, lam, ClassSpec(2, 2, 2), seed=12)
        return mdp, classes

    def test_passes_builder_output(self, valid):
        mdp, classes = valid
        assert validate_classes(classes, mdp) is classes

    def test_value_above_ceiling(self, valid):
        mdp, classes = valid
        bad = dataclasses.replace(
            classes, values=classes.values + 2.0 * classes.v_lambda_max
        )
        with pytest.raises(ClassConstraintViolation):
            validate_classes(bad, mdp)

    def test_policy_row_not_normalized(self, valid):
        mdp, classes = valid
        bad = dataclasses.replace(classes, policies=classes.policies * 0.9)
        with pytest.raises(NonStochasticRow):
            validate_classes(bad, mdp)

    def test_wrong_ceiling(self, valid):
        mdp, classes = valid
        bad = dataclasses.replace(classes, v_lambda_max=classes.v_lambda_max * 1.5)
        with pytest.raises(ClassConstraintViolation):
            validate_classes(bad, mdp)

    def test_shape_mismatch(self, valid):
        mdp, classes = valid
        bad = dataclasses.replace(classes, values=classes.values[:, :2])
        with pytest.raises(ShapeMismatch):
            validate_classes(bad, mdp)


class TestDistributions:
    def test_uniform_distribution(self):
        mdp = random_mdp(4, 3, 0.5, seed=91)
        mu = uniform_distribution(mdp)
        assert mu.shape == (4, 3)
        assert np.allclose(mu, 1.0 / 12.0)

    def test_occupancy_distribution_full_support(self):
        mdp = random_mdp(4, 3, 0.5, seed=92)
        lam = SoftParams(0.5)
        _, pi_star = soft_value_iteration(mdp, lam)
        mu = occupancy_distribution(mdp, pi_star)
        assert mu.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(mu > 0.0)

    def test_validate_distribution_errors(self):
        with pytest.raises(NegativeEntry):
            validate_distribution(np.array([[0.5, 0.6], [-0.1, 0.0]]))
        with pytest.raises(NonStochasticRow):
            validate_distribution(np.full((2, 2), 0.3))
        with pytest.raises(ZeroSupport):
            validate_distribution(
                np.array([[0.5, 0.5], [0.0, 0.0]]), full_support=True
            )

    def test_mu_digest_stable(self):
        mu = np.full((2, 2), 0.25)
        assert mu_digest(mu) == mu_digest(mu.copy())
        assert mu_digest(mu) != mu_digest(np.array([[0.4, 0.1], [0.25, 0.25]]))


class TestClassSerialization:
    def test_round_trip(self, tmp_path):
        mdp = random_mdp(3, 2, 0.5, seed=95)
        lam = SoftParams(0.5)
        classes = build_perturbation_classes(mdp, lam, ClassSpec(3, 2, 4), seed=13)
        clone = classes_from_json(classes_to_json(classes))
        assert np.array_equal(clone.values, classes.values)
        assert np.array_equal(clone.policies, classes.policies)
        assert np.array_equal(clone.helpers, classes.helpers)
        assert clone.v_lambda_max == classes.v_lambda_max
        path = tmp_path / "classes.json"
        save_classes(classes, path)
        from_file = load_classes(path)
        assert np.array_equal(from_file.values, classes.values)
