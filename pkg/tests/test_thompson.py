import math

import numpy as np
import pytest

from banditlab.errors import ConfigError, InputError
from banditlab.thompson import (
    ArmPosterior,
    CtsBandit,
    CtsConfig,
    exploration_scale,
    new_bandit,
)


def batch_ridge(history):
    """Independent oracle: (I + X^T X)^-1 X^T r over an update history."""
    X = np.stack([x for x, _ in history])
    r = np.asarray([rw for _, rw in history])
    d = X.shape[1]
    return np.linalg.solve(np.eye(d) + X.T @ X, X.T @ r)


class TestConstruction:
    def test_identity_initialization(self):
        b = new_bandit(3, 2, CtsConfig())
        assert len(b.arms) == 3
        for arm in b.arms:
            np.testing.assert_array_equal(arm.B, np.eye(2))
            np.testing.assert_array_equal(arm.B_inv, np.eye(2))
            np.testing.assert_array_equal(arm.f, np.zeros(2))
            np.testing.assert_array_equal(arm.mu_hat, np.zeros(2))

    def test_minimal_case(self):
        b = new_bandit(1, 1)
        assert b.arms[0].B.shape == (1, 1)
        assert b.arms[0].B[0, 0] == 1.0

    def test_zero_arms_rejected(self):
        with pytest.raises(ConfigError):
            new_bandit(0, 2)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(R=0.0), dict(R=-1.0), dict(epsilon=0.0), dict(epsilon=1.5), dict(gamma=0.0), dict(gamma=2.0)],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            new_bandit(2, 2, CtsConfig(**kwargs))


class TestExplorationScale:
    def test_all_factors_collapse(self):
        v = exploration_scale(CtsConfig(R=1.0, epsilon=1.0, gamma=math.exp(-1), d=1))
        assert v == pytest.approx(math.sqrt(24), abs=1e-12)

    def test_closed_form_value(self):
        # frozen from an mpmath evaluation of sqrt(48 * 4 * ln 10)
        v = exploration_scale(CtsConfig(R=1.0, epsilon=0.5, gamma=0.1, d=4))
        assert v == pytest.approx(21.026087079027728, rel=1e-12)

    def test_linear_in_R(self):
        v = exploration_scale(CtsConfig(R=0.25, epsilon=1.0, gamma=math.exp(-1), d=1))
        assert v == pytest.approx(1.224744871391589, rel=1e-12)


class TestSampleArm:
    def test_fresh_greedy_tie_goes_to_arm_zero(self):
        b = new_bandit(4, 2, CtsConfig(seed=5))
        b.v = 0.0
        assert b.sample_arm([1.0, -0.3]) == 0

    def test_same_seed_same_choices(self):
        choices = []
        for _ in range(2):
            b = new_bandit(3, 2, CtsConfig(seed=99))
            rng = np.random.default_rng(0)
            choices.append([b.sample_arm(rng.normal(size=2)) for _ in range(50)])
        assert choices[0] == choices[1]

    def test_greedy_argmax_on_trained_posteriors(self):
        b = new_bandit(2, 2, CtsConfig(seed=1))
        # (I + e1 e1^T)^-1 (2 e1) = (1, 0); same for arm 1 on e2
        b.update(0, [1.0, 0.0], 2.0)
        b.update(1, [0.0, 1.0], 2.0)
        np.testing.assert_allclose(b.posterior_mean(0), [1.0, 0.0])
        np.testing.assert_allclose(b.posterior_mean(1), [0.0, 1.0])
        b.v = 0.0
        assert b.sample_arm([1.0, 0.0]) == 0
        assert b.sample_arm([0.0, 1.0]) == 1

    def test_dimension_mismatch(self):
        b = new_bandit(2, 3)
        with pytest.raises(InputError):
            b.sample_arm([1.0, 2.0])

    def test_non_finite_context(self):
        b = new_bandit(2, 2)
        with pytest.raises(InputError):
            b.sample_arm([np.nan, 0.0])


class TestUpdate:
    def test_one_step_algebra(self):
        b = new_bandit(1, 2)
        b.update(0, [1.0, 0.0], 1.0)
        arm = b.arms[0]
        np.testing.assert_array_equal(arm.B, [[2.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(arm.f, [1.0, 0.0])
        np.testing.assert_allclose(arm.mu_hat, [0.5, 0.0])

    def test_maintained_inverse_matches_brute_force(self):
        rng = np.random.default_rng(11)
        b = new_bandit(1, 6, CtsConfig(seed=0))
        for _ in range(300):
            b.update(0, rng.normal(size=6), rng.normal())
            arm = b.arms[0]
            np.testing.assert_allclose(
                arm.B_inv, np.linalg.inv(arm.B), atol=1e-6, rtol=0
            )

    def test_zero_reward_shrinks_mean(self):
        b = new_bandit(1, 2)
        b.update(0, [1.0, 0.0], 1.0)
        before = b.posterior_mean(0)[0]
        b.update(0, [1.0, 0.0], 0.0)
        arm = b.arms[0]
        np.testing.assert_array_equal(arm.f, [1.0, 0.0])  # f unchanged
        assert arm.B[0, 0] == 3.0  # B still grows
        assert 0.0 < b.posterior_mean(0)[0] < before

    def test_arm_out_of_range(self):
        b = new_bandit(2, 2)
        with pytest.raises(InputError):
            b.update(2, [1.0, 0.0], 1.0)

    def test_B_equals_identity_plus_outer_sum_replay(self):
        rng = np.random.default_rng(3)
        b = new_bandit(2, 4, CtsConfig(seed=0))
        seen = {0: [], 1: []}
        for _ in range(100):
            arm = int(rng.integers(2))
            x = rng.normal(size=4)
            b.update(arm, x, float(rng.random()))
            seen[arm].append(x)
        for arm in (0, 1):
            expected = np.eye(4) + sum(np.outer(x, x) for x in seen[arm])
            np.testing.assert_allclose(b.arms[arm].B, expected, rtol=1e-12)


class TestPosteriorMean:
    def test_fresh_arm_is_zero(self):
        assert not np.any(new_bandit(2, 3).posterior_mean(1))

    def test_two_unit_updates(self):
        b = new_bandit(1, 3)
        b.update(0, [1.0, 0.0, 0.0], 1.0)
        b.update(0, [1.0, 0.0, 0.0], 1.0)
        np.testing.assert_allclose(b.posterior_mean(0), [2.0 / 3.0, 0.0, 0.0])

    def test_matches_batch_ridge_oracle(self):
        rng = np.random.default_rng(21)
        b = new_bandit(1, 8, CtsConfig(seed=0))
        history = []
        for _ in range(50):
            x = rng.normal(size=8)
            r = float(rng.normal())
            history.append((x, r))
            b.update(0, x, r)
        oracle = batch_ridge(history)
        np.testing.assert_allclose(b.posterior_mean(0), oracle, rtol=1e-8)


class TestReinitialize:
    def test_posteriors_reset(self):
        b = new_bandit(2, 3, CtsConfig(seed=0))
        rng = np.random.default_rng(0)
        for _ in range(20):
            b.update(int(rng.integers(2)), rng.normal(size=3), rng.random())
        b.reinitialize()
        for arm in range(2):
            assert not np.any(b.posterior_mean(arm))
            np.testing.assert_array_equal(b.arms[arm].B, np.eye(3))

    def test_idempotent(self):
        b = new_bandit(2, 2, CtsConfig(seed=0))
        b.update(0, [1.0, 1.0], 1.0)
        b.reinitialize()
        state = [(a.B.copy(), a.f.copy()) for a in b.arms]
        b.reinitialize()
        for (B, f), arm in zip(state, b.arms):
            np.testing.assert_array_equal(B, arm.B)
            np.testing.assert_array_equal(f, arm.f)

    def test_reinitialized_matches_fresh_given_same_rng_state(self):
        a = new_bandit(3, 4, CtsConfig(seed=8))
        rng = np.random.default_rng(1)
        for _ in range(30):
            a.update(int(rng.integers(3)), rng.normal(size=4), rng.random())
        a.reinitialize()

        fresh = new_bandit(3, 4, CtsConfig(seed=8))
        fresh.rng.bit_generator.state = a.rng.bit_generator.state

        rng_inputs = np.random.default_rng(2)
        for _ in range(50):
            x = rng_inputs.normal(size=4)
            arm_a = a.sample_arm(x)
            arm_f = fresh.sample_arm(x)
            assert arm_a == arm_f
            r = float(rng_inputs.random())
            a.update(arm_a, x, r)
            fresh.update(arm_f, x, r)


class TestInverseMaintenance:
    def test_long_random_sequence_stays_consistent(self):
        rng = np.random.default_rng(42)
        b = new_bandit(1, 8, CtsConfig(seed=0))
        for _ in range(3000):
            x = rng.normal(size=8) * rng.uniform(0, 10 / math.sqrt(8))
            b.update(0, x, rng.normal())
        arm = b.arms[0]
        err = np.abs(arm.B @ arm.B_inv - np.eye(8)).max()
        assert err <= 1e-6
