import unittest

import numpy as np

from mdpo.envs import ChainEnv, enumerate_trajectories, make_reference_policy, policy_value, sample_trajectories, \
    sample_trajectory
from mdpo.errors import ConfigurationError
from mdpo.policies import TabularPolicy


class TestChainEnv(unittest.TestCase):

    def test_defaults(self):
        env = ChainEnv()
        self.assertEqual((env.num_states, env.num_actions, env.horizon), (8, 2, 20))
        self.assertEqual(env.reward(3, 0), 1.0)
        self.assertEqual(env.reward(3, 1), 0.0)
        self.assertEqual(env.next_state(7, 0), 0)
        self.assertEqual(env.next_state(7, 1), 7)

    def test_invalid_configurations(self):
        with self.assertRaises(ConfigurationError):
            ChainEnv(horizon=0)
        with self.assertRaises(ConfigurationError):
            ChainEnv(num_states=2, num_actions=2, reward=[[0.5, 2.0], [0.0, 0.0]])
        with self.assertRaises(ConfigurationError):
            ChainEnv(reward='sparse')

    def test_spec_round_trip(self):
        env = ChainEnv(3, 2, 4, reward=[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        self.assertEqual(ChainEnv.from_spec(env.spec), env)
        self.assertEqual(ChainEnv.from_spec(ChainEnv().spec), ChainEnv())


class TestSampling(unittest.TestCase):

    def setUp(self) -> None:
        self.env = ChainEnv(horizon=5)

    def test_deterministic_advance(self):
        policy = make_reference_policy(self.env, 1.0)
        tau = sample_trajectory(self.env, policy, 2, np.random.default_rng(0))
        self.assertEqual(tau.cumulative_reward, 5.0)
        self.assertEqual(tau.states, (2, 3, 4, 5, 6))
        self.assertEqual(len(tau), 5)

    def test_same_seed_same_trajectory(self):
        policy = TabularPolicy.random(8, 2, np.random.default_rng(1), std=1.0)
        a = sample_trajectory(self.env, policy, 0, np.random.default_rng(7))
        b = sample_trajectory(self.env, policy, 0, np.random.default_rng(7))
        self.assertEqual(a, b)

    def test_reward_is_sum_of_steps(self):
        env = ChainEnv(4, 3, 6, reward=np.random.default_rng(2).random((4, 3)))
        policy = TabularPolicy.random(4, 3, np.random.default_rng(3), std=1.0)
        for tau in sample_trajectories(env, policy, [0, 1, 2, 3] * 5, np.random.default_rng(4)):
            self.assertEqual(tau.start_state, tau.states[0])
            total = sum(env.reward(s, a) for s, a in tau.steps)
            self.assertAlmostEqual(tau.cumulative_reward, total, delta=1e-12)
            self.assertTrue(0.0 <= tau.cumulative_reward <= env.horizon)

    def test_mean_reward_matches_skill(self):
        env = ChainEnv(horizon=10)
        policy = make_reference_policy(env, 0.9)
        rng = np.random.default_rng(5)
        rewards = [tau.cumulative_reward for tau in sample_trajectories(env, policy, np.zeros(100000, int), rng)]
        self.assertAlmostEqual(np.mean(rewards), 9.0, delta=0.03)

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigurationError):
            sample_trajectory(self.env, TabularPolicy.uniform(3, 2), 0, np.random.default_rng(0))
        with self.assertRaises(ConfigurationError):
            sample_trajectory(self.env, TabularPolicy.uniform(8, 2), 8, np.random.default_rng(0))


class TestPolicyValue(unittest.TestCase):

    def test_uniform_policy(self):
        for horizon in (1, 7, 20):
            env = ChainEnv(horizon=horizon)
            value, stderr = policy_value(env, TabularPolicy.uniform(8, 2))
            self.assertAlmostEqual(value, horizon / 2.0, places=12)
            self.assertEqual(stderr, 0.0)

    def test_skill_policies(self):
        env = ChainEnv(horizon=20)
        for q in (0.25, 0.5, 0.75):
            self.assertAlmostEqual(policy_value(env, make_reference_policy(env, q))[0], 20 * q, delta=1e-10)
        # the end points are clamped to [1e-6, 1 - 1e-6] before the logit transform
        self.assertAlmostEqual(policy_value(env, make_reference_policy(env, 0.0))[0], 0.0, delta=20 * 1e-6)
        self.assertAlmostEqual(policy_value(env, make_reference_policy(env, 1.0))[0], 20.0, delta=20 * 1e-6)
        self.assertAlmostEqual(policy_value(ChainEnv(horizon=10), make_reference_policy(ChainEnv(horizon=10), 0.9))[0],
                               9.0, delta=1e-10)

    def test_invalid_skill(self):
        with self.assertRaises(ConfigurationError):
            make_reference_policy(ChainEnv(), 1.5)

    def test_monte_carlo_matches_exact(self):
        env = ChainEnv(4, 2, 8, reward=np.random.default_rng(6).random((4, 2)))
        rng = np.random.default_rng(7)
        for k in range(20):
            policy = TabularPolicy.random(4, 2, rng, std=1.0)
            exact, _ = policy_value(env, policy)
            mean, stderr = policy_value(env, policy, 'monte_carlo', 20000, np.random.default_rng(k))
            self.assertLess(abs(mean - exact), 4.0 * stderr)

    def test_exact_mode_size_limit(self):
        env = ChainEnv(1000, 2, 501)
        with self.assertRaises(ConfigurationError):
            policy_value(env, TabularPolicy.uniform(1000, 2))

    def test_unknown_mode(self):
        with self.assertRaises(ConfigurationError):
            policy_value(ChainEnv(), TabularPolicy.uniform(8, 2), 'bootstrap')


class TestEnumeration(unittest.TestCase):

    def test_all_action_sequences(self):
        env = ChainEnv(2, 2, 3)
        trajectories = enumerate_trajectories(env, 1)
        self.assertEqual(len(trajectories), 8)
        self.assertEqual(len({tau.actions for tau in trajectories}), 8)
        self.assertTrue(all(tau.start_state == 1 for tau in trajectories))
        self.assertEqual(sorted(tau.cumulative_reward for tau in trajectories), [0, 1, 1, 1, 2, 2, 2, 3])
