"""
Episodic chain MDP on a ring of states.

Action 0 advances to the next state on the ring, every other action stays.
The default reward pays 1 for advancing, so a policy that advances with
probability q everywhere is worth exactly T * q.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from mdpo.errors import ConfigurationError

logger = logging.getLogger(__name__)

ADVANCE = 0
SKILL_CLAMP = 1e-6
MAX_DP_ENTRIES = 10 ** 6


@dataclass(frozen=True)
class Trajectory:
    states: Tuple[int, ...]
    actions: Tuple[int, ...]
    cumulative_reward: float

    @property
    def steps(self):
        return list(zip(self.states, self.actions))

    @property
    def start_state(self):
        return self.states[0]

    def __len__(self):
        return len(self.actions)


class ChainEnv:

    def __init__(self, num_states=8, num_actions=2, horizon=20, reward='advance_unit', start_distribution=None):
        violations = []
        if int(num_states) < 1:
            violations.append(f'states must be positive, got {num_states}')
        if int(num_actions) < 1:
            violations.append(f'actions must be positive, got {num_actions}')
        if int(horizon) < 1:
            violations.append(f'horizon must be at least 1, got {horizon}')
        if violations:
            raise ConfigurationError(violations)
        self._num_states = int(num_states)
        self._num_actions = int(num_actions)
        self._horizon = int(horizon)

        if isinstance(reward, str):
            if reward != 'advance_unit':
                raise ConfigurationError(f'unknown reward {reward!r}')
            table = np.zeros((self._num_states, self._num_actions))
            table[:, ADVANCE] = 1.0
            self._reward_name = reward
        else:
            table = np.array(reward, dtype=float)
            self._reward_name = 'table'
        if table.shape != (self._num_states, self._num_actions):
            raise ConfigurationError(f'reward table shape {table.shape} does not match '
                                     f'({self._num_states}, {self._num_actions})')
        if np.any(table < 0.0) or np.any(table > 1.0):
            raise ConfigurationError('rewards must lie in [0, 1]')
        table.setflags(write=False)
        self._reward = table

        if start_distribution is None:
            mu = np.full(self._num_states, 1.0 / self._num_states)
        else:
            from mdpo.potentials import SimplexPoint
            mu = np.array(SimplexPoint(start_distribution).probs)
            if mu.size != self._num_states:
                raise ConfigurationError('start distribution size does not match the number of states')
        mu.setflags(write=False)
        self._mu = mu

        nxt = np.repeat(np.arange(self._num_states)[:, None], self._num_actions, axis=1)
        nxt[:, ADVANCE] = (np.arange(self._num_states) + 1) % self._num_states
        nxt.setflags(write=False)
        self._next = nxt

    @property
    def num_states(self):
        return self._num_states

    @property
    def num_actions(self):
        return self._num_actions

    @property
    def horizon(self):
        return self._horizon

    @property
    def reward_table(self):
        return self._reward

    @property
    def start_distribution(self):
        return self._mu

    @property
    def transitions(self):
        return self._next

    def reward(self, state, action):
        return float(self._reward[state, action])

    def next_state(self, state, action):
        return int(self._next[state, action])

    @property
    def spec(self):
        spec = {'states': self._num_states, 'actions': self._num_actions, 'horizon': self._horizon,
                'reward': self._reward_name}
        if self._reward_name == 'table':
            spec['reward_table'] = self._reward.tolist()
        if not np.allclose(self._mu, 1.0 / self._num_states):
            spec['start_distribution'] = self._mu.tolist()
        return spec

    @staticmethod
    def from_spec(spec):
        reward = spec.get('reward', 'advance_unit')
        if reward == 'table':
            reward = spec['reward_table']
        return ChainEnv(spec.get('states', 8), spec.get('actions', 2), spec.get('horizon', 20), reward,
                        spec.get('start_distribution'))

    @staticmethod
    def random_tiny(rng, max_states=2, num_actions=2, max_horizon=2):
        """
        Small environment with a random reward table, used by the theorem oracle.
        """
        states = int(rng.integers(1, max_states + 1))
        horizon = int(rng.integers(1, max_horizon + 1))
        return ChainEnv(states, num_actions, horizon, rng.random((states, num_actions)))

    def __eq__(self, other):
        return isinstance(other, ChainEnv) and self.spec == other.spec

    def __repr__(self):
        return f'ChainEnv({self.spec})'


def _check(env, policy):
    policy.check_dimensions(env.num_states, env.num_actions)


def sample_trajectories(env, policy, start_states, rng):
    """
    Rolls out one episode per start state, all with the same generator.
    """
    _check(env, policy)
    states = np.asarray(start_states, dtype=int)
    if np.any(states < 0) or np.any(states >= env.num_states):
        raise ConfigurationError(f'start states must lie in [0, {env.num_states})')
    n, horizon = states.size, env.horizon
    cdf = np.cumsum(policy.probs(), axis=1)
    cdf[:, -1] = 1.0
    visited = np.empty((n, horizon), dtype=int)
    taken = np.empty((n, horizon), dtype=int)
    rewards = np.zeros(n)
    for t in range(horizon):
        u = rng.random(n)
        actions = (u[:, None] < cdf[states]).argmax(axis=1)
        visited[:, t] = states
        taken[:, t] = actions
        rewards += env.reward_table[states, actions]
        states = env.transitions[states, actions]
    return [Trajectory(tuple(visited[i].tolist()), tuple(taken[i].tolist()), float(rewards[i])) for i in range(n)]


def sample_trajectory(env, policy, s0, rng):
    return sample_trajectories(env, policy, [s0], rng)[0]


def sample_start_states(env, n, rng):
    return rng.choice(env.num_states, size=n, p=env.start_distribution)


def state_values(env, policy):
    """
    V_0(s) by backward dynamic programming over the horizon.
    """
    _check(env, policy)
    if env.num_states * env.num_actions * env.horizon > MAX_DP_ENTRIES:
        raise ConfigurationError('environment too large for exact dynamic programming')
    probs = policy.probs()
    values = np.zeros(env.num_states)
    for _ in range(env.horizon):
        q = env.reward_table + values[env.transitions]
        values = (probs * q).sum(axis=1)
    return values


def policy_value(env, policy, mode='exact', episodes=512, rng=None):
    """
    Expected cumulative reward as (mean, stderr). ``mode`` is "exact" or
    "monte_carlo"; the latter averages ``episodes`` rollouts.
    """
    if mode == 'exact':
        return float(np.dot(env.start_distribution, state_values(env, policy))), 0.0
    if mode != 'monte_carlo':
        raise ConfigurationError(f'unknown evaluation mode {mode!r}')
    if rng is None:
        rng = np.random.default_rng()
    starts = sample_start_states(env, episodes, rng)
    returns = np.array([tau.cumulative_reward for tau in sample_trajectories(env, policy, starts, rng)])
    stderr = float(returns.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else 0.0
    return float(returns.mean()), stderr


def make_reference_policy(env, skill):
    """
    Policy advancing with probability ``skill`` in every state; the remaining
    mass is spread over the other actions.
    """
    if not 0.0 <= skill <= 1.0:
        raise ConfigurationError(f'skill must lie in [0, 1], got {skill}')
    if env.num_actions < 2:
        raise ConfigurationError('skill policies need at least two actions')
    q = min(max(skill, SKILL_CLAMP), 1.0 - SKILL_CLAMP)
    row = np.full(env.num_actions, (1.0 - q) / (env.num_actions - 1))
    row[ADVANCE] = q
    from mdpo.policies import TabularPolicy
    return TabularPolicy(np.log(np.tile(row, (env.num_states, 1))))


def enumerate_trajectories(env, s0):
    """
    Every action sequence from ``s0`` as a Trajectory (|A|^T of them).
    """
    sequences = np.array(np.meshgrid(*[np.arange(env.num_actions)] * env.horizon, indexing='ij'))
    sequences = sequences.reshape(env.horizon, -1).T
    trajectories = []
    for actions in sequences:
        state, states, total = s0, [], 0.0
        for a in actions:
            states.append(int(state))
            total += env.reward(state, a)
            state = env.next_state(state, a)
        trajectories.append(Trajectory(tuple(states), tuple(int(a) for a in actions), total))
    return trajectories
