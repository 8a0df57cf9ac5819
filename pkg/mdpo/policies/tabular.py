import json

import numpy as np
from scipy.special import log_softmax, softmax

from mdpo.errors import ConfigurationError, DatasetFormatError

CHECKPOINT_FORMAT = 'mdpo-policy'
CHECKPOINT_VERSION = 1


class TabularPolicy:
    """
    Softmax policy over a small discrete MDP: pi(.|s) = softmax(logits[s]).
    """

    def __init__(self, logits):
        logits = np.array(logits, dtype=float)
        if logits.ndim != 2 or 0 in logits.shape:
            raise ConfigurationError(f'policy logits must be a non-empty [state x action] matrix, got {logits.shape}')
        if not np.all(np.isfinite(logits)):
            raise ConfigurationError('policy logits must be finite')
        self._logits = logits

    @property
    def logits(self):
        return self._logits

    @logits.setter
    def logits(self, value):
        value = np.array(value, dtype=float)
        if value.shape != self._logits.shape:
            raise ConfigurationError(f'logit shape {value.shape} does not match {self._logits.shape}')
        self._logits = value

    @property
    def num_states(self):
        return self._logits.shape[0]

    @property
    def num_actions(self):
        return self._logits.shape[1]

    @property
    def shape(self):
        return self._logits.shape

    def probs(self):
        return softmax(self._logits, axis=1)

    def log_probs(self):
        return log_softmax(self._logits, axis=1)

    def row(self, state):
        from mdpo.potentials import SimplexPoint
        return SimplexPoint(self.probs()[state])

    def copy(self):
        return TabularPolicy(self._logits.copy())

    def __eq__(self, other):
        return isinstance(other, TabularPolicy) and np.array_equal(self._logits, other._logits)

    def __repr__(self):
        return f'TabularPolicy(shape={self.shape})'

    @staticmethod
    def uniform(num_states, num_actions):
        return TabularPolicy(np.zeros((num_states, num_actions)))

    @staticmethod
    def random(num_states, num_actions, rng, std=0.01):
        """
        From-scratch initialisation: i.i.d. normal logits.
        """
        return TabularPolicy(rng.normal(0.0, std, size=(num_states, num_actions)))

    @staticmethod
    def from_probs(probs, clamp=1e-6):
        probs = np.clip(np.array(probs, dtype=float), clamp, 1.0 - clamp)
        return TabularPolicy(np.log(probs))

    def check_dimensions(self, num_states, num_actions):
        if self.shape != (num_states, num_actions):
            raise ConfigurationError(
                f'policy shape {self.shape} does not match environment ({num_states}, {num_actions})')

    # -- checkpoints ---------------------------------------------------------------

    def to_json(self):
        return json.dumps({'format': CHECKPOINT_FORMAT,
                           'version': CHECKPOINT_VERSION,
                           'shape': list(self.shape),
                           'logits': self._logits.ravel().tolist()})

    @staticmethod
    def from_json(text):
        try:
            payload = json.loads(text)
            if payload.get('format') != CHECKPOINT_FORMAT:
                raise DatasetFormatError(1, f'not a policy checkpoint: {payload.get("format")!r}')
            if payload.get('version') != CHECKPOINT_VERSION:
                raise DatasetFormatError(1, f'unsupported policy checkpoint version {payload.get("version")!r}')
            shape = tuple(payload['shape'])
            return TabularPolicy(np.array(payload['logits'], dtype=float).reshape(shape))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, DatasetFormatError):
                raise
            raise DatasetFormatError(1, f'malformed policy checkpoint: {exc}') from None

    @staticmethod
    def load(path):
        with open(path, encoding='utf-8') as f:
            return TabularPolicy.from_json(f.read())


def _trajectory_arrays(trajectory):
    return np.asarray(trajectory.states, dtype=int), np.asarray(trajectory.actions, dtype=int)


def log_prob(policy, trajectory):
    """
    log pi(tau) = sum_t log pi(a_t | s_t).
    """
    states, actions = _trajectory_arrays(trajectory)
    return float(policy.log_probs()[states, actions].sum())


def seq_prob(policy, trajectory):
    """
    Per-step geometric-mean probability exp(log pi(tau) / T).
    """
    return float(np.exp(log_prob(policy, trajectory) / len(trajectory.actions)))


def visit_counts(trajectory, num_states, num_actions):
    states, actions = _trajectory_arrays(trajectory)
    if states.size and (states.max() >= num_states or actions.max() >= num_actions):
        raise ConfigurationError(f'trajectory visits state/action outside the policy shape ({num_states}, {num_actions})')
    counts = np.zeros((num_states, num_actions))
    np.add.at(counts, (states, actions), 1.0)
    return counts


def score_from_counts(counts, probs):
    """
    N(s, a) - N(s) pi(a|s) for visit counts N of shape (..., S, A).
    """
    return counts - counts.sum(axis=-1, keepdims=True) * probs


def log_prob_grad(policy, trajectory):
    """
    d log pi(tau) / d logits = N(s, a) - N(s) pi(a|s) for visit counts N.
    """
    return score_from_counts(visit_counts(trajectory, policy.num_states, policy.num_actions), policy.probs())
