"""
Inner-loop preference optimization of a tabular policy.

The engine differentiates the objective with respect to the trajectory
log-probabilities of each minibatch row; the chain rule to the logits uses
d log pi(tau) / d logits = N(s, a) - N(s) pi(a|s).
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from mdpo.errors import ConfigurationError, TrainingDivergedError
from mdpo.policies import TabularPolicy, score_from_counts, visit_counts
from mdpo.training.optim import Adam, clip_by_global_norm

logger = logging.getLogger(__name__)

RAW_PROB_MAX_HORIZON = 20
REPLAY_MAX_POINTS = 1000
INIT_MODES = ('scratch', 'reference')


@dataclass(frozen=True)
class TrainerHyper:
    epochs: int = 12
    minibatch: int = 2
    learning_rate: float = 1e-3
    max_grad_norm: float = 1.3
    lam: float = 0.5
    seed: int = 0
    raw_prob: bool = False

    def __post_init__(self):
        violations = []
        for name in ('epochs', 'minibatch'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                violations.append(f'{name} must be a positive integer, got {value!r}')
        for name in ('learning_rate', 'max_grad_norm'):
            if not getattr(self, name) > 0.0:
                violations.append(f'{name} must be positive, got {getattr(self, name)!r}')
        if not self.lam >= 0.0:
            violations.append(f'lambda must be non-negative, got {self.lam!r}')
        if violations:
            raise ConfigurationError(violations)


@dataclass
class TrainingTrace:
    """
    One record per row visit: trajectory log-probabilities before the update,
    the row loss and the progress t. ``grad_norms`` holds one post-clip norm
    per update.
    """
    log_p_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_p_l: np.ndarray = field(default_factory=lambda: np.zeros(0))
    loss: np.ndarray = field(default_factory=lambda: np.zeros(0))
    progress: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.log_p_w.size

    def subset(self, mask):
        return TrainingTrace(self.log_p_w[mask], self.log_p_l[mask], self.loss[mask], self.progress[mask],
                             self.grad_norms)

    def to_frame(self):
        import pandas as pd
        return pd.DataFrame({'step': np.arange(len(self)), 'log_p_w': self.log_p_w, 'log_p_l': self.log_p_l,
                             'loss': self.loss, 't': self.progress})


def initial_policy(num_states, num_actions, mode='scratch', seed=0, reference=None):
    if mode == 'scratch':
        return TabularPolicy.random(num_states, num_actions, np.random.default_rng(seed))
    if mode == 'reference':
        if reference is None:
            raise ConfigurationError('reference initialisation needs a reference policy')
        return reference.copy()
    raise ConfigurationError(f'unknown init mode {mode!r}; expected one of {INIT_MODES}')


def _row_counts(dataset, num_states, num_actions):
    chosen = np.zeros((len(dataset), num_states, num_actions))
    rejected = np.zeros((len(dataset), num_states, num_actions))
    for i, row in enumerate(dataset):
        try:
            chosen[i] = visit_counts(row.chosen, num_states, num_actions)
            rejected[i] = visit_counts(row.rejected, num_states, num_actions)
        except ConfigurationError as exc:
            raise ConfigurationError(f'row {i}: {exc}') from None
    return chosen, rejected


def _epoch_order(rng, rows, minibatch):
    order = rng.permutation(rows)
    short = -rows % minibatch
    if short:
        order = np.concatenate([order, np.resize(order, short)])
    return order.reshape(-1, minibatch)


def train(dataset, objective, hyper=TrainerHyper(), init=None, ref=None):
    """
    Runs ``hyper.epochs`` epochs of shuffled minibatch Adam updates with
    global gradient-norm clipping. A minibatch that does not fill up is
    padded by wrapping around the epoch's permutation. Returns the trained
    policy and its trace.
    """
    if len(dataset) == 0:
        raise ConfigurationError('cannot train on an empty dataset')
    if init is None:
        raise ConfigurationError('train needs an initial policy')
    if objective.uses_reference and ref is None:
        raise ConfigurationError(f'{objective.kind.value} needs a reference policy')
    if not objective.uses_reference:
        objective = replace(objective, lam=hyper.lam)
    if hyper.raw_prob and dataset.horizon > RAW_PROB_MAX_HORIZON:
        raise ConfigurationError(
            f'raw trajectory probabilities need horizon <= {RAW_PROB_MAX_HORIZON}, got {dataset.horizon}')
    horizon = 1 if hyper.raw_prob else dataset.horizon

    policy = init.copy()
    chosen, rejected = _row_counts(dataset, *policy.shape)
    ref_w = ref_l = None
    if objective.uses_reference:
        ref.check_dimensions(*policy.shape)
        ref_log_probs = ref.log_probs()
        ref_w = (chosen * ref_log_probs).sum(axis=(1, 2))
        ref_l = (rejected * ref_log_probs).sum(axis=(1, 2))

    rng = np.random.default_rng(hyper.seed)
    optimizer = Adam(policy.shape, hyper.learning_rate)
    records = {'log_p_w': [], 'log_p_l': [], 'loss': [], 'progress': []}
    grad_norms = []
    step = 0
    for epoch in range(hyper.epochs):
        progress = epoch / hyper.epochs
        epoch_losses = []
        for batch in _epoch_order(rng, len(dataset), hyper.minibatch):
            log_probs = policy.log_probs()
            log_pw = (chosen[batch] * log_probs).sum(axis=(1, 2))
            log_pl = (rejected[batch] * log_probs).sum(axis=(1, 2))
            losses, grad_w, grad_l = objective.losses_and_gradients(
                log_pw, log_pl, None if ref_w is None else ref_w[batch], None if ref_l is None else ref_l[batch],
                progress=progress, horizon=horizon)
            if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_l))):
                raise TrainingDivergedError(step, {'rows': batch.tolist(), 'log_p_w': log_pw.tolist(),
                                                   'log_p_l': log_pl.tolist(), 'loss': losses.tolist(),
                                                   'progress': progress})
            probs = policy.probs()
            score_w = score_from_counts(chosen[batch], probs)
            score_l = score_from_counts(rejected[batch], probs)
            grad = (grad_w[:, None, None] * score_w + grad_l[:, None, None] * score_l).mean(axis=0)
            grad, norm = clip_by_global_norm(grad, hyper.max_grad_norm)
            policy.logits = policy.logits + optimizer.step(grad)

            records['log_p_w'].append(log_pw)
            records['log_p_l'].append(log_pl)
            records['loss'].append(losses)
            records['progress'].append(np.full(len(batch), progress))
            grad_norms.append(norm)
            epoch_losses.append(losses.mean())
            step += 1
        logger.debug('epoch %d/%d  t=%.3f  mean loss %.6f', epoch + 1, hyper.epochs, progress, np.mean(epoch_losses))

    trace = TrainingTrace(**{k: np.concatenate(v) for k, v in records.items()}, grad_norms=np.array(grad_norms))
    return policy, trace


def replay_indices(n, max_points=REPLAY_MAX_POINTS):
    if n <= max_points:
        return np.arange(n)
    return (np.arange(max_points) * n) // max_points


def replay_trace(trace, max_points=REPLAY_MAX_POINTS):
    """
    Points (log p_w, log p_l, t) of a trace, thinned uniformly to at most
    ``max_points`` in their original order.
    """
    if len(trace) == 0:
        raise ConfigurationError('cannot replay an empty training trace')
    idx = replay_indices(len(trace), max_points)
    return [(float(trace.log_p_w[i]), float(trace.log_p_l[i]), float(trace.progress[i])) for i in idx]


def split_trace_by_progress(trace, parts=3):
    """
    Splits a trace into ``parts`` consecutive progress ranges of [0, 1).
    """
    if parts <= 0:
        raise ConfigurationError(f'parts must be positive, got {parts!r}')
    bins = np.minimum(np.floor(trace.progress * parts).astype(int), parts - 1)
    return [trace.subset(bins == k) for k in range(parts)]
