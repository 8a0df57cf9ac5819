"""
Independent training runs over seeds, serial or on a process pool.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
import pandas as pd

from mdpo.envs import policy_value
from mdpo.errors import ConfigurationError
from mdpo.seeding import derive_rng, derive_seed
from mdpo.training.trainer import TrainerHyper, initial_policy, train

logger = logging.getLogger(__name__)

WORKERS_ENV = 'MDPO_WORKERS'


@dataclass
class SeedOutcome:
    seed: int
    value: float
    stderr: float
    final_loss: float
    policy: object
    trace: object


def resolve_workers(workers=None):
    """
    Worker count from the argument, else $MDPO_WORKERS, else 1.
    """
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, '1')
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigurationError(f'{WORKERS_ENV} must be an integer, got {raw!r}') from None
    if workers < 1:
        raise ConfigurationError(f'worker count must be at least 1, got {workers}')
    return workers


def train_and_evaluate(env, dataset, objective, hyper=TrainerHyper(), seed=0, init='scratch', reference=None,
                       evaluation='exact', episodes=512):
    """
    One training run from a seed-derived initial policy, evaluated on ``env``.
    DPO kinds regularize towards a frozen copy of the initial policy.
    """
    start = initial_policy(env.num_states, env.num_actions, init, derive_seed(seed, 'policy-init'), reference)
    ref = start.copy() if objective.uses_reference else None
    policy, trace = train(dataset, objective, replace(hyper, seed=derive_seed(seed, 'trainer')), start, ref)
    value, stderr = policy_value(env, policy, evaluation, episodes, derive_rng(seed, 'evaluation'))
    return SeedOutcome(seed, value, stderr, float(trace.loss[-hyper.minibatch:].mean()), policy, trace)


def run_seeds(env, dataset, objective, hyper=TrainerHyper(), seeds=(0,), init='scratch', reference=None,
              evaluation='exact', episodes=512, workers=None):
    """
    Trains one policy per seed. Returns the per-seed frame (seed, value,
    stderr, final_loss) and the outcomes in seed order.
    """
    task = partial(train_and_evaluate, env, dataset, objective, hyper, init=init, reference=reference,
                   evaluation=evaluation, episodes=episodes)
    workers = resolve_workers(workers)
    if workers == 1:
        outcomes = [task(seed=s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_call_with_seed, [task] * len(seeds), seeds))
    for o in outcomes:
        logger.info('seed %d: value %.4f (stderr %.4f), final loss %.5f', o.seed, o.value, o.stderr, o.final_loss)
    frame = pd.DataFrame({'seed': [o.seed for o in outcomes], 'value': [o.value for o in outcomes],
                          'stderr': [o.stderr for o in outcomes], 'final_loss': [o.final_loss for o in outcomes]})
    return frame, outcomes


def _call_with_seed(task, seed):
    return task(seed=seed)


def summarize(values):
    """
    (mean, standard error of the mean) of per-seed values.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ConfigurationError('nothing to summarize')
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return float(values.mean()), stderr
