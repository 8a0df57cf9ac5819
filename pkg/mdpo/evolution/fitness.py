import logging
from dataclasses import dataclass

import numpy as np

from mdpo.evolution.openai_es import FitnessFunction
from mdpo.objectives import DEFAULT_BETA, ObjectiveKind, ObjectiveSpec
from mdpo.seeding import derive_seed
from mdpo.training import TrainerHyper, summarize, train_and_evaluate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitnessSpec:
    """
    What one fitness evaluation does: K inner training runs on ``dataset``,
    each scored by the trained policy's value on ``env``.
    """
    env: object
    dataset: object
    hyper: TrainerHyper = TrainerHyper()
    kind: ObjectiveKind = ObjectiveKind.GEN_ORPO
    beta: float = DEFAULT_BETA
    inner_seeds: int = 3
    evaluation: str = 'exact'
    episodes: int = 512
    init: str = 'scratch'
    reference: object = None


class LossNetFitness(FitnessFunction):
    """
    Mean value of policies trained with the generalized objective built from
    a candidate's loss networks.
    """

    def __init__(self, spec):
        self.spec = spec

    def __call__(self, zeta, seed):
        objective = ObjectiveSpec.from_loss_net(zeta, self.spec.kind, lam=self.spec.hyper.lam, beta=self.spec.beta)
        return self.evaluate(objective, seed)[0]

    def evaluate(self, objective, seed):
        """
        (mean, stderr) over the inner seeds for any objective.
        """
        s = self.spec
        values = [train_and_evaluate(s.env, s.dataset, objective, s.hyper, derive_seed(seed, 'inner', k), s.init,
                                     s.reference, s.evaluation, s.episodes).value
                  for k in range(s.inner_seeds)]
        return summarize(values)

    def baseline(self, seeds, objective=None):
        """
        Fitness of a closed-form objective (ORPO by default) over ``seeds``:
        (mean, stderr) of the per-seed fitness values.
        """
        objective = objective or ObjectiveSpec.orpo(self.spec.hyper.lam)
        values = np.array([self.evaluate(objective, s)[0] for s in seeds])
        logger.info('baseline %s fitness %.4f over %d seeds', objective.identifier, values.mean(), len(values))
        return summarize(values)
