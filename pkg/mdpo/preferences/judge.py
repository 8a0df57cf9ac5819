import math
from dataclasses import dataclass

from scipy.special import expit, logit

from mdpo.errors import ConfigurationError


@dataclass(frozen=True)
class JudgeConfig:
    """
    Bradley-Terry judge: a is preferred to b with probability
    sigmoid((r_a - r_b) / eta).
    """
    eta: float

    def __post_init__(self):
        if not self.eta > 0.0 or math.isnan(self.eta):
            raise ConfigurationError(f'judge temperature must be positive, got {self.eta}')

    @staticmethod
    def from_accuracy(accuracy, gap):
        """
        Temperature at which trajectories ``gap`` apart are ranked correctly with
        probability ``accuracy``.
        """
        if not 0.5 < accuracy < 1.0:
            raise ConfigurationError(f'judge accuracy must lie in (0.5, 1), got {accuracy}')
        if not gap > 0.0:
            raise ConfigurationError(f'reference reward gap must be positive, got {gap}')
        return JudgeConfig(gap / float(logit(accuracy)))

    @staticmethod
    def parse(text):
        """
        "q@gap" (e.g. "0.95@2.8") or a bare temperature.
        """
        try:
            if '@' in text:
                accuracy, gap = text.split('@', 1)
                return JudgeConfig.from_accuracy(float(accuracy), float(gap))
            return JudgeConfig(float(text))
        except ValueError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f'cannot parse judge spec {text!r}') from None

    def preference_probability(self, r_a, r_b):
        return float(expit((r_a - r_b) / self.eta))


def judge_prefers(judge, r_a, r_b, rng):
    """
    True when a is preferred over b.
    """
    return bool(rng.random() < judge.preference_probability(r_a, r_b))
