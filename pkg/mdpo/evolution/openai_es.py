"""
OpenAI-ES over loss-network parameters.

Each generation draws P/2 antithetic perturbation pairs, evaluates the
projected candidates mean +/- sigma * eps, and estimates the fitness gradient
as the mean over pairs of eps / (2 sigma) * (F+ - F-), using the raw eps. The
mean is moved by Adam in the ascent direction and sigma decays geometrically.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from mdpo.errors import ConfigurationError, MdpoError
from mdpo.lossnet import LossNetParams, project_params
from mdpo.seeding import derive_seed, seed_sequence
from mdpo.training import Adam, resolve_workers

logger = logging.getLogger(__name__)

SHAPINGS = ('standardize', 'raw')
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class EsConfig:
    population: int = 256
    generations: int = 128
    sigma_init: float = 0.03
    sigma_decay: float = 0.999
    learning_rate: float = 0.02
    seed: int = 0
    shaping: str = 'standardize'
    fitness_spec: object = None

    def __post_init__(self):
        violations = []
        if not isinstance(self.population, (int, np.integer)) or self.population < 2 or self.population % 2:
            violations.append(f'population must be an even integer >= 2, got {self.population!r}')
        if not isinstance(self.generations, (int, np.integer)) or self.generations < 0:
            violations.append(f'generations must be a non-negative integer, got {self.generations!r}')
        if not self.sigma_init > 0.0:
            violations.append(f'sigma_init must be positive, got {self.sigma_init!r}')
        if not 0.0 < self.sigma_decay <= 1.0:
            violations.append(f'sigma_decay must lie in (0, 1], got {self.sigma_decay!r}')
        if not self.learning_rate > 0.0:
            violations.append(f'learning_rate must be positive, got {self.learning_rate!r}')
        if self.shaping not in SHAPINGS:
            violations.append(f'shaping must be one of {SHAPINGS}, got {self.shaping!r}')
        if violations:
            raise ConfigurationError(violations)

    @property
    def pairs(self):
        return self.population // 2

    def sigma_at(self, generation):
        return self.sigma_init * self.sigma_decay ** generation


@dataclass
class EsState:
    mean: np.ndarray
    sigma: float
    optimizer: Adam
    generation: int = 0
    history: list = field(default_factory=list)
    best_params: object = None
    best_fitness: float = -np.inf

    def history_frame(self):
        columns = ['generation', 'sigma', 'best_fitness', 'mean_fitness', 'failures', 'grad_norm']
        return pd.DataFrame(self.history, columns=columns)


class FitnessFunction:
    """
    Base for fitness functions that consume a per-evaluation seed. Plain
    callables are called with the candidate only.
    """

    def __call__(self, params, seed):
        raise NotImplementedError


def standardize(fitness, floor=STD_FLOOR):
    fitness = np.asarray(fitness, dtype=float)
    return (fitness - fitness.mean()) / max(float(fitness.std()), floor)


def antithetic_noise(dim, pairs, seed, generation):
    rng = np.random.default_rng(seed_sequence(seed, 'es-noise', generation))
    return rng.standard_normal((pairs, dim))


def _pair_differences(f_plus, f_minus, shaping):
    f_plus = np.asarray(f_plus, dtype=float)
    f_minus = np.asarray(f_minus, dtype=float)
    ok = np.isfinite(f_plus) & np.isfinite(f_minus)
    diff = np.zeros(f_plus.size)
    if ok.any():
        plus, minus = f_plus[ok], f_minus[ok]
        if shaping is not None:
            shaped = shaping(np.concatenate([plus, minus]))
            plus, minus = shaped[:plus.size], shaped[plus.size:]
        diff[ok] = plus - minus
    return diff, int((~ok).sum())


def _estimate(noise, f_plus, f_minus, sigma, shaping):
    diff, failures = _pair_differences(f_plus, f_minus, shaping)
    return (noise * diff[:, None]).mean(axis=0) / (2.0 * sigma), failures


def es_gradient_estimate(zeta, fitness, sigma, population, rng=None, noise=None, shaping=None):
    """
    Antithetic estimate of the fitness gradient at ``zeta`` (a flat vector).
    ``noise`` (pairs x dim) overrides sampling from ``rng``; ``shaping``
    transforms the joint fitness vector before differencing. Pairs with a
    non-finite fitness contribute zero.
    """
    if population % 2 or population < 2:
        raise ConfigurationError(f'population must be even, got {population}')
    if not sigma > 0.0:
        raise ConfigurationError(f'sigma must be positive, got {sigma}')
    zeta = np.asarray(zeta, dtype=float)
    if noise is None:
        if rng is None:
            raise ConfigurationError('es_gradient_estimate needs an rng or explicit noise')
        noise = rng.standard_normal((population // 2, zeta.size))
    f_plus = np.array([fitness(zeta + sigma * e) for e in noise], dtype=float)
    f_minus = np.array([fitness(zeta - sigma * e) for e in noise], dtype=float)
    grad, failures = _estimate(noise, f_plus, f_minus, sigma, shaping)
    if failures:
        logger.warning('%d of %d pairs had a non-finite fitness', failures, len(noise))
    return grad


def _safe_fitness(fitness, candidate, seed):
    try:
        if isinstance(fitness, FitnessFunction):
            return float(fitness(candidate, seed)), None
        return float(fitness(candidate)), None
    except (MdpoError, ArithmeticError, ValueError) as exc:
        return np.nan, f'{type(exc).__name__}: {exc}'


def _evaluate(fitness, candidates, seeds, pool):
    if pool is None:
        results = [_safe_fitness(fitness, c, s) for c, s in zip(candidates, seeds)]
    else:
        results = list(pool.map(_safe_fitness, [fitness] * len(candidates), candidates, seeds))
    for (value, error), seed in zip(results, seeds):
        if error is not None:
            logger.warning('candidate with seed %d failed: %s', seed, error)
        elif not np.isfinite(value):
            logger.warning('candidate with seed %d has non-finite fitness %r', seed, value)
    return np.array([value for value, _ in results])


def evolve(cfg, zeta0, fitness=None, project=None, workers=None):
    """
    Runs ``cfg.generations`` generations from ``zeta0`` (LossNetParams or a
    flat vector) and returns (best candidate, EsState). Loss-net candidates
    are projected onto the feasible set before evaluation. With no fitness
    given, ``cfg.fitness_spec`` builds a LossNetFitness.
    """
    if isinstance(zeta0, LossNetParams):
        temporal = zeta0.temporal
        mean = zeta0.flatten()

        def to_candidate(vector):
            return project_params(LossNetParams.unflatten(vector, temporal))
    else:
        mean = np.array(zeta0, dtype=float)

        def to_candidate(vector):
            return vector if project is None else project(vector)
    if fitness is None:
        if cfg.fitness_spec is None:
            raise ConfigurationError('evolve needs a fitness function or a fitness spec')
        from mdpo.evolution.fitness import LossNetFitness
        fitness = LossNetFitness(cfg.fitness_spec)
    shaping = standardize if cfg.shaping == 'standardize' else None

    state = EsState(mean=mean, sigma=cfg.sigma_init, optimizer=Adam(mean.shape, cfg.learning_rate))
    if cfg.generations == 0:
        state.best_params = zeta0
        return zeta0, state

    workers = resolve_workers(workers)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for g in range(cfg.generations):
            sigma = cfg.sigma_at(g)
            noise = antithetic_noise(mean.size, cfg.pairs, cfg.seed, g)
            candidates = [to_candidate(state.mean + sigma * e) for e in noise] + \
                         [to_candidate(state.mean - sigma * e) for e in noise]
            pair_seeds = [derive_seed(cfg.seed, 'es-inner', g, i) for i in range(cfg.pairs)]
            values = _evaluate(fitness, candidates, pair_seeds * 2, pool)
            f_plus, f_minus = values[:cfg.pairs], values[cfg.pairs:]

            grad, failures = _estimate(noise, f_plus, f_minus, sigma, shaping)
            state.mean = state.mean + state.optimizer.step(-grad)

            finite = np.isfinite(values)
            best_fitness = float(values[finite].max()) if finite.any() else np.nan
            mean_fitness = float(values[finite].mean()) if finite.any() else np.nan
            if finite.any() and best_fitness > state.best_fitness:
                state.best_fitness = best_fitness
                state.best_params = candidates[int(np.flatnonzero(finite)[values[finite].argmax()])]
            state.generation = g + 1
            state.sigma = cfg.sigma_at(g + 1)
            state.history.append((g, sigma, best_fitness, mean_fitness, failures, float(np.linalg.norm(grad))))
            logger.info('generation %d: sigma %.5f  best %.5f  mean %.5f  failures %d',
                        g, sigma, best_fitness, mean_fitness, failures)
    finally:
        if pool is not None:
            pool.shutdown()

    best = state.best_params if state.best_params is not None else to_candidate(state.mean)
    return best, state


def final_mean(state, zeta0):
    """
    The current search mean as a feasible candidate of the same type as ``zeta0``.
    """
    if isinstance(zeta0, LossNetParams):
        return project_params(LossNetParams.unflatten(state.mean, zeta0.temporal))
    return state.mean.copy()
