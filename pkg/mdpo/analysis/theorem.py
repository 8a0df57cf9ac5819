"""
Numerical check that the Bregman-regularized optimum over trajectory
distributions satisfies r(tau) - beta * [phi^-1(q(tau)) - phi^-1(p(tau))] = c(s0)
on its support.

For each start state the objective

    J(q) = sum_tau q(tau) r(tau) - beta * D(q, p)

is maximized over the simplex by projected gradient ascent, where p is the
reference trajectory distribution and D the Bregman divergence of the mirror
map whose gradient is phi^-1. The step size is backtracked until it is below
the inverse of the local Lipschitz constant of the gradient.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from mdpo.envs import enumerate_trajectories
from mdpo.errors import ConfigurationError, DomainError, SolverError

logger = logging.getLogger(__name__)

MAX_TRAJECTORIES = 4096
GRADIENT_TOL = 1e-10
SUPPORT_EPS = 1e-9
MAX_ITERATIONS = 200000


@dataclass
class MirrorSolution:
    start_state: int
    rewards: np.ndarray
    reference: np.ndarray
    distribution: np.ndarray
    residuals: np.ndarray
    iterations: int
    gradient_norm: float

    @property
    def support(self):
        return self.distribution > SUPPORT_EPS

    @property
    def spread(self):
        r = self.residuals[self.support]
        return float(r.max() - r.min())

    @property
    def constant(self):
        return float(self.residuals[self.support].mean())


def project_simplex(v):
    """
    Euclidean projection onto the probability simplex (sort-based).
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0.0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _objective_gradient(potential, rewards, reference, beta, q):
    return rewards - beta * (potential.inverse(q) - potential.inverse(reference))


def _feasible(potential, q):
    return potential.omega < 0.0 or np.all(q > potential.omega)


def maximize_regularized(potential, rewards, reference, beta, tol=GRADIENT_TOL, max_iterations=MAX_ITERATIONS):
    """
    argmax_q sum q r - beta D(q, p) over the simplex, starting at q = p.
    Returns (q, iterations, final gradient-mapping norm).
    """
    q = np.array(reference, dtype=float)
    grad = _objective_gradient(potential, rewards, reference, beta, q)
    step = 1.0 / beta
    norm = np.inf
    for iteration in range(1, max_iterations + 1):
        step *= 2.0
        while True:
            candidate = project_simplex(q + step * grad)
            delta = candidate - q
            moved = float(np.linalg.norm(delta))
            if moved == 0.0:
                return q, iteration, 0.0
            if _feasible(potential, candidate):
                new_grad = _objective_gradient(potential, rewards, reference, beta, candidate)
                if step * np.linalg.norm(new_grad - grad) <= moved:
                    break
            step *= 0.5
            if step < 1e-300:
                raise SolverError('step size underflow in projected ascent', norm)
        norm = moved / step
        q, grad = candidate, new_grad
        if norm <= tol:
            return q, iteration, norm
    raise SolverError(f'projected ascent did not converge in {max_iterations} iterations', norm)


def quadratic_oracle(rewards, reference, beta):
    """
    Euclidean-potential optimum from a generic constrained solver (SLSQP) on
    the quadratic program min beta/4 |q - p|^2 - <r, q> over the simplex.
    """
    rewards = np.asarray(rewards, dtype=float)
    reference = np.asarray(reference, dtype=float)
    result = optimize.minimize(lambda q: 0.25 * beta * np.sum((q - reference) ** 2) - rewards @ q,
                               reference, jac=lambda q: 0.5 * beta * (q - reference) - rewards, method='SLSQP',
                               bounds=[(0.0, 1.0)] * reference.size,
                               constraints=[{'type': 'eq', 'fun': lambda q: q.sum() - 1.0,
                                             'jac': lambda q: np.ones_like(q)}],
                               options={'ftol': 1e-15, 'maxiter': 1000})
    if not result.success:
        raise SolverError(f'quadratic oracle failed: {result.message}', float(np.linalg.norm(result.jac)))
    return result.x


def trajectory_distribution(env, policy, s0):
    """
    Enumerated trajectories from ``s0`` with their rewards and probabilities.
    """
    if env.num_actions ** env.horizon > MAX_TRAJECTORIES:
        raise ConfigurationError(
            f'{env.num_actions}^{env.horizon} trajectories exceed the enumeration limit {MAX_TRAJECTORIES}')
    probs = policy.probs()
    trajectories = enumerate_trajectories(env, s0)
    rewards = np.array([tau.cumulative_reward for tau in trajectories])
    reference = np.array([np.prod(probs[list(tau.states), list(tau.actions)]) for tau in trajectories])
    return trajectories, rewards, reference


def mirror_solutions(env, potential, beta, reference_policy, tol=GRADIENT_TOL):
    if not beta > 0.0:
        raise ConfigurationError(f'beta must be positive, got {beta!r}')
    reference_policy.check_dimensions(env.num_states, env.num_actions)
    if np.any(reference_policy.probs() <= 0.0):
        raise DomainError('the reference policy must be strictly positive')
    solutions = []
    for s0 in range(env.num_states):
        _, rewards, reference = trajectory_distribution(env, reference_policy, s0)
        q, iterations, norm = maximize_regularized(potential, rewards, reference, beta, tol)
        residuals = rewards - beta * (potential.inverse(q) - potential.inverse(reference))
        solutions.append(MirrorSolution(s0, rewards, reference, q, residuals, iterations, norm))
        logger.debug('s0=%d: %d iterations, spread %.3e', s0, iterations, solutions[-1].spread)
    return solutions


def verify_mirror_solution(env, potential, beta, reference_policy, tol=GRADIENT_TOL):
    """
    Max over start states of the residual spread on the optimum's support.
    """
    solutions = mirror_solutions(env, potential, beta, reference_policy, tol)
    spread = max(s.spread for s in solutions)
    logger.info('%s potential, beta=%g: max residual spread %.3e', potential.name, beta, spread)
    return spread
