"""
Omega-potentials, the mirror maps they generate and their Bregman divergences.
"""
import enum
import logging
import warnings

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit, logit, rel_entr, xlogy

from mdpo import autodiff as ad
from mdpo.errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12
QUAD_TOL = 1e-8


class PotentialKind(enum.Enum):
    NEG_ENTROPY = 'neg_entropy'
    EUCLIDEAN = 'euclidean'
    LOG_ODDS = 'log_odds'
    EXP = 'exp'
    LEARNED = 'learned'


class SimplexPoint:
    """
    A point of the probability simplex, e.g. a policy row pi(.|s).
    """

    def __init__(self, probs, atol=1e-12):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError('a simplex point is a non-empty vector')
        if np.any(probs < 0.0):
            raise DomainError(f'negative probability in {probs}')
        if abs(probs.sum() - 1.0) > atol:
            raise DomainError(f'probabilities sum to {probs.sum()!r}, not 1')
        probs.setflags(write=False)
        self._probs = probs

    @property
    def probs(self):
        return self._probs

    def __len__(self):
        return self._probs.size

    def __eq__(self, other):
        return isinstance(other, SimplexPoint) and np.array_equal(self._probs, other._probs)

    def __hash__(self):
        return hash(self._probs.tobytes())

    def __repr__(self):
        return f'SimplexPoint({self._probs.tolist()})'


class OmegaPotential:
    """
    An increasing map phi with inverse phi^-1. Closed-form kinds are

        neg_entropy  phi(x) = e^(x-1)        phi^-1(x) = log x + 1
        exp          phi(x) = e^x            phi^-1(x) = log x
        euclidean    phi(x) = 2x             phi^-1(x) = x / 2
        log_odds     phi(x) = sigmoid(x)     phi^-1(x) = log x - log(1 - x)

    and the learned kind wraps a monotone loss network standing in for phi^-1
    on (0, 1). ``omega`` is the lower limit of phi, ``domain_upper`` (u) the
    upper end of its domain.
    """

    def __init__(self, kind, network=None, strict=False):
        self.kind = PotentialKind(kind)
        if self.kind is PotentialKind.LEARNED and network is None:
            raise DomainError('a learned potential needs a loss network')
        self.network = network
        self.strict = strict

    @staticmethod
    def from_name(name, strict=False):
        """
        Accepts "neg_entropy" | "euclidean" | "log_odds" | "exp" | "learned:<path>".
        """
        if name.startswith('learned:'):
            from mdpo.lossnet import load_network
            path, _, which = name[len('learned:'):].partition('#')
            return OmegaPotential(PotentialKind.LEARNED, load_network(path, which or 'phi_inverse'))
        try:
            return OmegaPotential(PotentialKind(name), strict=strict)
        except ValueError:
            raise DomainError(f'unknown potential {name!r}') from None

    @staticmethod
    def learned(network):
        return OmegaPotential(PotentialKind.LEARNED, network)

    @property
    def name(self):
        return self.kind.value

    @property
    def omega(self):
        if self.kind is PotentialKind.EUCLIDEAN:
            return -np.inf
        return 0.0

    @property
    def domain_upper(self):
        return np.inf

    def __repr__(self):
        return f'OmegaPotential({self.name})'

    # -- phi and its inverse ---------------------------------------------------

    def forward(self, y):
        """
        phi(y).
        """
        y = np.asarray(y, dtype=float)
        if self.kind is PotentialKind.NEG_ENTROPY:
            return np.exp(y - 1.0)
        if self.kind is PotentialKind.EXP:
            return np.exp(y)
        if self.kind is PotentialKind.EUCLIDEAN:
            return 2.0 * y
        if self.kind is PotentialKind.LOG_ODDS:
            return expit(y)
        return np.vectorize(self._learned_forward, otypes=[float])(y)

    def _learned_forward(self, y):
        def gap(x):
            return self.network(x) - y

        lo, hi = PROB_EPS, 1.0 - PROB_EPS
        if gap(lo) > 0.0 or gap(hi) < 0.0:
            raise DomainError(f'{y!r} is outside the range of the learned inverse')
        return optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in (PotentialKind.LOG_ODDS, PotentialKind.LEARNED):
            if self.strict and np.any((x <= 0.0) | (x >= 1.0)):
                raise DomainError(f'{self.name} inverse is defined on (0, 1), got {x}')
            if np.any((x < 0.0) | (x > 1.0)) or np.any(np.isnan(x)):
                raise DomainError(f'{self.name} inverse is defined on (0, 1), got {x}')
            return np.clip(x, PROB_EPS, 1.0 - PROB_EPS)
        if self.kind is not PotentialKind.EUCLIDEAN and (np.any(x <= self.omega) or np.any(np.isnan(x))):
            raise DomainError(f'{self.name} inverse needs x > {self.omega}, got {x}')
        return x

    def inverse(self, x, progress=0.0):
        """
        phi^-1(x). ``progress`` only matters for temporally-aware learned kinds.
        """
        x = self._check_domain(x)
        if self.kind is PotentialKind.NEG_ENTROPY:
            return np.log(x) + 1.0
        if self.kind is PotentialKind.EXP:
            return np.log(x)
        if self.kind is PotentialKind.EUCLIDEAN:
            return 0.5 * x
        if self.kind is PotentialKind.LOG_ODDS:
            return logit(x)
        return self.network(x, progress)

    def inverse_node(self, x, progress=0.0):
        """
        phi^-1 applied to a differentiation node; inputs are already in (0, 1).
        """
        if self.kind is PotentialKind.NEG_ENTROPY:
            return ad.log(x) + 1.0
        if self.kind is PotentialKind.EXP:
            return ad.log(x)
        if self.kind is PotentialKind.EUCLIDEAN:
            return 0.5 * x
        if self.kind is PotentialKind.LOG_ODDS:
            return ad.log(x) - ad.log(1.0 - x)
        return self.network.node(x, progress)

    # -- mirror map --------------------------------------------------------------

    def integral(self, x):
        """
        Antiderivative of phi^-1 taken from 1, i.e. int_1^x phi^-1.
        """
        x = np.asarray(x, dtype=float)
        if self.kind is PotentialKind.NEG_ENTROPY:
            return xlogy(x, x)
        if self.kind is PotentialKind.EXP:
            return xlogy(x, x) - x + 1.0
        if self.kind is PotentialKind.EUCLIDEAN:
            return 0.25 * (x * x - 1.0)
        if self.kind is PotentialKind.LOG_ODDS:
            return xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)
        return np.vectorize(self._learned_integral, otypes=[float])(x)

    def _learned_integral(self, x):
        upper = 1.0 - PROB_EPS
        lower = max(float(x), PROB_EPS)
        with warnings.catch_warnings():
            warnings.simplefilter('error', integrate.IntegrationWarning)
            try:
                value, residual = integrate.quad(lambda u: float(self.network(u)), upper, lower,
                                                 epsabs=QUAD_TOL, epsrel=0.0, limit=200)
            except integrate.IntegrationWarning as exc:
                raise NumericalError(f'quadrature did not converge on [{x}, 1]: {exc}') from None
        if residual > QUAD_TOL:
            raise NumericalError(f'quadrature residual {residual:.3e} above {QUAD_TOL:.0e}', residual)
        return value

    def mirror_gradient(self, y):
        """
        Coordinate-wise gradient of the mirror map at y.
        """
        if self.kind is PotentialKind.EUCLIDEAN:
            return 2.0 * np.asarray(y, dtype=float)
        return self.inverse(y)


def potential_inverse(p, x):
    """
    phi^-1(x), raising DomainError outside the image of phi.
    """
    value = p.inverse(x)
    return float(value) if np.ndim(value) == 0 else value


def mirror_map_value(p, dist):
    """
    h_phi(dist) = sum_a int_1^dist(a) phi^-1. The Euclidean kind reports the
    l2 closed form sum_a dist(a)^2.
    """
    probs = _as_probs(dist)
    if p.kind is PotentialKind.EUCLIDEAN:
        return float(np.sum(probs * probs))
    return float(np.sum(p.integral(probs)))


def bregman(p, x, y):
    """
    D_h(x, y) = h(x) - h(y) - <grad h(y), x - y>. y must be strictly positive
    except for the Euclidean kind, whose gradient is finite on the boundary.
    """
    x, y = _as_probs(x), _as_probs(y)
    if x.shape != y.shape:
        raise DomainError(f'simplex points of different sizes {x.size} and {y.size}')
    if p.kind is not PotentialKind.EUCLIDEAN and np.any(y <= 0.0):
        raise DomainError(f'{p.name} Bregman divergence needs y > 0 entrywise, got {y}')
    if p.kind is PotentialKind.NEG_ENTROPY:
        return float(np.sum(rel_entr(x, y)))
    if p.kind is PotentialKind.EUCLIDEAN:
        diff = x - y
        return float(np.sum(diff * diff))
    return mirror_map_value(p, x) - mirror_map_value(p, y) - float(np.dot(p.mirror_gradient(y), x - y))


def _as_probs(dist):
    if isinstance(dist, SimplexPoint):
        return dist.probs
    return SimplexPoint(dist).probs
