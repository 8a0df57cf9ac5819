"""
Preference-optimization losses: DPO, ORPO and their mirror-map generalizations.

Every loss is expressed per row in terms of sequence probabilities x in (0, 1)
and averaged over a minibatch by the caller. The generalized forms are

    gen_orpo:  -[psi(x_w) + lam * log sigmoid(phi^-1(x_w) - phi^-1(x_l))]
    gen_dpo:   -log sigmoid(beta * (phi^-1(x_w) - phi^-1(ref_w) - phi^-1(x_l) + phi^-1(ref_l)))

psi and phi^-1 are carried as OmegaPotential objects and applied through their
``inverse``; psi = log is the inverse of the ``exp`` potential and the logit is
the inverse of ``log_odds``, so ORPO and DPO are the closed-form special cases.
"""
import enum
import logging
from dataclasses import dataclass

import numpy as np

from mdpo import autodiff as ad
from mdpo.errors import ConfigurationError
from mdpo.potentials import OmegaPotential, PotentialKind, PROB_EPS

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.1
DEFAULT_LAMBDA = 0.5


class ObjectiveKind(enum.Enum):
    DPO = 'dpo'
    ORPO = 'orpo'
    GEN_DPO = 'gen_dpo'
    GEN_ORPO = 'gen_orpo'


@dataclass(frozen=True)
class RowLossInput:
    p_w: float
    p_l: float
    ref_p_w: float = None
    ref_p_l: float = None
    progress: float = 0.0

    def __post_init__(self):
        for name in ('p_w', 'p_l', 'ref_p_w', 'ref_p_l'):
            value = getattr(self, name)
            if value is not None and not 0.0 < value < 1.0:
                raise ConfigurationError(f'{name} must lie in (0, 1), got {value!r}')
        if not 0.0 <= self.progress <= 1.0:
            raise ConfigurationError(f'progress must lie in [0, 1], got {self.progress!r}')

    @property
    def has_reference(self):
        return self.ref_p_w is not None and self.ref_p_l is not None


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: ObjectiveKind
    beta: float = DEFAULT_BETA
    lam: float = DEFAULT_LAMBDA
    psi: OmegaPotential = None
    phi_inverse: OmegaPotential = None
    temporal: bool = False
    source: str = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', ObjectiveKind(self.kind))
        violations = []
        if self.uses_reference and not self.beta > 0.0:
            violations.append(f'beta must be positive for {self.kind.value}, got {self.beta!r}')
        if not self.uses_reference and not self.lam >= 0.0:
            violations.append(f'lambda must be non-negative for {self.kind.value}, got {self.lam!r}')
        if self.kind is ObjectiveKind.GEN_ORPO and (self.psi is None or self.phi_inverse is None):
            violations.append('gen_orpo needs both psi and phi^-1')
        if self.kind is ObjectiveKind.GEN_DPO and self.phi_inverse is None:
            violations.append('gen_dpo needs phi^-1')
        if violations:
            raise ConfigurationError(violations)
        if self.kind is ObjectiveKind.ORPO:
            object.__setattr__(self, 'psi', OmegaPotential(PotentialKind.EXP))
            object.__setattr__(self, 'phi_inverse', OmegaPotential(PotentialKind.LOG_ODDS))
        elif self.kind is ObjectiveKind.DPO:
            object.__setattr__(self, 'phi_inverse', OmegaPotential(PotentialKind.EXP))

    @staticmethod
    def orpo(lam=DEFAULT_LAMBDA):
        return ObjectiveSpec(ObjectiveKind.ORPO, lam=lam)

    @staticmethod
    def dpo(beta=DEFAULT_BETA):
        return ObjectiveSpec(ObjectiveKind.DPO, beta=beta)

    @staticmethod
    def from_loss_net(zeta, kind=ObjectiveKind.GEN_ORPO, lam=DEFAULT_LAMBDA, beta=DEFAULT_BETA, source=None):
        """
        Generalized objective whose psi and phi^-1 are the networks of ``zeta``.
        """
        return ObjectiveSpec(kind, beta=beta, lam=lam, psi=OmegaPotential.learned(zeta.psi_network),
                             phi_inverse=OmegaPotential.learned(zeta.phi_inverse_network),
                             temporal=zeta.temporal, source=source)

    @property
    def uses_reference(self):
        return self.kind in (ObjectiveKind.DPO, ObjectiveKind.GEN_DPO)

    @property
    def identifier(self):
        if self.source is not None:
            return f'{self.kind.value}:{self.source}'
        return self.kind.value

    # -- loss graphs -----------------------------------------------------------------

    def row_graph(self, x_w, x_l, ref_w=None, ref_l=None, progress=0.0):
        """
        Per-row losses as an engine node of sequence probabilities ``x_w``,
        ``x_l`` (nodes with values in (0, 1)). References are plain arrays.
        """
        t = progress if self.temporal else 0.0
        if self.uses_reference:
            if ref_w is None or ref_l is None:
                raise ConfigurationError(f'{self.kind.value} needs reference probabilities')
            if self.kind is ObjectiveKind.DPO:
                margin = ad.log(x_w) - np.log(ref_w) - ad.log(x_l) + np.log(ref_l)
            else:
                inv = self.phi_inverse
                margin = (inv.inverse_node(x_w, t) - inv.inverse(ref_w, t)
                          - inv.inverse_node(x_l, t) + inv.inverse(ref_l, t))
            return -ad.log_sigmoid(self.beta * margin)
        preference = ad.log_sigmoid(self.phi_inverse.inverse_node(x_w, t) - self.phi_inverse.inverse_node(x_l, t))
        return -(self.psi.inverse_node(x_w, t) + self.lam * preference)

    def log_space_graph(self, log_pw, log_pl, ref_log_pw=None, ref_log_pl=None, progress=0.0, horizon=1):
        """
        Per-row losses as a node of trajectory log-probabilities. The sequence
        probability fed to the loss is exp(log p / horizon), clipped into
        [1e-12, 1 - 1e-12].
        """
        x_w = ad.clip(ad.exp(log_pw / float(horizon)), PROB_EPS, 1.0 - PROB_EPS)
        x_l = ad.clip(ad.exp(log_pl / float(horizon)), PROB_EPS, 1.0 - PROB_EPS)
        ref_w = ref_l = None
        if self.uses_reference:
            if ref_log_pw is None or ref_log_pl is None:
                raise ConfigurationError(f'{self.kind.value} needs a reference policy')
            ref_w = _to_seq_prob(ref_log_pw, horizon)
            ref_l = _to_seq_prob(ref_log_pl, horizon)
        return self.row_graph(x_w, x_l, ref_w, ref_l, progress)

    def losses_and_gradients(self, log_pw, log_pl, ref_log_pw=None, ref_log_pl=None, progress=0.0, horizon=1):
        """
        (per-row losses, dL_i/dlog p_w, dL_i/dlog p_l) for arrays of rows.
        """
        leaf_w = ad.DiffScalar(np.asarray(log_pw, dtype=float))
        leaf_l = ad.DiffScalar(np.asarray(log_pl, dtype=float))
        losses = self.log_space_graph(leaf_w, leaf_l, ref_log_pw, ref_log_pl, progress, horizon)
        losses.backward()
        return losses.value, leaf_w.adjoint, leaf_l.adjoint


def _to_seq_prob(log_p, horizon):
    return np.clip(np.exp(np.asarray(log_p, dtype=float) / float(horizon)), PROB_EPS, 1.0 - PROB_EPS)


def _row_loss(spec, inp):
    if spec.uses_reference and not inp.has_reference:
        raise ConfigurationError(f'{spec.kind.value} needs reference probabilities')
    node = spec.row_graph(ad.lift(inp.p_w), ad.lift(inp.p_l), inp.ref_p_w, inp.ref_p_l, inp.progress)
    return float(node.value)


def orpo_loss(inp, lam=DEFAULT_LAMBDA):
    return _row_loss(ObjectiveSpec.orpo(lam), inp)


def dpo_loss(inp, beta=DEFAULT_BETA):
    return _row_loss(ObjectiveSpec.dpo(beta), inp)


def generalized_orpo_loss(psi, phi_inverse, inp, lam=DEFAULT_LAMBDA, temporal=False):
    spec = ObjectiveSpec(ObjectiveKind.GEN_ORPO, lam=lam, psi=psi, phi_inverse=phi_inverse, temporal=temporal)
    return _row_loss(spec, inp)


def generalized_dpo_loss(phi_inverse, inp, beta=DEFAULT_BETA, temporal=False):
    spec = ObjectiveSpec(ObjectiveKind.GEN_DPO, beta=beta, phi_inverse=phi_inverse, temporal=temporal)
    return _row_loss(spec, inp)


def parse_objective(text, lam=DEFAULT_LAMBDA, beta=DEFAULT_BETA, temporal=None):
    """
    "orpo" | "dpo" | "gen_orpo:<target>" | "gen_dpo:<target>", where the target
    is a loss-net checkpoint path or a closed-form potential name. A closed-form
    gen_orpo keeps psi = log.
    """
    name, _, target = text.partition(':')
    try:
        kind = ObjectiveKind(name)
    except ValueError:
        raise ConfigurationError(f'unknown objective {text!r}') from None
    if kind in (ObjectiveKind.ORPO, ObjectiveKind.DPO):
        if target:
            raise ConfigurationError(f'{name} takes no argument, got {text!r}')
        return ObjectiveSpec(kind, beta=beta, lam=lam)
    if not target:
        raise ConfigurationError(f'{name} needs a loss-net checkpoint path or potential name')
    if target in {k.value for k in PotentialKind} - {PotentialKind.LEARNED.value}:
        return ObjectiveSpec(kind, beta=beta, lam=lam, psi=OmegaPotential(PotentialKind.EXP),
                             phi_inverse=OmegaPotential(target), temporal=bool(temporal), source=target)
    from mdpo.lossnet import load_params
    zeta = load_params(target)
    if temporal is not None and bool(temporal) != zeta.temporal:
        raise ConfigurationError(f'objective temporal={temporal} but checkpoint {target!r} has temporal={zeta.temporal}')
    logger.info('loaded %s loss networks from %s (temporal=%s)', kind.value, target, zeta.temporal)
    return ObjectiveSpec.from_loss_net(zeta, kind, lam=lam, beta=beta, source=target)
