"""
Monotone one-layer loss networks for psi and phi^-1.

Each network has 126 hidden units split evenly over nine increasing activation
families. With w1 >= 0, v >= 0 and w2 >= -w1 the pre-activation
w1 * x + w2 * (x * t) + c is non-decreasing in x for every t in [0, 1], so the
output is too. The psi network adds a * log(x), the phi^-1 network adds
b * (log(x) - log(1 - x)), with a, b >= 0.
"""
import json
from dataclasses import dataclass, replace

import numpy as np

from mdpo import autodiff as ad
from mdpo.errors import ConfigurationError, DatasetFormatError

HIDDEN_UNITS = 126
ACTIVATIONS = ('identity', 'relu_square', 'cube', 'relu_sqrt', 'relu_cbrt', 'log_relu', 'exp', 'tanh', 'logit_clip')
UNITS_PER_FAMILY = HIDDEN_UNITS // len(ACTIVATIONS)
ACT_EPS = 1e-8
INIT_STD = 0.05

CHECKPOINT_FORMAT = 'mdpo-lossnet'
CHECKPOINT_VERSION = 1

_FAMILY_SLICES = [slice(k * UNITS_PER_FAMILY, (k + 1) * UNITS_PER_FAMILY) for k in range(len(ACTIVATIONS))]


def _activation(name, z):
    """
    (value, derivative) of one activation family, elementwise.
    """
    if name == 'identity':
        return z, np.ones_like(z)
    if name == 'relu_square':
        r = np.maximum(z, 0.0)
        return r * r, 2.0 * r
    if name == 'cube':
        return z ** 3, 3.0 * z * z
    if name in ('relu_sqrt', 'relu_cbrt'):
        p = 0.5 if name == 'relu_sqrt' else 1.0 / 3.0
        r = np.maximum(z, 0.0)
        return r ** p, np.where(z > 0.0, p * np.maximum(z, ACT_EPS) ** (p - 1.0), 0.0)
    if name == 'log_relu':
        m = np.maximum(z, ACT_EPS)
        return np.log(m), np.where(z > ACT_EPS, 1.0 / m, 0.0)
    if name == 'exp':
        e = np.exp(z)
        return e, e
    if name == 'tanh':
        th = np.tanh(z)
        return th, 1.0 - th * th
    if name == 'logit_clip':
        c = np.clip(z, ACT_EPS, 1.0 - ACT_EPS)
        inside = (z > ACT_EPS) & (z < 1.0 - ACT_EPS)
        return np.log(c) - np.log1p(-c), np.where(inside, 1.0 / (c * (1.0 - c)), 0.0)
    raise ValueError(f'unknown activation {name!r}')


def _activation_node(name, z):
    if name == 'identity':
        return z
    if name == 'relu_square':
        return ad.power(ad.relu(z), 2)
    if name == 'cube':
        return ad.power(z, 3)
    if name == 'relu_sqrt':
        return ad.power(ad.relu(z), 0.5)
    if name == 'relu_cbrt':
        return ad.power(ad.relu(z), 1.0 / 3.0)
    if name == 'log_relu':
        return ad.log(ad.clip(ad.relu(z), ACT_EPS, np.inf))
    if name == 'exp':
        return ad.exp(z)
    if name == 'tanh':
        return ad.tanh(z)
    c = ad.clip(z, ACT_EPS, 1.0 - ACT_EPS)
    return ad.log(c) - ad.log(1.0 - c)


@dataclass(frozen=True)
class NetworkParams:
    w1: np.ndarray
    w2: np.ndarray
    v: np.ndarray
    c: np.ndarray
    residual: float

    def __eq__(self, other):
        return isinstance(other, NetworkParams) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ('w1', 'w2', 'v', 'c', 'residual'))

    def flatten(self, temporal):
        parts = [self.w1, self.w2, self.v, self.c] if temporal else [self.w1, self.v, self.c]
        return np.concatenate(parts + [np.array([self.residual])])

    @staticmethod
    def unflatten(vector, temporal):
        n = HIDDEN_UNITS
        blocks = [vector[i * n:(i + 1) * n].copy() for i in range(4 if temporal else 3)]
        if temporal:
            w1, w2, v, c = blocks
        else:
            w1, v, c = blocks
            w2 = np.zeros(n)
        return NetworkParams(w1, w2, v, c, float(vector[len(blocks) * n]))

    @staticmethod
    def size(temporal):
        return (4 if temporal else 3) * HIDDEN_UNITS + 1

    def project(self):
        w1 = np.maximum(self.w1, 0.0)
        return NetworkParams(w1, np.maximum(self.w2, -w1), np.maximum(self.v, 0.0), self.c.copy(),
                             max(float(self.residual), 0.0))

    def is_feasible(self):
        return bool(np.all(self.w1 >= 0.0) and np.all(self.v >= 0.0) and self.residual >= 0.0
                    and np.all(self.w1 + self.w2 >= 0.0))


class LossNetwork:
    """
    One monotone network on x in (0, 1), with residual term 'log' (psi) or
    'logit' (phi^-1). Non-temporal networks ignore the progress input.
    """

    def __init__(self, params, residual_kind, temporal=False):
        if residual_kind not in ('log', 'logit'):
            raise ValueError(f'unknown residual {residual_kind!r}')
        self.params = params
        self.residual_kind = residual_kind
        self.temporal = temporal

    def __repr__(self):
        return f'LossNetwork({self.residual_kind}, temporal={self.temporal})'

    def _preactivation(self, x, progress):
        p = self.params
        x = np.asarray(x, dtype=float)[..., None]
        z = x * p.w1 + p.c
        if self.temporal:
            z = z + (x * np.asarray(progress, dtype=float)[..., None]) * p.w2
            slope = p.w1 + np.asarray(progress, dtype=float)[..., None] * p.w2
        else:
            slope = p.w1
        return z, slope

    def _residual(self, x):
        a = self.params.residual
        if self.residual_kind == 'log':
            return a * np.log(x), a / x
        return a * (np.log(x) - np.log1p(-x)), a / (x * (1.0 - x))

    def evaluate(self, x, progress=0.0):
        """
        (value, d value / dx) at x.
        """
        x = np.asarray(x, dtype=float)
        z, slope = self._preactivation(x, progress)
        value, derivative = self._residual(x)
        v = self.params.v
        for name, sl in zip(ACTIVATIONS, _FAMILY_SLICES):
            act, dact = _activation(name, z[..., sl])
            value = value + (v[sl] * act).sum(axis=-1)
            derivative = derivative + (v[sl] * dact * slope[..., sl]).sum(axis=-1)
        return value, derivative

    def __call__(self, x, progress=0.0):
        return self.evaluate(x, progress)[0]

    def derivative(self, x, progress=0.0):
        return self.evaluate(x, progress)[1]

    def node(self, x, progress=0.0):
        """
        The network as one fused differentiation primitive of x.
        """
        x = ad.lift(x)
        value, derivative = self.evaluate(x.value, progress)
        return ad.DiffScalar.elementwise(x, value, derivative)

    def graph(self, x, progress, leaves):
        """
        The network composed from engine primitives with parameter leaves
        (keys w1, w2, v, c, residual), for gradients with respect to the
        parameters.
        """
        x = ad.lift(x)
        xs = ad.DiffScalar(x.value[..., None], (x,), lambda out: x._accumulate(out.adjoint.sum(axis=-1)))
        z = xs * leaves['w1'] + leaves['c']
        if self.temporal:
            z = z + (xs * np.asarray(progress, dtype=float)[..., None]) * leaves['w2']
        if self.residual_kind == 'log':
            out = leaves['residual'] * ad.log(x)
        else:
            out = leaves['residual'] * (ad.log(x) - ad.log(1.0 - x))
        for name, sl in zip(ACTIVATIONS, _FAMILY_SLICES):
            out = out + (leaves['v'][sl] * _activation_node(name, z[..., sl])).sum(axis=-1)
        return out

    def param_gradient(self, x, progress=0.0):
        """
        Gradient of sum(net(x)) with respect to the flat parameters of this network.
        """
        p = self.params
        leaves = {name: ad.DiffScalar(getattr(p, name)) for name in ('w1', 'w2', 'v', 'c', 'residual')}
        self.graph(ad.DiffScalar(np.asarray(x, dtype=float)), progress, leaves).sum().backward()
        grads = NetworkParams(leaves['w1'].adjoint, leaves['w2'].adjoint, leaves['v'].adjoint,
                              leaves['c'].adjoint, float(leaves['residual'].adjoint))
        return grads.flatten(self.temporal)


@dataclass(frozen=True)
class LossNetParams:
    """
    Parameters of both networks. The flat layout is the psi block followed by
    the phi^-1 block; each block is w1, [w2,] v, c, residual.
    """
    psi: NetworkParams
    phi_inverse: NetworkParams
    temporal: bool = False

    @staticmethod
    def dimension(temporal):
        return 2 * NetworkParams.size(temporal)

    def flatten(self):
        return np.concatenate([self.psi.flatten(self.temporal), self.phi_inverse.flatten(self.temporal)])

    @staticmethod
    def unflatten(vector, temporal):
        vector = np.asarray(vector, dtype=float)
        size = NetworkParams.size(temporal)
        if vector.shape != (2 * size,):
            raise ValueError(f'expected {2 * size} parameters, got {vector.shape}')
        return LossNetParams(NetworkParams.unflatten(vector[:size], temporal),
                             NetworkParams.unflatten(vector[size:], temporal), temporal)

    @property
    def psi_network(self):
        return LossNetwork(self.psi, 'log', self.temporal)

    @property
    def phi_inverse_network(self):
        return LossNetwork(self.phi_inverse, 'logit', self.temporal)

    def is_feasible(self):
        return self.psi.is_feasible() and self.phi_inverse.is_feasible()

    @staticmethod
    def orpo_equivalent(temporal=False):
        """
        Zero kernels and a = b = 1: psi = log and phi^-1 = logit.
        """
        zeros = np.zeros(HIDDEN_UNITS)
        net = NetworkParams(zeros, zeros, zeros, zeros, 1.0)
        return LossNetParams(net, net, temporal)

    # -- checkpoints ----------------------------------------------------------------

    def to_json(self):
        return json.dumps({'format': CHECKPOINT_FORMAT, 'version': CHECKPOINT_VERSION,
                           'temporal': self.temporal, 'dimension': self.dimension(self.temporal),
                           'hidden_units': HIDDEN_UNITS, 'activations': list(ACTIVATIONS),
                           'params': self.flatten().tolist()})

    @staticmethod
    def from_json(text):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(exc.lineno, f'malformed loss-net checkpoint: {exc.msg}') from None
        if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
            raise DatasetFormatError(1, 'not a loss-net checkpoint')
        if payload.get('version') != CHECKPOINT_VERSION:
            raise DatasetFormatError(1, f'unsupported loss-net checkpoint version {payload.get("version")!r}')
        try:
            temporal = bool(payload['temporal'])
            if payload['dimension'] != LossNetParams.dimension(temporal):
                raise ValueError(f'dimension {payload["dimension"]} does not match the layout')
            return LossNetParams.unflatten(np.array(payload['params'], dtype=float), temporal)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(1, f'malformed loss-net checkpoint: {exc}') from None


def loss_net_apply(network, x, progress=0.0):
    return network(x, progress if network.temporal else 0.0)


def project_params(zeta):
    return replace(zeta, psi=zeta.psi.project(), phi_inverse=zeta.phi_inverse.project())


def init_params(rng, temporal=False):
    """
    a = b = 1, |N(0, 0.05)| input and output kernels, N(0, 0.05) biases and
    zero temporal weights.
    """
    def one():
        return NetworkParams(np.abs(rng.normal(0.0, INIT_STD, HIDDEN_UNITS)), np.zeros(HIDDEN_UNITS),
                             np.abs(rng.normal(0.0, INIT_STD, HIDDEN_UNITS)), rng.normal(0.0, INIT_STD, HIDDEN_UNITS),
                             1.0)

    return LossNetParams(one(), one(), temporal)


def save_params(zeta, path):
    from mdpo.artifacts import atomic_write_text
    atomic_write_text(path, zeta.to_json() + '\n')


def load_params(path):
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as exc:
        raise ConfigurationError(f'cannot read loss-net checkpoint {path!r}: {exc.strerror}') from None
    except UnicodeDecodeError:
        raise DatasetFormatError(1, f'loss-net checkpoint {path!r} is not UTF-8 text') from None
    return LossNetParams.from_json(text)


def load_network(path, which='phi_inverse'):
    zeta = load_params(path)
    if which == 'psi':
        return zeta.psi_network
    if which == 'phi_inverse':
        return zeta.phi_inverse_network
    raise ConfigurationError(f'unknown network {which!r}; expected psi or phi_inverse')
