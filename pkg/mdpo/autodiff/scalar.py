"""
Reverse-mode differentiation over scalar expression graphs.

Every node holds a value and, after ``backward``, an adjoint. Values may be
numpy arrays, in which case all primitives act elementwise (with numpy
broadcasting) and reductions are explicit (``sum``/``mean``); this keeps a
whole minibatch or landscape grid in one graph.

Subgradient conventions at kinks:
  - d/dx max(x, 0) = 0 at x = 0
  - d/dx clip(x, lo, hi) = 0 outside (lo, hi) and at both boundaries
  - fractional powers use the derivative at EPS when the base is <= EPS
"""
import numpy as np
from scipy.special import expit, log_expit

EPS = 1e-8


def _unbroadcast(grad, shape):
    grad = np.asarray(grad, dtype=float)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class DiffScalar:
    __slots__ = ('value', 'adjoint', '_parents', '_backward')
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.adjoint = np.zeros_like(self.value)
        self._parents = parents
        self._backward = backward

    def __repr__(self):
        return f'DiffScalar(value={self.value}, adjoint={self.adjoint})'

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def _accumulate(self, grad):
        self.adjoint = self.adjoint + _unbroadcast(grad, self.value.shape)

    # -- elementwise primitives ------------------------------------------------

    @staticmethod
    def elementwise(parent, value, derivative):
        """
        Node for y = f(parent) with a caller-supplied local derivative f'(parent).
        """
        parent = lift(parent)

        def backward(out):
            parent._accumulate(out.adjoint * derivative)

        return DiffScalar(value, (parent,), backward)

    def __add__(self, other):
        other = lift(other)

        def backward(out):
            self._accumulate(out.adjoint)
            other._accumulate(out.adjoint)

        return DiffScalar(self.value + other.value, (self, other), backward)

    def __radd__(self, other):
        return lift(other) + self

    def __neg__(self):
        return DiffScalar.elementwise(self, -self.value, -1.0)

    def __sub__(self, other):
        other = lift(other)

        def backward(out):
            self._accumulate(out.adjoint)
            other._accumulate(-out.adjoint)

        return DiffScalar(self.value - other.value, (self, other), backward)

    def __rsub__(self, other):
        return lift(other) - self

    def __mul__(self, other):
        other = lift(other)

        def backward(out):
            self._accumulate(out.adjoint * other.value)
            other._accumulate(out.adjoint * self.value)

        return DiffScalar(self.value * other.value, (self, other), backward)

    def __rmul__(self, other):
        return lift(other) * self

    def __truediv__(self, other):
        other = lift(other)

        def backward(out):
            self._accumulate(out.adjoint / other.value)
            other._accumulate(-out.adjoint * self.value / (other.value * other.value))

        return DiffScalar(self.value / other.value, (self, other), backward)

    def __rtruediv__(self, other):
        return lift(other) / self

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        def backward(out):
            grad = np.zeros_like(self.value)
            np.add.at(grad, index, out.adjoint)
            self._accumulate(grad)

        return DiffScalar(self.value[index], (self,), backward)

    def sum(self, axis=None):
        def backward(out):
            grad = out.adjoint if axis is None else np.expand_dims(out.adjoint, axis)
            self._accumulate(np.broadcast_to(grad, self.value.shape))

        return DiffScalar(self.value.sum(axis=axis), (self,), backward)

    def mean(self, axis=None):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) / float(count)

    # -- reverse pass ------------------------------------------------------------

    def backward(self, seed=None):
        """
        Populates adjoints of every node reachable from this one. A non-scalar
        output is seeded with ones, i.e. the gradient of its sum.
        """
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in topo:
            node.adjoint = np.zeros_like(node.value)
        self.adjoint = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node)


def lift(x):
    return x if isinstance(x, DiffScalar) else DiffScalar(x)


def exp(x):
    x = lift(x)
    value = np.exp(x.value)
    return DiffScalar.elementwise(x, value, value)


def log(x):
    x = lift(x)
    return DiffScalar.elementwise(x, np.log(x.value), 1.0 / x.value)


def tanh(x):
    x = lift(x)
    value = np.tanh(x.value)
    return DiffScalar.elementwise(x, value, 1.0 - value * value)


def sigmoid(x):
    x = lift(x)
    value = expit(x.value)
    return DiffScalar.elementwise(x, value, value * (1.0 - value))


def log_sigmoid(x):
    """
    Stable log(sigmoid(x)), i.e. -softplus(-x).
    """
    x = lift(x)
    return DiffScalar.elementwise(x, log_expit(x.value), expit(-x.value))


def relu(x):
    x = lift(x)
    return DiffScalar.elementwise(x, np.maximum(x.value, 0.0), (x.value > 0.0).astype(float))


def clip(x, lo=0.0, hi=1.0):
    x = lift(x)
    inside = (x.value > lo) & (x.value < hi)
    return DiffScalar.elementwise(x, np.clip(x.value, lo, hi), inside.astype(float))


def power(x, exponent):
    x = lift(x)
    exponent = float(exponent)
    value = np.power(x.value, exponent)
    if exponent.is_integer():
        derivative = exponent * np.power(x.value, exponent - 1.0)
    else:
        derivative = exponent * np.power(np.maximum(x.value, EPS), exponent - 1.0)
    return DiffScalar.elementwise(x, value, derivative)


def value_and_gradient(fn, *inputs):
    """
    Evaluates fn on fresh leaves built from ``inputs`` and returns
    (value, gradients) with one gradient array per input.
    """
    leaves = [DiffScalar(np.array(x, dtype=float)) for x in inputs]
    out = fn(*leaves)
    out.backward()
    value = float(out.value) if out.value.ndim == 0 else out.value.copy()
    grads = tuple(leaf.adjoint.copy() for leaf in leaves)
    return value, grads


def gradient(fn, inputs):
    _, (grad,) = value_and_gradient(fn, inputs)
    return grad
