import numpy as np


class Adam:
    """
    Adaptive-moment optimizer on a flat or shaped parameter array. ``step``
    returns the update to add for minimizing; pass the negated gradient to
    ascend.
    """

    def __init__(self, shape, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return -self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def state(self):
        return {'t': self.t, 'm': self.m.copy(), 'v': self.v.copy()}


def clip_by_global_norm(grad, max_norm):
    """
    Rescales ``grad`` so that its Euclidean norm is at most ``max_norm``.
    Returns (clipped gradient, norm after clipping).
    """
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
        norm = float(np.linalg.norm(grad))
    return grad, norm
