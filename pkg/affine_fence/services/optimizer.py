import numpy as np

from affine_fence.services.exceptions import DimensionMismatchError


class AdamOptimizer:
    """Adaptive-moment descent over a fixed list of parameter arrays.

    The arrays are updated in place, so they must stay the same objects for
    the lifetime of the optimizer (see ``MlpNetwork.load_parameters``).
    """

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(param) for param in params]
        self._v = [np.zeros_like(param) for param in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise DimensionMismatchError("gradient list", len(self.params), len(grads))
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for param, grad, m, v in zip(self.params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
