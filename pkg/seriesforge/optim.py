# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Adam with bias correction, operating in place on named parameter arrays."""
import typing

import numpy as np


if typing.TYPE_CHECKING:
    from typing import Dict  # noqa: F401


DEFAULT_LR = 1e-3
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8


class AdamState(object):
    """Moment accumulators and hyperparameters of one Adam optimizer.

    Args:
        lr (float): the learning rate
        beta1 (float): decay of the first-moment estimate
        beta2 (float): decay of the second-moment estimate
        epsilon (float): denominator offset

    Attributes:
        m (dict): first-moment estimates, keyed by parameter name
        v (dict): second-moment estimates, keyed by parameter name
        t (int): number of steps taken
    """

    def __init__(
        self,
        lr=DEFAULT_LR,
        beta1=DEFAULT_BETA1,
        beta2=DEFAULT_BETA2,
        epsilon=DEFAULT_EPSILON,
    ):
        # type: (float, float, float, float) -> None
        if lr < 0:
            raise ValueError("lr must be non-negative, got %r" % lr)
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError("betas must lie in [0, 1), got %r and %r" % (beta1, beta2))
        if epsilon <= 0:
            raise ValueError("epsilon must be positive, got %r" % epsilon)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = {}  # type: Dict[str, np.ndarray]
        self.v = {}  # type: Dict[str, np.ndarray]
        self.t = 0

    def __repr__(self):
        # type: () -> str
        return "AdamState(lr=%r, beta1=%r, beta2=%r, epsilon=%r, t=%r)" % (
            self.lr,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.t,
        )


def adam_step(params, grads, state):
    # type: (Dict[str, np.ndarray], Dict[str, np.ndarray], AdamState) -> None
    """Update every array of ``params`` in place with its gradient in ``grads``."""
    for name, param in params.items():
        if name not in grads:
            raise ValueError("Missing gradient for parameter %r" % name)
        if grads[name].shape != param.shape:
            raise ValueError(
                "Gradient shape %r does not match parameter %r of shape %r"
                % (grads[name].shape, name, param.shape)
            )

    state.t += 1
    bias1 = 1.0 - state.beta1**state.t
    bias2 = 1.0 - state.beta2**state.t

    for name, param in params.items():
        grad = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        param -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
