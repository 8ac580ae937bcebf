"""Parameter update rules. All steps update ``params`` in place and return them."""
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError


def _check_pairs(params, grads):
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter shape {np.shape(p)} does not match gradient shape {np.shape(g)}")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 0.0

    @classmethod
    def for_params(cls, params, **options):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **options)

    def moments(self):
        return self.m + self.v

    def load_moments(self, arrays, step):
        half = len(arrays) // 2
        self.m = [np.array(a) for a in arrays[:half]]
        self.v = [np.array(a) for a in arrays[half:]]
        self.step = int(step)


def adam_step(state, params, grads):
    """One bias-corrected Adam update; ``state.l2 * w`` is added to each gradient first."""
    _check_pairs(params, grads)
    _check_pairs(state.m, params)
    state.step += 1
    correction1 = 1 - state.beta1 ** state.step
    correction2 = 1 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.l2:
            g = g + state.l2 * p
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(p.dtype, copy=False)
    return params


def sgd_step(params, grads, lr):
    """Plain gradient descent ``w <- w - lr * g``."""
    _check_pairs(params, grads)
    for p, g in zip(params, grads):
        p -= np.asarray(lr * np.asarray(g), dtype=np.asarray(p).dtype)
    return params


@dataclass
class MomentumState:
    velocity: list = field(default_factory=list)
    lr: float = 1e-2
    momentum: float = 0.9
    step: int = 0

    @classmethod
    def for_params(cls, params, **options):
        return cls(velocity=[np.zeros_like(p) for p in params], **options)

    def moments(self):
        return list(self.velocity)

    def load_moments(self, arrays, step):
        self.velocity = [np.array(a) for a in arrays]
        self.step = int(step)


def momentum_sgd_step(state, params, grads):
    """SGD with classical momentum: ``u <- mu * u - lr * g; w <- w + u``."""
    _check_pairs(params, grads)
    _check_pairs(state.velocity, params)
    state.step += 1
    for p, g, u in zip(params, grads, state.velocity):
        u *= state.momentum
        u -= state.lr * g
        p += u
    return params
