"""SGD and Adam over lists of numpy parameter arrays, updated in place."""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def _check(params, grads):
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter arrays but {len(grads)} gradient arrays")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != np.shape(g):
            raise ShapeError(f"parameter {i}: shape {p.shape} != gradient shape {np.shape(g)}")


def optimizer_step(params, grads, state):
    """Apply one update to ``params`` in place and advance ``state.step``."""
    _check(params, grads)
    state.step += 1
    lr = state.learning_rate
    if state.algorithm == "sgd":
        for p, g in zip(params, grads):
            p -= p.dtype.type(lr) * g.astype(p.dtype, copy=False)
        return params

    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif [m.shape for m in state.m] != [p.shape for p in params]:
        raise ShapeError("optimizer moment buffers do not match the parameter list")
    b1, b2, t = state.beta1, state.beta2, state.step
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)).astype(p.dtype, copy=False)
    return params


class Optimizer:
    """Binds an ``OptimizerState`` to a fixed list of ``(layer, name)`` parameter slots."""

    def __init__(self, slots, algorithm="adam", learning_rate=0.001):
        self.slots = list(slots)
        self.state = OptimizerState(algorithm=algorithm, learning_rate=learning_rate)

    def step(self):
        params = [getattr(layer, name) for layer, name in self.slots]
        grads = [layer.grads[name] for layer, name in self.slots]
        optimizer_step(params, grads, self.state)
