# bplambda/optim.py v1.0
"""ADAM over accumulated increments and plain SGD for raw-mode theory checks"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from .errors import DivergenceError, ShapeError

Params = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """Moments per named parameter tensor"""
    rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> Tuple[Params, AdamState]:
    """Descend along grads; params are updated in place and returned.

    Names missing from grads keep their moments and are left untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"adam_step: unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ShapeError(f"adam_step: grad {name} {g.shape} vs param {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for '{name}'", step=state.step)

    state.step += 1
    t = state.step
    for name, g in grads.items():
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        params[name] -= state.rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def sgd_step(params: Params, updates: Params, rate: float) -> Params:
    """params += rate * update (ascent form; callers pass the sign they want)"""
    for name, u in updates.items():
        if u.shape != params[name].shape:
            raise ShapeError(f"sgd_step: update {name} {u.shape} vs param {params[name].shape}")
        params[name] += rate * u
    return params
