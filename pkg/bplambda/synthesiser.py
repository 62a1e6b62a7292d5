# bplambda/synthesiser.py v1.0
"""Linear synthesiser g(h; theta) = theta [h | 1]"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ShapeError
from .tensor_core import DTYPE, check_finite


@dataclass
class SynthParams:
    """theta of shape (n, n + 1); the last column is the bias"""
    theta: np.ndarray

    @classmethod
    def zeros(cls, state_dim: int) -> 'SynthParams':
        return cls(np.zeros((state_dim, state_dim + 1), dtype=DTYPE))

    @property
    def state_dim(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> 'SynthParams':
        return SynthParams(self.theta.copy())


@dataclass
class SynthGradient:
    value: np.ndarray
    scaled: np.ndarray


def augment(h: Any) -> np.ndarray:
    """[h | 1] along the last axis"""
    h = np.asarray(h, dtype=DTYPE)
    if h.ndim not in (1, 2):
        raise ShapeError(f"augment: state must be 1-D or batched 2-D, got {h.shape}")
    ones = np.ones(h.shape[:-1] + (1,), dtype=DTYPE)
    return np.concatenate([h, ones], axis=-1)


def predict(h: Any, synth: SynthParams, is_final: bool = False,
            sg_scale: float = 1.0) -> SynthGradient:
    """Synthetic gradient for h (1-D or (B, n)); zero at the last task step"""
    z = augment(h)
    if z.shape[-1] != synth.theta.shape[1]:
        raise ShapeError(f"predict: state width {z.shape[-1] - 1}, theta {synth.theta.shape}")
    if is_final:
        value = np.zeros(z.shape[:-1] + (synth.state_dim,), dtype=DTYPE)
    else:
        value = z @ synth.theta.T
    return SynthGradient(value, sg_scale * value)


class ThetaGradient:
    """Implicit d g / d theta: entry [i, j, k] = delta_ij * z_k with z = [h | 1].

    Only z is stored; materialise() builds the dense (n, n, n+1) tensor
    (or (B, n, n, n+1) for a batch).
    """

    def __init__(self, h: Any):
        self.z = augment(h)
        self.state_dim = self.z.shape[-1] - 1

    @property
    def batched(self) -> bool:
        return self.z.ndim == 2

    def materialise(self) -> np.ndarray:
        n = self.state_dim
        eye = np.eye(n, dtype=DTYPE)
        if self.batched:
            return eye[np.newaxis, :, :, np.newaxis] * self.z[:, np.newaxis, np.newaxis, :]
        return eye[:, :, np.newaxis] * self.z[np.newaxis, np.newaxis, :]

    def add_to(self, trace: np.ndarray) -> np.ndarray:
        """trace + grad without building the dense tensor (writes into trace)"""
        n = self.state_dim
        idx = np.arange(n)
        if self.batched:
            if trace.shape != (self.z.shape[0], n, n, n + 1):
                raise ShapeError(f"add_to: trace {trace.shape} for z {self.z.shape}")
            trace[:, idx, idx, :] += self.z[:, np.newaxis, :]
        else:
            if trace.shape != (n, n, n + 1):
                raise ShapeError(f"add_to: trace {trace.shape} for z {self.z.shape}")
            trace[idx, idx, :] += self.z[np.newaxis, :]
        return check_finite(trace, "eligibility trace")


def grad_theta(h: Any) -> ThetaGradient:
    return ThetaGradient(h)
