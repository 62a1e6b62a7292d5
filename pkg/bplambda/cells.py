# bplambda/cells.py v1.0
"""Recurrent cells (linear, tanh, LSTM) and readout heads.

Every function works on a leading batch axis; 1-D inputs are treated as a
batch of one and squeezed back on the way out. The LSTM state seen by the
synthesiser is the concatenation [cell_state | output_state].
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .config import LSTM_FORGET_BIAS
from .errors import ContractViolation, MissingTargetError, ShapeError
from .tensor_core import DTYPE, batch_pullback, check_finite


class CellKind(Enum):
    """Recurrent cell families"""
    LINEAR = "linear"
    TANH = "tanh"
    LSTM = "lstm"


class HeadKind(Enum):
    """Readout losses"""
    MSE = "mse"                # toy tasks
    SOFTMAX_CE = "softmax_ce"  # sequential MNIST
    BITS = "bits"              # copy-repeat, per-bit sigmoid


RECURRENT_KEYS = ('W_in', 'W_rec', 'b')
READOUT_KEYS = ('W_out', 'b_out')


@dataclass
class RnnParams:
    """Cell weights Psi plus the linear readout"""
    cell_kind: CellKind
    input_dim: int
    units: int
    output_dim: int
    W_in: np.ndarray
    W_rec: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    version: int = 0

    @property
    def state_dim(self) -> int:
        return 2 * self.units if self.cell_kind == CellKind.LSTM else self.units

    @property
    def gate_dim(self) -> int:
        return 4 * self.units if self.cell_kind == CellKind.LSTM else self.units

    def recurrent(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in RECURRENT_KEYS}

    def readout_params(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in READOUT_KEYS}

    def tensors(self) -> Dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in RECURRENT_KEYS + READOUT_KEYS}

    def mark_updated(self) -> None:
        """Invalidate every StepOutput computed with the previous weights"""
        self.version += 1

    def copy(self) -> 'RnnParams':
        return RnnParams(self.cell_kind, self.input_dim, self.units, self.output_dim,
                         *(getattr(self, k).copy() for k in RECURRENT_KEYS + READOUT_KEYS),
                         version=self.version)


@dataclass
class StepOutput:
    """Result of one cell step with everything the parameter VJP needs"""
    next_state: np.ndarray
    jac_state: np.ndarray      # (B, n, n) = d h' / d h
    cache: Dict[str, np.ndarray] = field(repr=False)
    params_version: int = 0
    squeezed: bool = False


@dataclass
class ReadoutLoss:
    prediction: np.ndarray
    loss: np.ndarray           # per batch item
    grad_state: np.ndarray     # dL/dh, zero when no target
    grad_params: Dict[str, np.ndarray]


def init_params(cell_kind: CellKind, input_dim: int, units: int, output_dim: int,
                rng: np.random.Generator, recurrent_scale: float = 1.0) -> RnnParams:
    """uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, LSTM forget bias +1"""
    gate_dim = 4 * units if cell_kind == CellKind.LSTM else units

    def uniform(rows: int, fan_in: int) -> np.ndarray:
        k = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-k, k, size=(rows, fan_in)).astype(DTYPE)

    W_in = uniform(gate_dim, input_dim)
    W_rec = uniform(gate_dim, units) * recurrent_scale
    b = np.zeros(gate_dim, dtype=DTYPE)
    if cell_kind == CellKind.LSTM:
        b[units:2 * units] = LSTM_FORGET_BIAS
    W_out = uniform(output_dim, units)
    b_out = np.zeros(output_dim, dtype=DTYPE)
    return RnnParams(cell_kind, input_dim, units, output_dim, W_in, W_rec, b, W_out, b_out)


def _batched(arr: Any, width: int, what: str) -> Tuple[np.ndarray, bool]:
    a = np.asarray(arr, dtype=DTYPE)
    squeezed = a.ndim == 1
    if squeezed:
        a = a[np.newaxis, :]
    if a.ndim != 2 or a.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got shape {np.shape(arr)}")
    return a, squeezed


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def step(x: Any, h: Any, params: RnnParams) -> StepOutput:
    """h' = f(x, h; Psi) together with the exact Jacobian d h'/d h.

    Raises NonFiniteError when h' holds NaN or inf.
    """
    x, _ = _batched(x, params.input_dim, "step input")
    h, squeezed = _batched(h, params.state_dim, "step state")
    if x.shape[0] != h.shape[0]:
        raise ShapeError(f"step: batch mismatch {x.shape[0]} vs {h.shape[0]}")
    B = h.shape[0]
    kind = params.cell_kind

    if kind in (CellKind.LINEAR, CellKind.TANH):
        a = x @ params.W_in.T + h @ params.W_rec.T + params.b
        if kind == CellKind.LINEAR:
            nxt = a
            jac = np.broadcast_to(params.W_rec, (B,) + params.W_rec.shape).copy()
        else:
            nxt = np.tanh(a)
            jac = (1.0 - nxt ** 2)[:, :, np.newaxis] * params.W_rec[np.newaxis, :, :]
        cache = {'x': x, 'h': h, 'next': nxt}
        return StepOutput(check_finite(nxt, "cell state"), jac, cache, params.version, squeezed)

    u = params.units
    c, hh = h[:, :u], h[:, u:]
    z = x @ params.W_in.T + hh @ params.W_rec.T + params.b
    i = _sigmoid(z[:, :u])
    f = _sigmoid(z[:, u:2 * u])
    o = _sigmoid(z[:, 2 * u:3 * u])
    g = np.tanh(z[:, 3 * u:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    W_i, W_f, W_o, W_g = (params.W_rec[k * u:(k + 1) * u] for k in range(4))
    col = lambda v: v[:, :, np.newaxis]
    eye = np.eye(u, dtype=DTYPE)[np.newaxis, :, :]
    dc_dc = col(f) * eye
    dc_dh = (col(c * f * (1.0 - f)) * W_f + col(g * i * (1.0 - i)) * W_i
             + col(i * (1.0 - g ** 2)) * W_g)
    dtanh = o * (1.0 - tc ** 2)
    dh_dc = col(dtanh) * dc_dc
    dh_dh = col(tc * o * (1.0 - o)) * W_o + col(dtanh) * dc_dh

    jac = np.empty((B, 2 * u, 2 * u), dtype=DTYPE)
    jac[:, :u, :u] = dc_dc
    jac[:, :u, u:] = dc_dh
    jac[:, u:, :u] = dh_dc
    jac[:, u:, u:] = dh_dh
    nxt = np.concatenate([c_new, h_new], axis=1)
    cache = {'x': x, 'h': hh, 'c': c, 'i': i, 'f': f, 'o': o, 'g': g, 'tc': tc}
    return StepOutput(check_finite(nxt, "cell state"), jac, cache, params.version, squeezed)


def vjp_params(out: StepOutput, adjoint: Any, params: RnnParams) -> Dict[str, np.ndarray]:
    """adjoint^T d h'/d Psi summed over the batch, never materialising d h'/d Psi"""
    if out.params_version != params.version:
        raise ContractViolation(
            f"step cache computed with params v{out.params_version}, now v{params.version}")
    adj, _ = _batched(adjoint, params.state_dim, "vjp adjoint")
    cache = out.cache
    if adj.shape[0] != cache['x'].shape[0]:
        raise ShapeError("vjp adjoint batch does not match the cached step")

    kind = params.cell_kind
    if kind == CellKind.LINEAR:
        dz = adj
    elif kind == CellKind.TANH:
        dz = adj * (1.0 - cache['next'] ** 2)
    else:
        u = params.units
        i, f, o, g, tc = cache['i'], cache['f'], cache['o'], cache['g'], cache['tc']
        a_c, a_h = adj[:, :u], adj[:, u:]
        dc = a_c + a_h * o * (1.0 - tc ** 2)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * cache['c'] * f * (1.0 - f),
            a_h * tc * o * (1.0 - o),
            dc * i * (1.0 - g ** 2),
        ], axis=1)

    return {
        'W_in': dz.T @ cache['x'],
        'W_rec': dz.T @ cache['h'],
        'b': dz.sum(axis=0),
    }


def output_state(h: np.ndarray, params: RnnParams) -> np.ndarray:
    """The part of the state the readout sees (LSTM: output state only)"""
    if params.cell_kind == CellKind.LSTM:
        return h[:, params.units:]
    return h


def readout(head: HeadKind, h: Any, params: RnnParams, target: Optional[Any] = None,
            require_target: bool = False) -> ReadoutLoss:
    """Prediction, loss and dL/dh chained through the linear readout"""
    hb, squeezed = _batched(h, params.state_dim, "readout state")
    B = hb.shape[0]
    h_out = output_state(hb, params)
    y_hat = h_out @ params.W_out.T + params.b_out

    if target is None:
        if require_target:
            raise MissingTargetError(f"{head.value} head requires a target")
        result = ReadoutLoss(y_hat, np.zeros(B, dtype=DTYPE), np.zeros_like(hb),
                             {k: np.zeros_like(v) for k, v in params.readout_params().items()})
        return _squeeze_readout(result) if squeezed else result

    if head == HeadKind.MSE:
        y, _ = _batched(target, params.output_dim, "mse target")
        diff = y_hat - y
        loss = 0.5 * np.sum(diff ** 2, axis=1)
        d_out = diff
    elif head == HeadKind.SOFTMAX_CE:
        labels = np.atleast_1d(np.asarray(target, dtype=np.int64))
        if labels.shape != (B,):
            raise ShapeError(f"class target shape {labels.shape} for batch {B}")
        shifted = y_hat - y_hat.max(axis=1, keepdims=True)
        log_z = np.log(np.sum(np.exp(shifted), axis=1))
        log_p = shifted - log_z[:, np.newaxis]
        loss = -log_p[np.arange(B), labels]
        d_out = np.exp(log_p)
        d_out[np.arange(B), labels] -= 1.0
    else:
        y, _ = _batched(target, params.output_dim, "bit target")
        loss = np.sum(np.maximum(y_hat, 0.0) - y_hat * y + np.log1p(np.exp(-np.abs(y_hat))),
                      axis=1)
        d_out = _sigmoid(y_hat) - y

    grad_state = np.zeros_like(hb)
    grad_out = d_out @ params.W_out
    if params.cell_kind == CellKind.LSTM:
        grad_state[:, params.units:] = grad_out
    else:
        grad_state[:] = grad_out
    grads = {'W_out': d_out.T @ h_out, 'b_out': d_out.sum(axis=0)}
    result = ReadoutLoss(y_hat, loss, grad_state, grads)
    return _squeeze_readout(result) if squeezed else result


def _squeeze_readout(r: ReadoutLoss) -> ReadoutLoss:
    return ReadoutLoss(r.prediction[0], r.loss[0], r.grad_state[0], r.grad_params)


def pull_back(adjoint: np.ndarray, out: StepOutput) -> np.ndarray:
    """Pull a state adjoint at h' back to h through the cached Jacobian"""
    adj, _ = _batched(adjoint, out.jac_state.shape[1], "pullback adjoint")
    return batch_pullback(adj, out.jac_state)
