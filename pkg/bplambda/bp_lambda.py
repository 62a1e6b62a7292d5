# bplambda/bp_lambda.py v1.0
"""Accumulate BP(lambda): online synthesiser learning with eligibility traces.

Per step the learner only touches (h_{t-1}, h_t, d h_t / d h_{t-1}); there is no
backward sweep over the sequence. Traces are kept per batch item and reset
at every sequence start.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from . import cells
from .baselines import TrajectoryRecord, guarded_step
from .cells import RnnParams
from .dataclasses import SequenceResult, TrainerConfig, TrainState
from .errors import DivergenceError, ShapeError
from .optim import adam_step, sgd_step
from .synthesiser import SynthParams, ThetaGradient, grad_theta, predict
from .tasks import Episode
from .tensor_core import DTYPE, batch_pullback, batch_trace_contract, check_finite


@dataclass
class EligibilityTrace:
    """e with shape (B, n, n, n + 1), or (n, n, n + 1) for a single trajectory"""
    values: np.ndarray

    @classmethod
    def zeros(cls, state_dim: int, batch: Optional[int] = None) -> 'EligibilityTrace':
        shape = (state_dim, state_dim, state_dim + 1)
        if batch is not None:
            shape = (batch,) + shape
        return cls(np.zeros(shape, dtype=DTYPE))

    @property
    def batched(self) -> bool:
        return self.values.ndim == 4


def update_trace(trace: EligibilityTrace, jac_state: np.ndarray,
                 grad_g: Union[ThetaGradient, np.ndarray], gamma: float, lam: float,
                 structured: bool = True) -> EligibilityTrace:
    """e' = gamma * lam * (d h_t / d h_{t-1}) e + grad_theta g(h_t)"""
    e = trace.values if trace.batched else trace.values[np.newaxis]
    jac = jac_state if trace.batched else jac_state[np.newaxis]
    if jac.ndim != 3 or jac.shape[0] != e.shape[0]:
        raise ShapeError(f"update_trace: jac {jac_state.shape} for trace {trace.values.shape}")
    decayed = (gamma * lam) * batch_trace_contract(jac, e)
    if not trace.batched:
        decayed = decayed[0]

    if isinstance(grad_g, ThetaGradient) and structured:
        return EligibilityTrace(grad_g.add_to(decayed))
    dense = grad_g.materialise() if isinstance(grad_g, ThetaGradient) else grad_g
    if dense.shape != decayed.shape:
        raise ShapeError(f"update_trace: grad {dense.shape} vs trace {decayed.shape}")
    return EligibilityTrace(check_finite(decayed + dense, "eligibility trace"))


def td_error(grad_loss_next: np.ndarray, g_next: np.ndarray, jac_state: np.ndarray,
             g_curr: np.ndarray, gamma: float) -> np.ndarray:
    """delta_t = J^T (dL_{t+1}/dh_{t+1} + gamma g(h_{t+1})) - g(h_t).

    grad_loss_next is taken at h_{t+1} and pulled back through jac_state here,
    so the loss pullback and the bootstrap pullback share one product.
    """
    single = np.ndim(g_curr) == 1
    if single:
        grad_loss_next, g_next, g_curr = (np.asarray(a)[np.newaxis]
                                          for a in (grad_loss_next, g_next, g_curr))
        jac_state = np.asarray(jac_state)[np.newaxis]
    if not grad_loss_next.shape == g_next.shape == g_curr.shape:
        raise ShapeError(f"td_error: {grad_loss_next.shape}, {g_next.shape}, {g_curr.shape}")
    delta = batch_pullback(grad_loss_next + gamma * g_next, jac_state) - g_curr
    return delta[0] if single else delta


def synth_increment(delta: np.ndarray, trace: EligibilityTrace) -> np.ndarray:
    """delta^T e summed over the batch, shape (n, n + 1)"""
    e = trace.values if trace.batched else trace.values[np.newaxis]
    d = delta if delta.ndim == 2 else delta[np.newaxis]
    if d.shape != e.shape[:2]:
        raise ShapeError(f"synth_increment: delta {delta.shape}, trace {trace.values.shape}")
    return batch_trace_contract(d[:, np.newaxis, :], e)[:, 0].sum(axis=0)


def apply_synth_update(theta: np.ndarray, delta: np.ndarray, trace: EligibilityTrace,
                       alpha: float) -> np.ndarray:
    """theta + alpha * delta^T e as a new array; a batched increment is averaged over the batch"""
    batch = trace.values.shape[0] if trace.batched else 1
    updated = {'theta': np.array(theta, dtype=DTYPE)}
    return sgd_step(updated, {'theta': synth_increment(delta, trace) / batch}, alpha)['theta']


def _zero_grads(params: RnnParams) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors().items()}


def train_sequence(state: TrainState, episode: Episode, cfg: TrainerConfig,
                   record: bool = False) -> SequenceResult:
    """One batch of sequences through the accumulate BP(lambda) loop.

    Step order per t: trace for h_{t-1}, cell step, readout, TD error,
    theta increment, Psi increment from [dL + sg_scale g(h_t)], advance.
    Increments are summed over time, averaged over the batch and applied
    with ADAM at the end; raw_updates applies theta increments immediately.
    """
    params, synth = state.params, state.synth
    T, B = episode.length, episode.batch
    n = params.state_dim

    h_prev = np.zeros((B, n), dtype=DTYPE)
    jac_prev = np.zeros((B, n, n), dtype=DTYPE)
    trace = EligibilityTrace.zeros(n, B)
    theta_inc = np.zeros_like(synth.theta)
    psi_grads = _zero_grads(params)

    step_losses = np.zeros((T, B), dtype=DTYPE)
    predictions = []
    if record:
        states = np.zeros((T + 1, B, n), dtype=DTYPE)
        jacs = np.zeros((T + 1, B, n, n), dtype=DTYPE)
        grad_losses = np.zeros((T + 1, B, n), dtype=DTYPE)
        losses = np.zeros((T + 1, B), dtype=DTYPE)
        synth_values = np.zeros((T + 1, B, n), dtype=DTYPE)
        synth_values[0] = predict(h_prev, synth).value

    for t in range(1, T + 1):
        trace = update_trace(trace, jac_prev, grad_theta(h_prev), cfg.gamma, cfg.lam,
                             cfg.structured_trace)
        out = guarded_step(episode.inputs[t - 1], h_prev, params, t, step_losses)
        h_t = out.next_state
        ro = cells.readout(episode.head, h_t, params, episode.targets[t - 1])
        if not np.all(np.isfinite(ro.loss)):
            raise DivergenceError("non-finite loss", step=t,
                                  last_metrics={'loss': float(step_losses[:t - 1].sum(axis=0).mean())})
        step_losses[t - 1] = ro.loss
        predictions.append(ro.prediction)

        g_t = predict(h_t, synth, is_final=(t == T), sg_scale=cfg.sg_scale)
        g_prev = predict(h_prev, synth)
        delta = td_error(ro.grad_state, g_t.value, out.jac_state, g_prev.value, cfg.gamma)
        if cfg.raw_updates:
            synth.theta = apply_synth_update(synth.theta, delta, trace, cfg.synth_lr)
        else:
            theta_inc += synth_increment(delta, trace)

        if cfg.train_rnn:
            for k, v in cells.vjp_params(out, ro.grad_state + g_t.scaled, params).items():
                psi_grads[k] += v
            for k, v in ro.grad_params.items():
                psi_grads[k] += v

        if record:
            states[t], jacs[t], grad_losses[t], losses[t] = h_t, out.jac_state, ro.grad_state, ro.loss
            synth_values[t] = g_t.value
        h_prev, jac_prev = h_t, out.jac_state

    if not cfg.raw_updates:
        adam_step({'theta': synth.theta}, {'theta': -theta_inc / B}, state.synth_opt)
    if cfg.train_rnn:
        adam_step(params.tensors(), {k: v / B for k, v in psi_grads.items()}, state.rnn_opt)
        params.mark_updated()

    result = SequenceResult(step_losses, predictions)
    if record:
        result.trajectory = TrajectoryRecord(states, jacs, grad_losses, losses,
                                             np.asarray(episode.inputs, dtype=DTYPE))
        result.synth_values = synth_values
    return result


@dataclass
class ReplayResult:
    """Raw-mode BP(lambda) on a fixed trajectory"""
    thetas: List[np.ndarray] = field(default_factory=list)   # theta_0 .. theta_T
    traces: List[np.ndarray] = field(default_factory=list)   # e_0 .. e_{T-1}
    deltas: List[np.ndarray] = field(default_factory=list)   # delta_0 .. delta_{T-1}


def replay_bp_lambda(traj: TrajectoryRecord, theta0: np.ndarray, alpha: float, gamma: float,
                     lam: float, structured: bool = True) -> ReplayResult:
    """Per-step updates theta_{t+1} = theta_t + alpha delta_t^T e_t, no optimiser.

    The batch increment is averaged over trajectories. Used by the theory checks
    and by fixed-RNN experiments where the states do not depend on theta.
    """
    T, B, n = traj.length, traj.batch, traj.state_dim
    synth = SynthParams(np.array(theta0, dtype=DTYPE))
    trace = EligibilityTrace.zeros(n, B)
    result = ReplayResult(thetas=[synth.theta.copy()])
    for t in range(1, T + 1):
        trace = update_trace(trace, traj.jacobians[t - 1], grad_theta(traj.states[t - 1]),
                             gamma, lam, structured)
        g_t = predict(traj.states[t], synth, is_final=(t == T)).value
        g_prev = predict(traj.states[t - 1], synth).value
        delta = td_error(traj.grad_losses[t], g_t, traj.jacobians[t], g_prev, gamma)
        synth.theta = apply_synth_update(synth.theta, delta, trace, alpha)
        result.thetas.append(synth.theta.copy())
        result.traces.append(trace.values.copy())
        result.deltas.append(delta)
    return result
