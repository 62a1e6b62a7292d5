# bplambda/baselines.py v1.0
"""Comparison learners and synthetic-gradient target definitions.

Indexing on a TrajectoryRecord (all arrays carry a batch axis B):
    states[t]      h_t for t = 0..T, h_0 = 0
    jacobians[t]   d h_t / d h_{t-1}, jacobians[0] = 0 (unused)
    grad_losses[t] dL_t / dh_t, grad_losses[0] = 0
Bootstrap predictions P[t] are synthesiser outputs at h_t with P[T] = 0.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import cells
from .cells import RnnParams
from .dataclasses import SequenceResult, TrainerConfig, TrainState
from .errors import DivergenceError, HorizonError, NonFiniteError, ShapeError
from .optim import adam_step
from .synthesiser import SynthParams, augment, predict
from .tasks import Episode
from .tensor_core import DTYPE, batch_pullback

ThetaLike = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass
class TrajectoryRecord:
    states: np.ndarray          # (T + 1, B, n)
    jacobians: np.ndarray       # (T + 1, B, n, n)
    grad_losses: np.ndarray     # (T + 1, B, n)
    losses: np.ndarray          # (T + 1, B)
    inputs: Optional[np.ndarray] = None   # (T, B, input_dim)

    def __post_init__(self):
        T1, B, n = self.states.shape
        if self.jacobians.shape != (T1, B, n, n) or self.grad_losses.shape != (T1, B, n):
            raise ShapeError(f"trajectory arrays disagree: states {self.states.shape}, "
                             f"jacobians {self.jacobians.shape}, grads {self.grad_losses.shape}")

    @property
    def length(self) -> int:
        return self.states.shape[0] - 1

    @property
    def batch(self) -> int:
        return self.states.shape[1]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    @classmethod
    def from_arrays(cls, states, jacobians, grad_losses, losses=None) -> 'TrajectoryRecord':
        """Build a single-trajectory record from unbatched (T + 1, ...) arrays"""
        states = np.asarray(states, dtype=DTYPE)[:, np.newaxis]
        jacobians = np.asarray(jacobians, dtype=DTYPE)[:, np.newaxis]
        grad_losses = np.asarray(grad_losses, dtype=DTYPE)[:, np.newaxis]
        if losses is None:
            losses = np.zeros(states.shape[:2], dtype=DTYPE)
        else:
            losses = np.asarray(losses, dtype=DTYPE)[:, np.newaxis]
        return cls(states, jacobians, grad_losses, losses)


@dataclass
class TargetVector:
    value: np.ndarray    # (B, n)
    kind: str            # one_step | n_step(n) | lambda(l) | interim(l,H) | true_bptt


def _check_index(traj: TrajectoryRecord, t: int) -> None:
    if not 0 <= t <= traj.length:
        raise HorizonError(f"t={t} outside trajectory of length {traj.length}")


# ------------------------------------------------------------------ targets

def true_gradients(traj: TrajectoryRecord, gamma: float) -> np.ndarray:
    """All G_t at once: G_T = 0, G_{t-1} = J_t^T (l_t + gamma G_t)"""
    G = np.zeros_like(traj.states)
    for t in range(traj.length, 0, -1):
        G[t - 1] = batch_pullback(traj.grad_losses[t] + gamma * G[t], traj.jacobians[t])
    return G


def true_gradient(traj: TrajectoryRecord, t: int, gamma: float) -> TargetVector:
    _check_index(traj, t)
    return TargetVector(true_gradients(traj, gamma)[t], 'true_bptt')


def bootstrap_predictions(traj: TrajectoryRecord, theta: ThetaLike) -> np.ndarray:
    """P[t] = g(h_t; theta), zero at T.

    Given a sequence of weights, P[t] uses theta[t - 1] (theta[0] for t = 0),
    i.e. the weights in force when h_t was first bootstrapped from.
    """
    T = traj.length
    P = np.zeros_like(traj.states)
    lagged = not isinstance(theta, np.ndarray)
    for t in range(T):
        if lagged:
            k = max(t - 1, 0)
            if k >= len(theta):
                break
            weights = theta[k]
        else:
            weights = theta
        P[t] = predict(traj.states[t], SynthParams(weights)).value
    return P


def _accumulate(traj: TrajectoryRecord, t: int, n: int, P: np.ndarray, gamma: float) -> np.ndarray:
    """Backward accumulation of the n-step target for state t.

    v = l_{t+n} + gamma P_{t+n}, then pull back step by step adding the
    intermediate losses; n = 1 performs the same arithmetic as the TD error.
    """
    v = traj.grad_losses[t + n] + gamma * P[t + n]
    for k in range(t + n, t, -1):
        v = batch_pullback(v, traj.jacobians[k])
        if k - 1 > t:
            v = traj.grad_losses[k - 1] + gamma * v
    return v


def n_step_target(traj: TrajectoryRecord, t: int, n: int, theta: Optional[ThetaLike],
                  gamma: float, predictions: Optional[np.ndarray] = None) -> TargetVector:
    """n steps of backpropagated loss gradients plus a gamma^n bootstrap tail"""
    _check_index(traj, t)
    if n < 1 or t + n > traj.length:
        raise HorizonError(f"n={n} from t={t} overruns length {traj.length}")
    P = predictions if predictions is not None else bootstrap_predictions(traj, theta)
    kind = 'one_step' if n == 1 else f'n_step({n})'
    return TargetVector(_accumulate(traj, t, n, P, gamma), kind)


def lambda_weights(horizon: int, lam: float) -> Tuple[np.ndarray, float]:
    """Weights (1 - lam) lam^{n-1} for n = 1..horizon-1 and the tail lam^{horizon-1}"""
    weights = np.array([(1.0 - lam) * lam ** (m - 1) for m in range(1, horizon)], dtype=DTYPE)
    return weights, lam ** (horizon - 1)


def _weighted_target(traj: TrajectoryRecord, t: int, horizon: int, lam: float,
                     P: np.ndarray, gamma: float) -> np.ndarray:
    weights, tail = lambda_weights(horizon, lam)
    value = tail * _accumulate(traj, t, horizon, P, gamma)
    for m, w in enumerate(weights, start=1):
        value = value + w * _accumulate(traj, t, m, P, gamma)
    return value


def lambda_target(traj: TrajectoryRecord, t: int, lam: float, theta: Optional[ThetaLike],
                  gamma: float, predictions: Optional[np.ndarray] = None) -> TargetVector:
    """(1 - lam) sum_{n<T-t} lam^{n-1} G^(n)_t + lam^{T-t-1} G_t; zero at t = T"""
    _check_index(traj, t)
    if t == traj.length:
        return TargetVector(np.zeros_like(traj.states[t]), f'lambda({lam:g})')
    P = predictions if predictions is not None else bootstrap_predictions(traj, theta)
    return TargetVector(_weighted_target(traj, t, traj.length - t, lam, P, gamma),
                        f'lambda({lam:g})')


def interim_lambda_target(traj: TrajectoryRecord, k: int, lam: float, horizon: int,
                          theta: Optional[ThetaLike], gamma: float,
                          predictions: Optional[np.ndarray] = None) -> TargetVector:
    """The lambda target cut at horizon H with tail lam^{H-k-1} G^(H-k)_k"""
    if not 0 <= k < horizon <= traj.length:
        raise HorizonError(f"interim target needs 0 <= k < H <= T, got k={k}, H={horizon}")
    P = predictions if predictions is not None else bootstrap_predictions(traj, theta)
    return TargetVector(_weighted_target(traj, k, horizon - k, lam, P, gamma),
                        f'interim({lam:g},{horizon})')


def lambda_targets_recursive(traj: TrajectoryRecord, lam: float, P: np.ndarray,
                             gamma: float) -> np.ndarray:
    """G^lam_t = J^T (l_{t+1} + gamma lam G^lam_{t+1} + gamma (1 - lam) P_{t+1}) for all t"""
    G = np.zeros_like(traj.states)
    for t in range(traj.length - 1, -1, -1):
        inner = (traj.grad_losses[t + 1] + gamma * lam * G[t + 1]
                 + gamma * (1.0 - lam) * P[t + 1])
        G[t] = batch_pullback(inner, traj.jacobians[t + 1])
    return G


def regression_increment(target: np.ndarray, h: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """(v - g(h; theta)) [h | 1]^T summed over the batch"""
    z = augment(h)
    residual = target - z @ theta.T
    return residual.T @ z


# ------------------------------------------------------------------ lambda-SG

def offline_lambda_sg_epoch(trajs: Sequence[TrajectoryRecord], theta: np.ndarray, alpha: float,
                            lam: float, gamma: float) -> np.ndarray:
    """Regression of every state onto its lambda target, applied after each sequence.

    Targets and predictions use the weights held at the start of that sequence.
    """
    theta = np.array(theta, dtype=DTYPE)
    for traj in trajs:
        P = bootstrap_predictions(traj, theta)
        inc = np.zeros_like(theta)
        for t in range(traj.length):
            v = lambda_target(traj, t, lam, theta, gamma, predictions=P).value
            inc += regression_increment(v, traj.states[t], theta)
        theta = theta + alpha * inc / traj.batch
    return theta


def online_lambda_sg_step(traj: TrajectoryRecord, horizon: int, theta_init: np.ndarray,
                          finals: Sequence[np.ndarray], alpha: float, lam: float,
                          gamma: float) -> np.ndarray:
    """Weights at the end of horizon H: restart from theta_init and update k = 0..H-1.

    finals[j] holds the end weights of horizon j (finals[0] = theta_init); the
    bootstrap at state j uses finals[j - 1].
    """
    if len(finals) < horizon:
        raise HorizonError(f"horizon {horizon} needs {horizon} earlier end weights, "
                           f"got {len(finals)}")
    P = bootstrap_predictions(traj, list(finals[:horizon]))
    theta = np.array(theta_init, dtype=DTYPE)
    for k in range(horizon):
        v = interim_lambda_target(traj, k, lam, horizon, None, gamma, predictions=P).value
        theta = theta + alpha * regression_increment(v, traj.states[k], theta) / traj.batch
    return theta


def online_lambda_sg_run(traj: TrajectoryRecord, theta_init: np.ndarray, alpha: float,
                         lam: float, gamma: float) -> List[np.ndarray]:
    """[theta_0, theta_1, .., theta_T] where theta_H ends horizon H. O(T^2) work."""
    finals = [np.array(theta_init, dtype=DTYPE)]
    for horizon in range(1, traj.length + 1):
        finals.append(online_lambda_sg_step(traj, horizon, theta_init, finals, alpha, lam, gamma))
    return finals


# ------------------------------------------------------------------ forward passes

def _zero_grads(params: RnnParams) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors().items()}


def _last_good(step_losses: np.ndarray, t: int) -> Dict[str, float]:
    return {'loss': float(step_losses[:t - 1].sum(axis=0).mean())}


def guarded_step(x: np.ndarray, h: np.ndarray, params: RnnParams, t: int,
                 step_losses: np.ndarray) -> cells.StepOutput:
    """cells.step with a non-finite state reported as divergence at step t"""
    try:
        return cells.step(x, h, params)
    except NonFiniteError as e:
        raise DivergenceError(str(e), step=t, last_metrics=_last_good(step_losses, t)) from e


def _divergence_guard(loss: np.ndarray, t: int, step_losses: np.ndarray) -> None:
    if not np.all(np.isfinite(loss)):
        raise DivergenceError("non-finite loss", step=t, last_metrics=_last_good(step_losses, t))


def forward_pass(params: RnnParams, episode: Episode, synth: Optional[SynthParams] = None,
                 sg_scale: float = 1.0, collect_grads: bool = False
                 ) -> Tuple[TrajectoryRecord, SequenceResult, Dict[str, np.ndarray]]:
    """Run the cell over an episode and record the trajectory.

    With collect_grads the Psi gradient of [dL_t + sg_scale g(h_t)] is
    accumulated per step, the same non-BPTT signal BP(lambda) uses.
    """
    T, B, n = episode.length, episode.batch, params.state_dim
    states = np.zeros((T + 1, B, n), dtype=DTYPE)
    jacs = np.zeros((T + 1, B, n, n), dtype=DTYPE)
    grad_losses = np.zeros((T + 1, B, n), dtype=DTYPE)
    losses = np.zeros((T + 1, B), dtype=DTYPE)
    step_losses = np.zeros((T, B), dtype=DTYPE)
    predictions = []
    grads = _zero_grads(params)

    for t in range(1, T + 1):
        out = guarded_step(episode.inputs[t - 1], states[t - 1], params, t, step_losses)
        ro = cells.readout(episode.head, out.next_state, params, episode.targets[t - 1])
        _divergence_guard(ro.loss, t, step_losses)
        states[t], jacs[t], grad_losses[t], losses[t] = (out.next_state, out.jac_state,
                                                         ro.grad_state, ro.loss)
        step_losses[t - 1] = ro.loss
        predictions.append(ro.prediction)
        if collect_grads:
            adjoint = ro.grad_state
            if synth is not None:
                adjoint = adjoint + predict(out.next_state, synth, is_final=(t == T),
                                            sg_scale=sg_scale).scaled
            for k, v in cells.vjp_params(out, adjoint, params).items():
                grads[k] += v
            for k, v in ro.grad_params.items():
                grads[k] += v

    traj = TrajectoryRecord(states, jacs, grad_losses, losses,
                            np.asarray(episode.inputs, dtype=DTYPE))
    return traj, SequenceResult(step_losses, predictions, trajectory=traj), grads


def record_trajectory(params: RnnParams, episode: Episode) -> TrajectoryRecord:
    return forward_pass(params, episode)[0]


def _apply(state: TrainState, cfg: TrainerConfig, psi_grads: Dict[str, np.ndarray],
           theta_inc: Optional[np.ndarray], batch: int) -> None:
    if theta_inc is not None:
        adam_step({'theta': state.synth.theta}, {'theta': -theta_inc / batch}, state.synth_opt)
    if cfg.train_rnn:
        adam_step(state.params.tensors(), {k: v / batch for k, v in psi_grads.items()},
                  state.rnn_opt)
        state.params.mark_updated()


def lambda_sg_train(state: TrainState, episode: Episode, cfg: TrainerConfig,
                    online: bool = False) -> SequenceResult:
    """Offline or online lambda-SG for theta; Psi gets the BP(lambda) local update.

    Offline: the summed regression increment goes through ADAM. Online: the
    O(T^2) horizon recursion runs with raw steps of size synth_lr.
    """
    synth_start = state.synth.copy()
    traj, result, grads = forward_pass(state.params, episode, synth_start, cfg.sg_scale,
                                       collect_grads=cfg.train_rnn)
    if online:
        state.synth.theta = online_lambda_sg_run(traj, synth_start.theta, cfg.synth_lr,
                                                 cfg.lam, cfg.gamma)[-1]
        _apply(state, cfg, grads, None, episode.batch)
    else:
        P = bootstrap_predictions(traj, synth_start.theta)
        inc = np.zeros_like(synth_start.theta)
        for t in range(traj.length):
            v = lambda_target(traj, t, cfg.lam, None, cfg.gamma, predictions=P).value
            inc += regression_increment(v, traj.states[t], synth_start.theta)
        _apply(state, cfg, grads, inc, episode.batch)
    result.synth_values = bootstrap_predictions(traj, synth_start.theta)
    return result


# ------------------------------------------------------------------ truncated BPTT

def truncation_windows(T: int, n: int) -> List[int]:
    """First window of size T mod n (when nonzero), then windows of n"""
    if not 1 <= n <= T:
        raise HorizonError(f"truncation n={n} must lie in [1, {T}]")
    rest = T % n
    return ([rest] if rest else []) + [n] * (T // n)


def truncated_bptt_gradients(params: RnnParams, episode: Episode, n: int,
                             synth: Optional[SynthParams] = None, sg_scale: float = 1.0,
                             gamma: float = 1.0):
    """Windowed reverse sweeps.

    Each window starts its backward pass from sg_scale * g(h_end) when a
    synthesiser is given (zero at the last task step), otherwise from zero;
    no adjoint crosses a window boundary. With a synthesiser every window
    also yields one regression increment for its start state onto the
    window-length n-step target.

    Returns (psi_grads, theta_inc or None, result).
    """
    T, B, n_state = episode.length, episode.batch, params.state_dim
    states = np.zeros((T + 1, B, n_state), dtype=DTYPE)
    jacs = np.zeros((T + 1, B, n_state, n_state), dtype=DTYPE)
    grad_losses = np.zeros((T + 1, B, n_state), dtype=DTYPE)
    losses = np.zeros((T + 1, B), dtype=DTYPE)
    step_losses = np.zeros((T, B), dtype=DTYPE)
    predictions = []
    grads = _zero_grads(params)
    theta_inc = None if synth is None else np.zeros_like(synth.theta)

    start = 0
    for width in truncation_windows(T, n):
        end = start + width
        outs = {}
        for t in range(start + 1, end + 1):
            out = guarded_step(episode.inputs[t - 1], states[t - 1], params, t, step_losses)
            ro = cells.readout(episode.head, out.next_state, params, episode.targets[t - 1])
            _divergence_guard(ro.loss, t, step_losses)
            states[t], jacs[t], grad_losses[t], losses[t] = (out.next_state, out.jac_state,
                                                             ro.grad_state, ro.loss)
            step_losses[t - 1] = ro.loss
            predictions.append(ro.prediction)
            for k, v in ro.grad_params.items():
                grads[k] += v
            outs[t] = out

        if synth is not None and end < T:
            adjoint = predict(states[end], synth, sg_scale=sg_scale).scaled
        else:
            adjoint = np.zeros((B, n_state), dtype=DTYPE)
        for t in range(end, start, -1):
            adjoint = adjoint + grad_losses[t]
            for k, v in cells.vjp_params(outs[t], adjoint, params).items():
                grads[k] += v
            adjoint = batch_pullback(adjoint, jacs[t])

        if synth is not None:
            window = TrajectoryRecord(states, jacs, grad_losses, losses)
            P = np.zeros_like(states)
            if end < T:
                P[end] = predict(states[end], synth).value
            v = _accumulate(window, start, width, P, gamma)
            theta_inc += regression_increment(v, states[start], synth.theta)
        start = end

    traj = TrajectoryRecord(states, jacs, grad_losses, losses,
                            np.asarray(episode.inputs, dtype=DTYPE))
    result = SequenceResult(step_losses, predictions, trajectory=traj)
    if synth is not None:
        result.synth_values = bootstrap_predictions(traj, synth.theta)
    return grads, theta_inc, result


def truncated_bptt_train(state: TrainState, episode: Episode, n: int, use_sg: bool,
                         cfg: TrainerConfig) -> SequenceResult:
    """One batch of truncated BPTT; n = 1 is no-BPTT and n = T the full-BPTT oracle"""
    grads, theta_inc, result = truncated_bptt_gradients(
        state.params, episode, n, state.synth if use_sg else None, cfg.sg_scale, cfg.gamma)
    _apply(state, cfg, grads, theta_inc, episode.batch)
    return result
