# bplambda/theory_lab.py v1.0
"""Numerical verification of the target identities and of the BP(lambda) /
online lambda-SG equivalence, plus the shared finite-difference oracle.

All checks run on frozen-Psi trajectories so every algorithm sees the same
states. Each check returns a deviation; run_verification_suite turns them
into JSON-lines records.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import cells
from .baselines import (TrajectoryRecord, bootstrap_predictions, interim_lambda_target,
                        lambda_target, lambda_targets_recursive, lambda_weights, n_step_target,
                        online_lambda_sg_run, record_trajectory, true_gradient)
from .bp_lambda import replay_bp_lambda
from .cells import CellKind, HeadKind, RnnParams, init_params
from .config import (DEGENERACY_TOL, EQUIVALENCE_ALPHAS, EQUIVALENCE_MAX_RATIO, EXACT_TOL,
                     FD_REL_TOL, FD_STEP, TARGET_TOL, TD_GAP_ALPHAS)
from .errors import NonFiniteError
from .synthesiser import grad_theta
from .tasks import Episode
from .tensor_core import DTYPE, batch_pullback


# ------------------------------------------------------------------ instances

@dataclass
class InstanceSpec:
    """A random frozen RNN, its inputs and targets, and a random nonzero theta_0"""
    cell_kind: str = 'linear'
    units: int = 5
    input_dim: int = 3
    output_dim: int = 2
    T: int = 8
    seed: int = 0
    theta_scale: float = 0.1
    recurrent_scale: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class Instance:
    spec: InstanceSpec
    params: RnnParams
    traj: TrajectoryRecord
    theta0: np.ndarray


def build_instance(spec: InstanceSpec) -> Instance:
    """MSE targets at every step so every l_t is nonzero"""
    rng = np.random.default_rng(spec.seed)
    params = init_params(CellKind(spec.cell_kind), spec.input_dim, spec.units, spec.output_dim,
                         rng, spec.recurrent_scale)
    inputs = rng.normal(size=(spec.T, 1, spec.input_dim))
    targets = [rng.normal(size=(1, spec.output_dim)) for _ in range(spec.T)]
    traj = record_trajectory(params, Episode(inputs, targets, HeadKind.MSE))
    n = params.state_dim
    theta0 = spec.theta_scale * rng.normal(size=(n, n + 1))
    return Instance(spec, params, traj, theta0)


# ------------------------------------------------------------------ finite differences

def finite_difference(fn: Callable[[np.ndarray], Any], point: Any,
                      step: float = FD_STEP) -> np.ndarray:
    """Central differences; result has shape fn(point).shape + point.shape"""
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    x = np.array(point, dtype=DTYPE)
    f0 = np.asarray(fn(x), dtype=DTYPE)
    jac = np.zeros(f0.shape + x.shape, dtype=DTYPE)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        fp = np.asarray(fn(xp), dtype=DTYPE)
        fm = np.asarray(fn(xm), dtype=DTYPE)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFiniteError(f"non-finite evaluation at coordinate {idx}")
        jac[(Ellipsis,) + idx] = (fp - fm) / (2.0 * step)
    return jac


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _random_cell(kind: CellKind, seed: int, units: int = 3, input_dim: int = 4):
    rng = np.random.default_rng(seed)
    params = init_params(kind, input_dim, units, 2, rng)
    params.b += rng.normal(scale=0.5, size=params.b.shape)
    x = rng.normal(size=input_dim)
    h = rng.normal(scale=0.5, size=params.state_dim)
    return params, x, h, rng


def jacobian_check(kind: CellKind, seed: int) -> float:
    """Relative error of the analytic d h'/d h against finite differences"""
    params, x, h, _ = _random_cell(kind, seed)
    analytic = cells.step(x, h, params).jac_state[0]
    numeric = finite_difference(lambda hh: cells.step(x, hh, params).next_state[0], h)
    return relative_error(analytic, numeric)


def vjp_check(kind: CellKind, seed: int) -> float:
    """Worst relative error over the recurrent parameter blocks"""
    params, x, h, rng = _random_cell(kind, seed)
    adjoint = rng.normal(size=params.state_dim)
    analytic = cells.vjp_params(cells.step(x, h, params), adjoint, params)
    worst = 0.0
    for key, value in params.recurrent().items():
        def fn(w, key=key):
            p = params.copy()
            setattr(p, key, w)
            return adjoint @ cells.step(x, h, p).next_state[0]
        worst = max(worst, relative_error(analytic[key], finite_difference(fn, value)))
    return worst


def readout_check(head: HeadKind, seed: int) -> float:
    """dL/dh of a readout head against finite differences of the loss"""
    params, _, h, rng = _random_cell(CellKind.TANH, seed)
    if head == HeadKind.SOFTMAX_CE:
        target = np.array([int(rng.integers(0, params.output_dim))])
    elif head == HeadKind.BITS:
        target = rng.integers(0, 2, size=(1, params.output_dim)).astype(DTYPE)
    else:
        target = rng.normal(size=(1, params.output_dim))
    analytic = cells.readout(head, h[np.newaxis], params, target).grad_state[0]
    numeric = finite_difference(
        lambda hh: cells.readout(head, hh[np.newaxis], params, target).loss[0], h)
    return relative_error(analytic, numeric)


# ------------------------------------------------------------------ target identities

def target_coherence(traj: TrajectoryRecord, theta: np.ndarray, gamma: float) -> Dict[str, float]:
    """Max deviations of the degenerate cases of the lambda target"""
    P = bootstrap_predictions(traj, theta)
    T = traj.length
    dev = {'lambda0_vs_one_step': 0.0, 'lambda1_vs_true': 0.0, 'interim_full_vs_lambda': 0.0,
           'weight_sum': 0.0}
    for t in range(T):
        lam0 = lambda_target(traj, t, 0.0, None, gamma, predictions=P).value
        one = n_step_target(traj, t, 1, None, gamma, predictions=P).value
        dev['lambda0_vs_one_step'] = max(dev['lambda0_vs_one_step'], float(np.max(np.abs(lam0 - one))))
        lam1 = lambda_target(traj, t, 1.0, None, gamma, predictions=P).value
        true = true_gradient(traj, t, gamma).value
        dev['lambda1_vs_true'] = max(dev['lambda1_vs_true'], float(np.max(np.abs(lam1 - true))))
        for lam in (0.25, 0.5, 0.9):
            full = interim_lambda_target(traj, t, lam, T, None, gamma, predictions=P).value
            ref = lambda_target(traj, t, lam, None, gamma, predictions=P).value
            dev['interim_full_vs_lambda'] = max(dev['interim_full_vs_lambda'],
                                                float(np.max(np.abs(full - ref))))
            weights, tail = lambda_weights(T - t, lam)
            dev['weight_sum'] = max(dev['weight_sum'], abs(float(weights.sum()) + tail - 1.0))
    return dev


def recursive_identity_check(traj: TrajectoryRecord, theta: np.ndarray, lam: float,
                             gamma: float) -> float:
    """Max |definitional lambda target - backward recursion| over all t"""
    P = bootstrap_predictions(traj, theta)
    recursive = lambda_targets_recursive(traj, lam, P, gamma)
    worst = 0.0
    for t in range(traj.length + 1):
        direct = lambda_target(traj, t, lam, None, gamma, predictions=P).value
        worst = max(worst, float(np.max(np.abs(direct - recursive[t]))))
    return worst


def lambda_sum_check(x: np.ndarray, lam: float) -> float:
    """sum lam^{n-1} x_n == (1-lam) sum lam^{n-1} S_n + lam^N S_N with S_n = sum_{k<=n} x_k"""
    x = np.asarray(x, dtype=DTYPE)
    N = x.shape[0]
    powers = lam ** np.arange(N)
    partial = np.cumsum(x, axis=0)
    lhs = np.tensordot(powers, x, axes=1)
    rhs = (1.0 - lam) * np.tensordot(powers, partial, axes=1) + lam ** N * partial[-1]
    return float(np.max(np.abs(lhs - rhs)))


# ------------------------------------------------------------------ trace and TD gap checks

def _pull_to(traj: TrajectoryRecord, v: np.ndarray, b: int, a: int) -> np.ndarray:
    """Pull an adjoint at h_b back to h_a"""
    for k in range(b, a, -1):
        v = batch_pullback(v, traj.jacobians[k])
    return v


def _delta_prime(traj: TrajectoryRecord, P: np.ndarray, a: int, b: int, gamma: float) -> np.ndarray:
    """TD error at b with lagged predictions, pulled back to h_a"""
    local = batch_pullback(traj.grad_losses[b + 1] + gamma * P[b + 1], traj.jacobians[b + 1]) - P[b]
    return _pull_to(traj, local, b, a)


def unrolled_trace(traj: TrajectoryRecord, t: int, gamma: float, lam: float) -> np.ndarray:
    """sum_{a<=t} (gamma lam)^{t-a} (d h_t / d h_a) grad_theta g(h_a), by brute force"""
    B, n = traj.batch, traj.state_dim
    total = np.zeros((B, n, n, n + 1), dtype=DTYPE)
    for a in range(t + 1):
        prod = np.broadcast_to(np.eye(n, dtype=DTYPE), (B, n, n)).copy()
        for k in range(a + 1, t + 1):
            prod = np.matmul(traj.jacobians[k], prod)
        dense = grad_theta(traj.states[a]).materialise()
        total += (gamma * lam) ** (t - a) * np.einsum('bij,bjkl->bikl', prod, dense)
    return total


def lemma_suite(traj: TrajectoryRecord, theta0: np.ndarray, lam: float, gamma: float,
                alpha: float) -> Dict[str, float]:
    """Deviations of the telescoping, base-case, trace-sum and trace-unroll identities,
    plus the TD-error gap (zero when alpha = 0, O(alpha) otherwise)."""
    T = traj.length
    replay = replay_bp_lambda(traj, theta0, alpha, gamma, lam)
    P = bootstrap_predictions(traj, replay.thetas)
    dev = {'telescoping': 0.0, 'base_case': 0.0, 'trace_sum': 0.0, 'trace_unroll': 0.0,
           'td_gap': 0.0}

    for a in range(T):
        base = interim_lambda_target(traj, a, lam, a + 1, None, gamma, predictions=P).value
        dev['base_case'] = max(dev['base_case'],
                               float(np.max(np.abs(base - (_delta_prime(traj, P, a, a, gamma) + P[a])))))
        running = np.zeros_like(P[a])
        for t in range(a + 1, T + 1):
            running = running + (gamma * lam) ** (t - 1 - a) * _delta_prime(traj, P, a, t - 1, gamma)
            interim_t = interim_lambda_target(traj, a, lam, t, None, gamma, predictions=P).value
            dev['trace_sum'] = max(dev['trace_sum'], float(np.max(np.abs(running - (interim_t - P[a])))))
            if t < T:
                nxt = interim_lambda_target(traj, a, lam, t + 1, None, gamma, predictions=P).value
                expected = (lam * gamma) ** (t - a) * _delta_prime(traj, P, a, t, gamma)
                dev['telescoping'] = max(dev['telescoping'],
                                         float(np.max(np.abs((nxt - interim_t) - expected))))
        for b in range(a, T):
            gap = _pull_to(traj, replay.deltas[b], b, a) - _delta_prime(traj, P, a, b, gamma)
            dev['td_gap'] = max(dev['td_gap'], float(np.max(np.abs(gap))))

    for t in range(T):
        brute = unrolled_trace(traj, t, gamma, lam)
        dev['trace_unroll'] = max(dev['trace_unroll'], float(np.max(np.abs(brute - replay.traces[t]))))
    return dev


def td_gap_scaling(instance: Instance, lam: float, gamma: float,
                   alphas: Sequence[float] = TD_GAP_ALPHAS) -> Dict[str, Any]:
    """TD-error gap at two step sizes; passes when the gap ratio is within 2x of the alpha ratio"""
    gaps = [lemma_suite(instance.traj, instance.theta0, lam, gamma, a)['td_gap'] for a in alphas]
    alpha_ratio = alphas[0] / alphas[1]
    gap_ratio = gaps[0] / gaps[1] if gaps[1] > 0 else float('inf')
    return {'alphas': list(alphas), 'gaps': gaps, 'gap_ratio': gap_ratio,
            'alpha_ratio': alpha_ratio,
            'passed': 0.5 * alpha_ratio <= gap_ratio <= 2.0 * alpha_ratio}


# ------------------------------------------------------------------ equivalence ratio

@dataclass
class RatioReport:
    alphas: List[float]
    ratios: List[float]                      # at the reported t
    per_t: List[List[float]] = field(default_factory=list)   # per alpha, t = 1..T
    condition_ok: bool = True
    lam: float = 0.0
    gamma: float = 1.0
    t: int = 0

    @property
    def non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.ratios, self.ratios[1:]))


def _ratio(theta_bp: np.ndarray, theta_lam: np.ndarray, theta0: np.ndarray) -> float:
    num = float(np.linalg.norm(theta_bp - theta_lam))
    den = float(np.linalg.norm(theta_bp - theta0))
    if den == 0.0:
        return 0.0 if num == 0.0 else float('inf')
    return num / den


def equivalence_ratio(spec: InstanceSpec, lam: float, gamma: float,
                      alphas: Sequence[float] = EQUIVALENCE_ALPHAS,
                      t: Optional[int] = None) -> RatioReport:
    """||theta_BP_t - theta_lam_t|| / ||theta_BP_t - theta_0|| for a decreasing alpha sweep.

    Both learners start from the same theta_0 on the same frozen trajectory;
    BP(lambda) runs with raw per-step updates, online lambda-SG with its
    horizon recursion. The report flags a degenerate total update (an entry
    of theta_BP_t - theta_0 within DEGENERACY_TOL of zero) instead of passing.
    """
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError(f"alpha sweep must be strictly decreasing, got {list(alphas)}")
    instance = build_instance(spec)
    T = instance.traj.length
    t = T if t is None else t
    report = RatioReport(list(alphas), [], lam=lam, gamma=gamma, t=t)
    for alpha in alphas:
        bp = replay_bp_lambda(instance.traj, instance.theta0, alpha, gamma, lam).thetas
        online = online_lambda_sg_run(instance.traj, instance.theta0, alpha, lam, gamma)
        per_t = [_ratio(bp[k], online[k], instance.theta0) for k in range(1, T + 1)]
        report.per_t.append(per_t)
        report.ratios.append(per_t[t - 1])
        if np.any(np.abs(bp[t] - instance.theta0) <= DEGENERACY_TOL):
            report.condition_ok = False
    return report


# ------------------------------------------------------------------ suite

def _record(name: str, instance: Dict[str, Any], deviation: float, tolerance: float,
            passed: Optional[bool] = None, **extra) -> Dict[str, Any]:
    if passed is None:
        passed = bool(deviation < tolerance)
    return {'name': name, 'instance': instance, 'deviation': deviation,
            'tolerance': tolerance, 'passed': bool(passed), **extra}


def run_verification_suite(seeds: Sequence[int] = range(5), quick: bool = False
                           ) -> List[Dict[str, Any]]:
    """Every check as one record: name, instance, deviation, pass flag"""
    from .config import VERBOSE
    records: List[Dict[str, Any]] = []
    seeds = list(seeds)[:2] if quick else list(seeds)

    for kind in CellKind:
        for seed in seeds:
            inst = {'cell_kind': kind.value, 'seed': seed}
            records.append(_record('jacobian_fd', inst, jacobian_check(kind, seed), FD_REL_TOL))
            records.append(_record('vjp_fd', inst, vjp_check(kind, seed), FD_REL_TOL))
    for head in HeadKind:
        for seed in seeds:
            records.append(_record('readout_fd', {'head': head.value, 'seed': seed},
                                   readout_check(head, seed), FD_REL_TOL))

    for seed in seeds:
        spec = InstanceSpec(seed=seed, units=3, T=6)
        inst = build_instance(spec)
        for gamma in (1.0, 0.9):
            for name, dev in target_coherence(inst.traj, inst.theta0, gamma).items():
                records.append(_record(f'target_{name}', {**spec.to_dict(), 'gamma': gamma},
                                       dev, TARGET_TOL))
        for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
            records.append(_record('recursive_identity', {**spec.to_dict(), 'lam': lam},
                                   recursive_identity_check(inst.traj, inst.theta0, lam, 0.9),
                                   EXACT_TOL))
            x = np.random.default_rng(seed).normal(size=(7, 3))
            records.append(_record('lambda_sum', {'seed': seed, 'lam': lam},
                                   lambda_sum_check(x, lam), EXACT_TOL))
        for lam in (0.5, 0.9):
            frozen = lemma_suite(inst.traj, inst.theta0, lam, 0.9, 0.0)
            for name, dev in frozen.items():
                records.append(_record(f'lemma_{name}', {**spec.to_dict(), 'lam': lam, 'alpha': 0.0},
                                       dev, EXACT_TOL))
            scaling = td_gap_scaling(inst, lam, 0.9)
            records.append(_record('td_gap_scaling', {**spec.to_dict(), 'lam': lam},
                                   scaling['gap_ratio'], 2.0 * scaling['alpha_ratio'],
                                   passed=scaling['passed'], gaps=scaling['gaps']))

    kinds = ('linear',) if quick else ('linear', 'tanh')
    for kind in kinds:
        for seed in seeds:
            spec = InstanceSpec(cell_kind=kind, seed=seed)
            for lam in (0.0, 0.5, 0.9, 1.0):
                report = equivalence_ratio(spec, lam, 1.0)
                inst = {**spec.to_dict(), 'lam': lam, 'alphas': report.alphas}
                if lam == 0.0:
                    passed = max(report.ratios) < 1e-12
                elif not report.condition_ok:
                    passed = None
                else:
                    passed = report.non_increasing and report.ratios[-1] < EQUIVALENCE_MAX_RATIO
                rec = _record('equivalence_ratio', inst, report.ratios[-1], EQUIVALENCE_MAX_RATIO,
                              passed=bool(passed), ratios=report.ratios,
                              condition_ok=report.condition_ok)
                if passed is None:
                    rec['passed'] = None
                    rec['note'] = 'condition violated'
                records.append(rec)

    if VERBOSE:
        failed = [r for r in records if r['passed'] is False]
        print(f"📊 Verification: {len(records)} checks, {len(failed)} failed")
        for r in failed[:10]:
            print(f"❌ {r['name']} {r['instance']}: deviation {r['deviation']:.3e}")
        if not failed:
            print("✅ All checks passed")
    return records
