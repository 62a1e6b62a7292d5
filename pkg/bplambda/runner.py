# bplambda/runner.py v1.0
"""Experiment runner: one train-batch interface for every learner, a seed
loop with optional process parallelism, per-seed CSVs and a JSON summary."""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .baselines import forward_pass, lambda_sg_train, true_gradients, truncated_bptt_train
from .bp_lambda import train_sequence
from .cells import init_params
from .config import (DESK_SCALE, PLASTIC_EPOCHS, PLASTIC_SOLVED_ERROR, PLASTIC_SOLVED_WINDOW)
from .dataclasses import ExperimentConfig, MetricRow, SequenceResult, TrainerConfig, TrainState
from .errors import DivergenceError
from .exporters import config_hash, write_metrics_csv, write_summary_json
from .tasks import (Curriculum, Episode, SeqMnistTask, Task, advance_curriculum, copy_repeat,
                    seq_mnist, toy_fixed, toy_plastic)

Learner = Callable[[TrainState, Episode, TrainerConfig, bool], SequenceResult]


def _say(message: str) -> None:
    from .config import VERBOSE
    if VERBOSE:
        print(message)


def _window(n: Optional[int], T: int) -> int:
    return max(1, min(n or 1, T))


def make_learner(kind: str, lam: Optional[float] = None, n: Optional[int] = None) -> Learner:
    """Wrap a learner behind (state, episode, cfg, record) -> SequenceResult"""
    if kind == 'bp_lambda':
        return lambda state, ep, cfg, record: train_sequence(state, ep, cfg, record)
    if kind == 'nstep_sg':
        return lambda state, ep, cfg, record: truncated_bptt_train(
            state, ep, _window(n, ep.length), True, cfg)
    if kind == 'tbptt':
        return lambda state, ep, cfg, record: truncated_bptt_train(
            state, ep, _window(n, ep.length), False, cfg)
    if kind == 'no_bptt':
        return lambda state, ep, cfg, record: truncated_bptt_train(state, ep, 1, False, cfg)
    if kind == 'oracle':
        return lambda state, ep, cfg, record: truncated_bptt_train(state, ep, ep.length, False, cfg)
    if kind == 'offline_lambda_sg':
        return lambda state, ep, cfg, record: lambda_sg_train(state, ep, cfg, online=False)
    if kind == 'online_lambda_sg':
        return lambda state, ep, cfg, record: lambda_sg_train(state, ep, cfg, online=True)
    raise KeyError(f"unknown learner '{kind}'")


# ------------------------------------------------------------------ metrics

def cosine_alignment(g_hat: np.ndarray, g_true: np.ndarray) -> Optional[float]:
    """g_hat . g / (|g_hat| |g|); None when either vector is zero"""
    a = np.asarray(g_hat, dtype=float).ravel()
    b = np.asarray(g_true, dtype=float).ravel()
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        return None
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


def alignment_by_step(result: SequenceResult, gamma: float) -> List[Optional[float]]:
    """Batch-mean cosine between synthetic and true gradients for h_1 .. h_{T-1}"""
    if result.trajectory is None or result.synth_values is None:
        return []
    traj = result.trajectory
    G = true_gradients(traj, gamma)
    row = []
    for t in range(1, traj.length):
        values = [cosine_alignment(result.synth_values[t, b], G[t, b]) for b in range(traj.batch)]
        values = [v for v in values if v is not None]
        row.append(float(np.mean(values)) if values else None)
    return row


def mean_sem(values: List[float]) -> Dict[str, Optional[float]]:
    """Mean and standard error over seeds; sem is None for a single seed"""
    values = [v for v in values if v is not None]
    if not values:
        return {'mean': None, 'sem': None, 'n': 0}
    arr = np.asarray(values, dtype=float)
    sem = float(np.std(arr, ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
    return {'mean': float(arr.mean()), 'sem': sem, 'n': len(arr)}


# ------------------------------------------------------------------ seed runs

def apply_desk_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Per-task caps on epochs, batches, lengths, images and wall clock; units are kept"""
    if not config.desk_scale:
        return config
    caps = DESK_SCALE.get(config.task['kind'], {})
    task = dict(config.task)
    changes: Dict[str, Any] = {'task': task}
    for key in ('epochs', 'batches_per_epoch'):
        if key in caps:
            changes[key] = min(getattr(config, key), caps[key])
    if 'budget_seconds' in caps:
        changes['budget_seconds'] = min(config.budget_seconds or caps['budget_seconds'],
                                        caps['budget_seconds'])
    if 'max_length' in caps and 'lengths' in task:
        task['lengths'] = [T for T in task['lengths'] if T <= caps['max_length']]
    if 'train_images' in caps:
        task['train_limit'] = min(task.get('train_limit') or caps['train_images'],
                                  caps['train_images'])
        task['eval_limit'] = min(task.get('eval_limit') or caps['eval_images'],
                                 caps['eval_images'])
        # every epoch is one full pass over the training subset
        changes['batches_per_epoch'] = max(1, task['train_limit'] // config.trainer.batch_size)
    return replace(config, **changes)


def build_task(config: ExperimentConfig, seed: int, T: Optional[int] = None,
               curriculum: Optional[Curriculum] = None) -> Task:
    task = config.task
    kind = task['kind']
    if kind == 'toy_fixed':
        return toy_fixed(seed, task.get('n_pairs', 1))
    if kind == 'toy_plastic':
        return toy_plastic(T or task.get('T', 10), seed)
    if kind == 'copy_repeat':
        level = curriculum or Curriculum(task.get('N', 1), task.get('R', 1))
        return copy_repeat(level.N, level.R, seed)
    return seq_mnist(config.data_dir, task.get('train_limit'), task.get('eval_limit'),
                     task.get('validation_size', 10000))


def _trainer_for(config: ExperimentConfig, seed: int) -> TrainerConfig:
    cfg = replace(config.trainer, seed=seed)
    if config.learner.lam is not None:
        cfg = replace(cfg, lam=config.learner.lam)
    return cfg


def _train_epochs(config: ExperimentConfig, task: Task, seed: int, rows: List[MetricRow],
                  epochs: int, on_batch: Optional[Callable] = None) -> Dict[str, Any]:
    """Shared epoch loop; on_batch(metrics) may return a replacement task"""
    rng = np.random.default_rng(seed)
    cfg = _trainer_for(config, seed)
    params = init_params(task.cell_kind, task.input_dim, config.units, task.output_dim, rng)
    state = TrainState.create(params, cfg)
    learner = make_learner(config.learner.kind, config.learner.lam, config.learner.n)
    record = config.log_alignment

    epoch_errors: List[float] = []
    last: Dict[str, Any] = {}
    started = time.monotonic()
    for epoch in range(epochs):
        errors = []
        batches = task.epoch_batches(rng, cfg.batch_size, config.batches_per_epoch)
        b = -1
        for episode in iter(lambda: next(batches, None), None):
            b += 1
            try:
                result = learner(state, episode, cfg, record)
            except DivergenceError as e:
                e.last_metrics = {**last, **e.last_metrics, 'epoch': epoch, 'batch': b}
                raise
            metrics = task.batch_metrics(episode, result.predictions, result.step_losses)
            row = MetricRow(epoch, b, result.loss, metrics.get('task_error'),
                            metrics.get('accuracy'))
            if record:
                row.alignment = alignment_by_step(result, cfg.gamma)
            if on_batch is not None:
                harder = on_batch(metrics, row)
                if harder is not None:
                    task = harder
                    batches = task.epoch_batches(rng, cfg.batch_size,
                                                 config.batches_per_epoch - b - 1)
            rows.append(row)
            last = {'loss': row.loss, 'task_error': row.task_error, 'accuracy': row.accuracy}
            if metrics.get('task_error') is not None:
                errors.append(metrics['task_error'])
            if config.budget_seconds and time.monotonic() - started > config.budget_seconds:
                _say(f"⏱️  Budget of {config.budget_seconds}s reached at epoch {epoch}, batch {b}")
                return {'state': state, 'epoch_errors': epoch_errors, 'last': last}
        if errors:
            epoch_errors.append(float(np.mean(errors)))
        if config.task['kind'] == 'seq_mnist':
            last.update(evaluate_mnist(state, task, cfg.batch_size, epoch, last))
        from .config import DEBUG
        if DEBUG:
            _say(f"   epoch {epoch}: {last}")
    return {'state': state, 'epoch_errors': epoch_errors, 'last': last}


def evaluate(state: TrainState, task: SeqMnistTask, split: str, batch_size: int) -> float:
    correct, total = 0, 0
    for episode in task.eval_batches(split, batch_size):
        _, result, _ = forward_pass(state.params, episode)
        correct += task.batch_metrics(episode, result.predictions, result.step_losses)['correct']
        total += episode.batch
    return correct / total if total else float('nan')


def evaluate_mnist(state: TrainState, task: SeqMnistTask, batch_size: int, epoch: int,
                   last: Dict[str, Any]) -> Dict[str, Any]:
    """Validation and test accuracy; keep the test accuracy of the best validation epoch"""
    valid = evaluate(state, task, 'valid', batch_size)
    test = evaluate(state, task, 'test', batch_size)
    best = last.get('best_valid_accuracy')
    update = {'valid_accuracy': valid, 'test_accuracy': test}
    if best is None or valid > best:
        update.update({'best_valid_accuracy': valid, 'best_epoch': epoch,
                       'test_at_best_valid': test})
    _say(f"📊 epoch {epoch}: valid {valid:.4f}, test {test:.4f}")
    return update


def run_seed(config: ExperimentConfig, seed: int, out_dir: str) -> Dict[str, Any]:
    """Train one seed, write its CSV, return its final metrics"""
    config = apply_desk_scale(config)
    header_config = {k: v for k, v in config.to_dict().items()
                     if k not in ('out', 'data_dir', 'seeds')}
    rows: List[MetricRow] = []
    kind = config.task['kind']
    started = time.monotonic()
    csv_path = os.path.join(out_dir, f"seed_{seed}.csv")
    final: Dict[str, Any] = {'seed': seed}
    alignment_steps = 0

    try:
        if kind == 'toy_plastic' and 'lengths' in config.task:
            final.update(_plastic_sweep(config, seed, rows))
        elif kind == 'copy_repeat':
            final.update(_copy_curriculum(config, seed, rows))
        else:
            task = build_task(config, seed)
            if config.log_alignment:
                alignment_steps = task.length - 1
            out = _train_epochs(config, task, seed, rows, config.epochs)
            final.update(out['last'])
            if out['epoch_errors']:
                final['final_task_error'] = out['epoch_errors'][-1]
    except DivergenceError as e:
        write_metrics_csv(csv_path, rows, header_config, seed, alignment_steps)
        e.last_metrics = {'seed': seed, **e.last_metrics}
        raise

    write_metrics_csv(csv_path, rows, header_config, seed, alignment_steps)
    if rows:
        final['final_loss'] = rows[-1].loss
    final['csv'] = csv_path
    final['wall_clock_seconds'] = time.monotonic() - started
    return final


def _plastic_sweep(config: ExperimentConfig, seed: int, rows: List[MetricRow]) -> Dict[str, Any]:
    """Train a fresh model per length; solved T is the largest T solved along with all smaller T"""
    epochs = config.epochs or PLASTIC_EPOCHS
    window = min(PLASTIC_SOLVED_WINDOW, epochs)
    per_length: Dict[str, float] = {}
    solved_T = 0
    chain_intact = True
    for T in sorted(config.task['lengths']):
        task = build_task(config, seed, T=T)
        length_rows: List[MetricRow] = []
        out = _train_epochs(config, task, seed, length_rows, epochs)
        for row in length_rows:
            row.solved_length = T
        rows.extend(length_rows)
        errors = out['epoch_errors'][-window:]
        err = float(np.mean(errors)) if errors else float('inf')
        per_length[str(T)] = err
        chain_intact = chain_intact and err < PLASTIC_SOLVED_ERROR
        if chain_intact:
            solved_T = T
        _say(f"{'✅' if err < PLASTIC_SOLVED_ERROR else '❌'} T={T}: error {err:.4f}")
    return {'solved_length': solved_T, 'error_by_length': per_length}


def _copy_curriculum(config: ExperimentConfig, seed: int, rows: List[MetricRow]) -> Dict[str, Any]:
    level = {'curriculum': Curriculum(config.task.get('N', 1), config.task.get('R', 1))}

    def on_batch(metrics: Dict[str, Any], row: MetricRow) -> Optional[Task]:
        current = level['curriculum']
        nxt = advance_curriculum(current, bool(metrics.get('solved')))
        level['curriculum'] = nxt
        row.solved_length = nxt.solved_length
        if nxt is not current:
            _say(f"✅ Solved N={current.N}, R={current.R} (T={current.length})")
            return build_task(config, seed, curriculum=nxt)
        return None

    out = _train_epochs(config, build_task(config, seed), seed, rows, config.epochs, on_batch)
    final = level['curriculum']
    return {'solved_length': final.solved_length, 'N': final.N, 'R': final.R, **out['last']}


# ------------------------------------------------------------------ experiment

SUMMARY_METRICS = ('final_loss', 'final_task_error', 'task_error', 'accuracy', 'solved_length',
                   'test_at_best_valid', 'best_valid_accuracy')


def summarise(config: ExperimentConfig, per_seed: List[Dict[str, Any]]) -> Dict[str, Any]:
    summary = {
        'name': config.name,
        'learner': config.learner.label,
        'config_hash': config_hash({k: v for k, v in config.to_dict().items()
                                    if k not in ('out', 'data_dir', 'seeds')}),
        'seeds': [r['seed'] for r in per_seed],
        'per_seed': per_seed,
        'metrics': {},
    }
    for key in SUMMARY_METRICS:
        values = [r.get(key) for r in per_seed]
        if any(v is not None for v in values):
            summary['metrics'][key] = mean_sem(values)
    return summary


def _seed_job(args):
    config, seed, out_dir = args
    return run_seed(config, seed, out_dir)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> Dict[str, Any]:
    """All seeds of one config; returns the summary that is also written to disk"""
    out_dir = os.path.join(config.out, config.name)
    os.makedirs(out_dir, exist_ok=True)
    _say("=" * 80)
    _say(f"🚀 {config.name}: {config.learner.label} on {config.task['kind']}, "
         f"seeds {config.seeds}")
    _say("=" * 80)

    jobs = [(config, seed, out_dir) for seed in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(_seed_job, jobs))
    else:
        per_seed = [_seed_job(job) for job in jobs]

    summary = summarise(config, per_seed)
    write_summary_json(os.path.join(out_dir, 'summary.json'), summary)
    for key, stats in summary['metrics'].items():
        sem = f" ± {stats['sem']:.4g}" if stats['sem'] is not None else ""
        _say(f"📊 {key}: {stats['mean']:.4g}{sem} (n={stats['n']})")
    return summary
