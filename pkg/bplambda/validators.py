# bplambda/validators.py v1.0
"""Experiment-config validation with per-check result dicts"""

from dataclasses import fields
from typing import Any, Dict, List

from .dataclasses import LEARNER_KINDS, TASK_KINDS, ExperimentConfig, TrainerConfig

LAMBDA_LEARNERS = ('bp_lambda', 'offline_lambda_sg', 'online_lambda_sg')
WINDOW_LEARNERS = ('nstep_sg', 'tbptt')
TOP_LEVEL_KEYS = {f.name for f in fields(ExperimentConfig)}
TRAINER_KEYS = {f.name for f in fields(TrainerConfig)}


def _say(message: str) -> None:
    from .config import VERBOSE
    if VERBOSE:
        print(message)


def _report(name: str, errors: List[str], warnings: List[str], extra: Dict[str, Any]) -> Dict[str, Any]:
    result = {'errors': errors, 'warnings': warnings, 'error_count': len(errors),
              'warning_count': len(warnings), 'is_valid': not errors, **extra}
    if errors:
        _say(f"❌ {name}: {len(errors)} error(s)")
        for e in errors[:5]:
            _say(f"   - {e}")
    else:
        _say(f"✅ {name} OK")
    for w in warnings[:5]:
        _say(f"⚠️  {w}")
    return result


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_task(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Task kind and its length parameters"""
    errors: List[str] = []
    task = raw.get('task')
    if not isinstance(task, dict):
        return _report("task", ["missing 'task' table"], [], {'kind': None})
    kind = task.get('kind')
    if kind not in TASK_KINDS:
        errors.append(f"unknown task kind '{kind}' (expected one of {', '.join(TASK_KINDS)})")
    if kind == 'toy_plastic':
        lengths = task.get('lengths', [task.get('T', 10)])
        bad = [T for T in lengths if not isinstance(T, int) or T <= 0 or T % 10 or T > 100]
        if bad:
            errors.append(f"toy_plastic lengths must be multiples of 10 in [10, 100]: {bad}")
    if kind == 'copy_repeat':
        for key in ('N', 'R'):
            value = task.get(key, 1)
            if not isinstance(value, int) or value < 1:
                errors.append(f"copy_repeat {key}={value} must be an integer >= 1")
    if kind == 'toy_fixed':
        n_pairs = task.get('n_pairs', 1)
        if not isinstance(n_pairs, int) or n_pairs < 1:
            errors.append(f"toy_fixed n_pairs={n_pairs} must be an integer >= 1")
    return _report("task", errors, [], {'kind': kind})


def validate_learner(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Learner kind plus lambda or truncation length where the learner needs one"""
    errors: List[str] = []
    learner = raw.get('learner')
    if not isinstance(learner, dict):
        return _report("learner", ["missing 'learner' table"], [], {'kind': None})
    kind = learner.get('kind')
    if kind not in LEARNER_KINDS:
        errors.append(f"unknown learner '{kind}' (expected one of {', '.join(LEARNER_KINDS)})")
    if kind in LAMBDA_LEARNERS:
        lam = learner.get('lam')
        if not _is_number(lam) or not 0.0 <= lam <= 1.0:
            errors.append(f"{kind} needs lam in [0, 1], got {lam}")
    if kind in WINDOW_LEARNERS:
        n = learner.get('n')
        if not isinstance(n, int) or n < 1:
            errors.append(f"{kind} needs an integer truncation n >= 1, got {n}")
    return _report("learner", errors, [], {'kind': kind})


def validate_trainer(raw: Dict[str, Any]) -> Dict[str, Any]:
    errors: List[str] = []
    warnings: List[str] = []
    trainer = raw.get('trainer', {})
    if not isinstance(trainer, dict):
        return _report("trainer", ["'trainer' must be a table"], [], {})
    unknown = sorted(set(trainer) - TRAINER_KEYS)
    if unknown:
        errors.append(f"unknown trainer keys: {unknown}")
    if 'synth_lr' not in trainer:
        errors.append("trainer.synth_lr is required")
    for key in ('synth_lr', 'rnn_lr'):
        if key in trainer and (not _is_number(trainer[key]) or trainer[key] <= 0):
            errors.append(f"trainer.{key}={trainer[key]} must be positive")
    for key in ('gamma', 'lam'):
        if key in trainer and (not _is_number(trainer[key]) or not 0.0 <= trainer[key] <= 1.0):
            errors.append(f"trainer.{key}={trainer[key]} outside [0, 1]")
    if 'batch_size' in trainer and (not isinstance(trainer['batch_size'], int)
                                    or trainer['batch_size'] < 1):
        errors.append(f"trainer.batch_size={trainer['batch_size']} must be >= 1")
    if 'lam' in trainer and 'lam' in raw.get('learner', {}):
        warnings.append("trainer.lam is overridden by learner.lam")
    return _report("trainer", errors, warnings, {})


def validate_run(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Epochs, batches, seeds and unknown top-level keys"""
    errors: List[str] = []
    warnings: List[str] = []
    for key in ('units', 'epochs', 'batches_per_epoch'):
        if key in raw and (not isinstance(raw[key], int) or raw[key] < 1):
            errors.append(f"{key}={raw[key]} must be an integer >= 1")
    seeds = raw.get('seeds', [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        errors.append(f"seeds must be a non-empty list of integers, got {seeds}")
    elif len(set(seeds)) != len(seeds):
        errors.append(f"duplicate seeds: {seeds}")
    budget = raw.get('budget_seconds')
    if budget is not None and (not _is_number(budget) or budget <= 0):
        errors.append(f"budget_seconds={budget} must be positive")
    unknown = sorted(set(raw) - TOP_LEVEL_KEYS)
    if unknown:
        warnings.append(f"ignored top-level keys: {unknown}")
    return _report("run", errors, warnings, {'seed_count': len(seeds) if isinstance(seeds, list) else 0})


def run_all_validations(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Run every config check and aggregate into a summary"""
    _say("\n" + "=" * 80)
    _say("🔍 CONFIG VALIDATION")
    _say("=" * 80)

    results = {}
    _say("\n[1/4] Task...")
    results['task'] = validate_task(raw)
    _say("\n[2/4] Learner...")
    results['learner'] = validate_learner(raw)
    _say("\n[3/4] Trainer...")
    results['trainer'] = validate_trainer(raw)
    _say("\n[4/4] Run settings...")
    results['run'] = validate_run(raw)

    errors = [e for r in results.values() for e in r['errors']]
    warning_count = sum(r['warning_count'] for r in results.values())
    results['summary'] = {
        'error_count': len(errors),
        'warning_count': warning_count,
        'errors': errors,
        'is_valid': not errors,
        'has_warnings': warning_count > 0,
    }

    _say("\n" + "=" * 80)
    _say("📊 VALIDATION SUMMARY:")
    _say(f"   Errors: {len(errors)}")
    _say(f"   Warnings: {warning_count}")
    _say("=" * 80 + "\n")
    return results

