import pytest
from bplambda.validators import (
    run_all_validations,
    validate_learner,
    validate_run,
    validate_task,
    validate_trainer,
)

def test_validate_task():
    assert validate_task({'task': {'kind': 'toy_fixed'}})['is_valid'] is True
    result = validate_task({'task': {'kind': 'toy_plastic', 'lengths': [10, 25, 200]}})
    assert result['is_valid'] is False
    assert '25' in result['errors'][0]
    assert validate_task({'task': {'kind': 'copy_repeat', 'N': 0}})['error_count'] == 1
    assert validate_task({})['is_valid'] is False

def test_validate_learner():
    assert validate_learner({'learner': {'kind': 'oracle'}})['is_valid'] is True
    assert validate_learner({'learner': {'kind': 'bp_lambda', 'lam': 1.5}})['is_valid'] is False
    assert validate_learner({'learner': {'kind': 'tbptt'}})['is_valid'] is False
    assert validate_learner({'learner': {'kind': 'nstep_sg', 'n': 3}})['is_valid'] is True
    assert validate_learner({'learner': {'kind': 'rtrl'}})['is_valid'] is False

def test_validate_trainer():
    assert validate_trainer({'trainer': {'synth_lr': 1e-4}})['is_valid'] is True
    result = validate_trainer({'trainer': {'synth_lr': -1, 'gamma': 2.0, 'momentum': 0.9}})
    assert result['error_count'] == 3
    result = validate_trainer({'trainer': {'synth_lr': 1e-3, 'lam': 0.2},
                               'learner': {'lam': 0.5}})
    assert result['warning_count'] == 1

def test_validate_run():
    assert validate_run({'seeds': [0, 1, 2]})['seed_count'] == 3
    assert validate_run({'seeds': [0, 0]})['is_valid'] is False
    assert validate_run({'epochs': 0})['is_valid'] is False
    assert validate_run({'budget_seconds': -5})['is_valid'] is False
    assert validate_run({'colour': 'red'})['warning_count'] == 1

def test_run_all_validations_summary():
    raw = {'task': {'kind': 'toy_fixed'}, 'learner': {'kind': 'bp_lambda', 'lam': 1.0},
           'trainer': {'synth_lr': 1e-4}}
    results = run_all_validations(raw)
    assert results['summary']['is_valid'] is True
    assert results['summary']['errors'] == []

    raw['trainer'] = {}
    results = run_all_validations(raw)
    assert results['summary']['error_count'] == 1
    assert 'synth_lr' in results['summary']['errors'][0]
