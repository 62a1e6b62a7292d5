import json
import os
import struct
import numpy as np
import pytest
from bplambda.dataclasses import LEARNER_KINDS, ExperimentConfig, LearnerSpec, TrainerConfig
from bplambda.exporters import read_metrics_csv
from bplambda.loaders import load_experiment_config
from bplambda.runner import (
    apply_desk_scale,
    cosine_alignment,
    make_learner,
    mean_sem,
    run_experiment,
    run_seed,
)

def toy_config(out, **kwargs):
    base = dict(name='toy', task={'kind': 'toy_fixed'},
                learner=LearnerSpec('bp_lambda', lam=1.0),
                trainer=TrainerConfig(synth_lr=1e-3, batch_size=2, train_rnn=False),
                units=4, epochs=2, batches_per_epoch=3, seeds=[0, 1], out=str(out),
                log_alignment=True)
    base.update(kwargs)
    return ExperimentConfig(**base)

def test_cosine_alignment():
    v = np.array([1.0, -2.0, 0.5])
    assert cosine_alignment(v, v) == pytest.approx(1.0)
    assert cosine_alignment(v, -v) == pytest.approx(-1.0)
    assert cosine_alignment([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0 / np.sqrt(2.0))
    assert cosine_alignment(np.zeros(3), v) is None

def test_mean_sem():
    stats = mean_sem([1.0, 2.0, 3.0])
    assert stats['mean'] == pytest.approx(2.0)
    assert stats['sem'] == pytest.approx(1.0 / np.sqrt(3.0))
    assert mean_sem([4.0])['sem'] is None
    assert mean_sem([None])['n'] == 0

def test_unknown_learner():
    with pytest.raises(KeyError):
        make_learner('rtrl')

@pytest.mark.parametrize("kind", LEARNER_KINDS)
def test_every_learner_runs_a_seed(tmp_path, kind):
    config = toy_config(tmp_path, learner=LearnerSpec(kind, lam=0.5, n=3), epochs=1,
                        batches_per_epoch=2, seeds=[0],
                        trainer=TrainerConfig(synth_lr=1e-3, batch_size=2))
    final = run_seed(config, 0, str(tmp_path))
    assert np.isfinite(final['final_loss'])
    rows = read_metrics_csv(final['csv'])['rows']
    assert [r['batch'] for r in rows] == ['0', '1']
    assert 'align_t9' in rows[0]

def test_run_experiment_writes_csvs_and_summary(tmp_path):
    summary = run_experiment(toy_config(tmp_path))
    out_dir = tmp_path / 'toy'
    assert sorted(os.listdir(out_dir)) == ['seed_0.csv', 'seed_1.csv', 'summary.json']
    with open(out_dir / 'summary.json', encoding='utf-8') as f:
        saved = json.load(f)
    assert saved['seeds'] == [0, 1]
    assert saved['learner'] == 'bp_lambda(1)'
    finals = [r['final_loss'] for r in saved['per_seed']]
    stats = saved['metrics']['final_loss']
    assert stats['mean'] == pytest.approx(np.mean(finals))
    assert stats['sem'] == pytest.approx(np.std(finals, ddof=1) / np.sqrt(2))
    assert summary['config_hash'] == saved['config_hash']

def test_alignment_defined_once_synthesiser_moves(tmp_path):
    config = toy_config(tmp_path, epochs=1, batches_per_epoch=5, seeds=[0])
    final = run_seed(config, 0, str(tmp_path))
    rows = read_metrics_csv(final["csv"])["rows"]
    # theta starts at zero, so the first batch has no defined alignment
    assert all(rows[0][f"align_t{t}"] == "" for t in range(1, 10))
    for t in range(1, 10):
        assert -1.0 <= float(rows[-1][f"align_t{t}"]) <= 1.0

def test_reruns_are_byte_identical(tmp_path):
    a = run_seed(toy_config(tmp_path / 'a'), 0, str(tmp_path / 'a'))
    b = run_seed(toy_config(tmp_path / 'b'), 0, str(tmp_path / 'b'))
    with open(a['csv'], 'rb') as fa, open(b['csv'], 'rb') as fb:
        assert fa.read() == fb.read()

CONFIG_ROOT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')

def desk_scaled(name):
    return apply_desk_scale(load_experiment_config(os.path.join(CONFIG_ROOT, name),
                                                   {'desk_scale': True}))

@pytest.mark.parametrize("name", ['toy_fixed.json', 'toy_plastic.json', 'seq_mnist.json',
                                  'copy_repeat.json'])
def test_desk_scale_keeps_model_size(name):
    full = load_experiment_config(os.path.join(CONFIG_ROOT, name))
    assert desk_scaled(name).units == full.units

def test_desk_scale_toy_fixed_keeps_full_schedule():
    config = desk_scaled('toy_fixed.json')
    assert (config.epochs, config.batches_per_epoch) == (100, 100)

def test_desk_scale_toy_plastic_short_lengths():
    config = desk_scaled('toy_plastic.json')
    assert config.epochs == 250
    assert config.task['lengths'] == [10, 20, 30]

def test_desk_scale_seq_mnist_full_passes_over_subset():
    config = desk_scaled('seq_mnist.json')
    assert config.epochs == 10
    assert config.task['train_limit'] == 5000
    assert config.batches_per_epoch * config.trainer.batch_size == 5000

def test_desk_scale_copy_repeat_budget():
    config = desk_scaled('copy_repeat.json')
    assert config.budget_seconds == 900
    assert config.epochs == 1000

def test_desk_scale_off_is_identity():
    config = toy_config('runs')
    assert apply_desk_scale(config) is config

def test_plastic_sweep_reports_solved_length(tmp_path):
    config = toy_config(tmp_path, task={'kind': 'toy_plastic', 'lengths': [20, 10]},
                        trainer=TrainerConfig(synth_lr=1e-3, gamma=0.9, batch_size=3),
                        epochs=2, batches_per_epoch=2, seeds=[0], log_alignment=False)
    final = run_seed(config, 0, str(tmp_path))
    assert set(final['error_by_length']) == {'10', '20'}
    assert final['solved_length'] in (0, 10, 20)
    rows = read_metrics_csv(final['csv'])['rows']
    assert [r['solved_length'] for r in rows] == ['10'] * 4 + ['20'] * 4

def test_copy_repeat_curriculum_runs(tmp_path):
    config = toy_config(tmp_path, task={'kind': 'copy_repeat', 'N': 1, 'R': 1},
                        trainer=TrainerConfig(synth_lr=1e-5, gamma=0.9, batch_size=2),
                        epochs=1, batches_per_epoch=3, seeds=[0], units=3, log_alignment=False)
    final = run_seed(config, 0, str(tmp_path))
    assert final['N'] >= 1 and final['R'] >= 1
    assert final['solved_length'] >= 0
    rows = read_metrics_csv(final['csv'])['rows']
    assert len(rows) == 3
    assert all(float(r['task_error']) >= 0.0 for r in rows)

def _write_idx(path, array, magic):
    ndim = magic & 0xFF
    with open(path, 'wb') as f:
        f.write(struct.pack('>I', magic) + struct.pack(f'>{ndim}I', *array.shape))
        f.write(array.astype(np.uint8).tobytes())

def test_seq_mnist_best_validation(tmp_path):
    rng = np.random.default_rng(0)
    data = tmp_path / 'mnist'
    data.mkdir()
    _write_idx(data / 'train-images-idx3-ubyte', rng.integers(0, 256, (8, 28, 28)), 0x803)
    _write_idx(data / 'train-labels-idx1-ubyte', rng.integers(0, 10, 8), 0x801)
    _write_idx(data / 't10k-images-idx3-ubyte', rng.integers(0, 256, (4, 28, 28)), 0x803)
    _write_idx(data / 't10k-labels-idx1-ubyte', rng.integers(0, 10, 4), 0x801)
    config = toy_config(tmp_path, task={'kind': 'seq_mnist', 'validation_size': 4},
                        trainer=TrainerConfig(synth_lr=3e-4, rnn_lr=3e-4, gamma=0.9,
                                              sg_scale=0.1, batch_size=2),
                        epochs=2, batches_per_epoch=2, seeds=[0], units=3,
                        data_dir=str(data), log_alignment=False)
    final = run_seed(config, 0, str(tmp_path))
    assert 0.0 <= final['test_at_best_valid'] <= 1.0
    assert final['best_epoch'] in (0, 1)
    assert 0.0 <= final['accuracy'] <= 1.0
