import gzip
import json
import struct
import numpy as np
import pytest
from bplambda.errors import ConfigError, IdxFormatError
from bplambda.loaders import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    load_experiment_config,
    load_idx,
    load_mnist,
    read_config_file,
)

def idx_bytes(array, magic):
    ndim = magic & 0xFF
    header = struct.pack('>I', magic) + struct.pack(f'>{ndim}I', *array.shape)
    return header + array.astype(np.uint8).tobytes()

def write_mnist(directory, n_train=3, n_test=2, compress=False):
    rng = np.random.default_rng(0)
    arrays = {
        'train-images-idx3-ubyte': (rng.integers(0, 256, (n_train, 28, 28)), IDX_IMAGES_MAGIC),
        'train-labels-idx1-ubyte': (rng.integers(0, 10, n_train), IDX_LABELS_MAGIC),
        't10k-images-idx3-ubyte': (rng.integers(0, 256, (n_test, 28, 28)), IDX_IMAGES_MAGIC),
        't10k-labels-idx1-ubyte': (rng.integers(0, 10, n_test), IDX_LABELS_MAGIC),
    }
    for name, (array, magic) in arrays.items():
        data = idx_bytes(array, magic)
        if compress:
            (directory / (name + '.gz')).write_bytes(gzip.compress(data))
        else:
            (directory / name).write_bytes(data)
    return arrays

def test_load_idx_labels(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(idx_bytes(np.array([7, 2, 1]), IDX_LABELS_MAGIC))
    np.testing.assert_array_equal(load_idx(str(path), IDX_LABELS_MAGIC), [7, 2, 1])

def test_load_idx_gzip(tmp_path):
    images = np.arange(2 * 28 * 28).reshape(2, 28, 28) % 256
    path = tmp_path / "images.gz"
    path.write_bytes(gzip.compress(idx_bytes(images, IDX_IMAGES_MAGIC)))
    np.testing.assert_array_equal(load_idx(str(path), IDX_IMAGES_MAGIC), images)

def test_load_idx_wrong_magic(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(idx_bytes(np.array([1]), IDX_LABELS_MAGIC))
    with pytest.raises(IdxFormatError):
        load_idx(str(path), IDX_IMAGES_MAGIC)

def test_load_idx_truncated_payload(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(idx_bytes(np.array([1, 2, 3]), IDX_LABELS_MAGIC)[:-1])
    with pytest.raises(IdxFormatError) as err:
        load_idx(str(path))
    assert err.value.offset == 10

def test_load_idx_trailing_bytes(tmp_path):
    path = tmp_path / "labels"
    path.write_bytes(idx_bytes(np.array([1, 2]), IDX_LABELS_MAGIC) + b'\x00')
    with pytest.raises(IdxFormatError) as err:
        load_idx(str(path))
    assert err.value.offset == 10

def test_load_idx_missing_file(tmp_path):
    with pytest.raises(IdxFormatError):
        load_idx(str(tmp_path / "nope"))

@pytest.mark.parametrize("compress", [False, True])
def test_load_mnist_directory(tmp_path, compress):
    arrays = write_mnist(tmp_path, compress=compress)
    train_x, train_y, test_x, test_y = load_mnist(str(tmp_path))
    assert train_x.shape == (3, 28, 28)
    np.testing.assert_array_equal(test_y, arrays['t10k-labels-idx1-ubyte'][0])

def test_load_mnist_uses_environment(tmp_path, monkeypatch):
    write_mnist(tmp_path)
    monkeypatch.setenv('BPLAMBDA_DATA_DIR', str(tmp_path))
    assert load_mnist()[1].shape == (3,)

def test_load_mnist_without_directory(monkeypatch):
    monkeypatch.delenv('BPLAMBDA_DATA_DIR', raising=False)
    with pytest.raises(ConfigError):
        load_mnist()

def test_read_config_key_value(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# toy\ntask.kind=toy_fixed\ntrainer.gamma=0.9\nname=demo\n"
                    "seeds=[1, 2]\n", encoding='utf-8')
    raw, meta = read_config_file(str(path))
    assert meta['format'] == 'key_value'
    assert raw == {'task': {'kind': 'toy_fixed'}, 'trainer': {'gamma': 0.9}, 'name': 'demo',
                   'seeds': [1, 2]}

def test_read_config_rejects_garbage(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("task.kind=toy_fixed\nnot a setting\n", encoding='utf-8')
    with pytest.raises(ConfigError):
        read_config_file(str(path))

def test_load_experiment_config_with_overrides(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({
        "task": {"kind": "toy_fixed"},
        "learner": {"kind": "bp_lambda", "lam": 0.5},
        "trainer": {"synth_lr": 1e-4, "gamma": 1.0},
        "seeds": [0, 1],
    }), encoding='utf-8')
    config = load_experiment_config(str(path), {'seeds': [4], 'out': str(tmp_path), 'data_dir': None})
    assert config.name == 'toy_fixed'
    assert config.seeds == [4]
    assert config.out == str(tmp_path)
    assert config.trainer.lam == 0.5
    assert config.learner.label == 'bp_lambda(0.5)'

def test_load_experiment_config_invalid(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"task": {"kind": "chess"}, "learner": {"kind": "bp_lambda"},
                                "trainer": {}}), encoding='utf-8')
    with pytest.raises(ConfigError) as err:
        load_experiment_config(str(path))
    assert len(err.value.errors) == 3

def test_shipped_configs_load():
    import os
    root = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')
    for name in ('toy_fixed', 'toy_plastic', 'seq_mnist', 'copy_repeat'):
        config = load_experiment_config(os.path.join(root, name + '.json'))
        assert config.task['kind'] == name
        assert len(config.seeds) == 5
