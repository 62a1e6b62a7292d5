# bplambda/loaders.py v1.0
"""IDX (MNIST) ingestion and experiment-config loading"""

import gzip
import json
import os
import struct
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .config import DATA_DIR_ENV
from .dataclasses import ExperimentConfig, LearnerSpec, TrainerConfig
from .errors import ConfigError, IdxFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_FILES = {
    'train_images': 'train-images-idx3-ubyte',
    'train_labels': 'train-labels-idx1-ubyte',
    'test_images': 't10k-images-idx3-ubyte',
    'test_labels': 't10k-labels-idx1-ubyte',
}


def _read_bytes(path: str) -> bytes:
    with open(path, 'rb') as f:
        raw = f.read()
    if raw[:2] == b'\x1f\x8b':
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise IdxFormatError(path, 0, f"corrupt gzip stream: {e}")
    return raw


def load_idx(path: str, expected_magic: Optional[int] = None) -> np.ndarray:
    """Decode an unsigned-byte IDX file (optionally gzip-compressed)"""
    if not os.path.exists(path):
        raise IdxFormatError(path, 0, "file not found")
    data = _read_bytes(path)
    if len(data) < 4:
        raise IdxFormatError(path, len(data), "truncated magic number")
    magic, = struct.unpack('>I', data[:4])
    if expected_magic is not None and magic != expected_magic:
        raise IdxFormatError(path, 0, f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != 0x08:
        raise IdxFormatError(path, 0, f"unsupported IDX type in magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IdxFormatError(path, len(data), f"truncated header for {ndim} dimensions")
    dims = struct.unpack(f'>{ndim}I', data[4:header_end])
    expected = int(np.prod(dims))
    available = len(data) - header_end
    if available < expected:
        raise IdxFormatError(path, len(data), f"payload has {available} bytes, dims {dims} "
                                              f"need {expected}")
    if available > expected:
        raise IdxFormatError(path, header_end + expected, "trailing bytes after payload")
    return np.frombuffer(data, dtype=np.uint8, offset=header_end).reshape(dims)


def _find(data_dir: str, stem: str) -> str:
    for name in (stem, stem + '.gz'):
        path = os.path.join(data_dir, name)
        if os.path.exists(path):
            return path
    raise IdxFormatError(os.path.join(data_dir, stem), 0, "file not found (also tried .gz)")


def load_mnist(data_dir: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray,
                                                          np.ndarray, np.ndarray]:
    """(train_images, train_labels, test_images, test_labels) as raw uint8 arrays"""
    from .config import VERBOSE
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ConfigError(f"MNIST directory not given: pass --data-dir or set {DATA_DIR_ENV}")
    if VERBOSE:
        print(f"📂 Loading MNIST IDX files from: {data_dir}")

    arrays = {}
    for key, stem in MNIST_FILES.items():
        magic = IDX_IMAGES_MAGIC if key.endswith('images') else IDX_LABELS_MAGIC
        arrays[key] = load_idx(_find(data_dir, stem), magic)

    for split in ('train', 'test'):
        n_img, n_lab = len(arrays[f'{split}_images']), len(arrays[f'{split}_labels'])
        if n_img != n_lab:
            raise IdxFormatError(_find(data_dir, MNIST_FILES[f'{split}_labels']), 4,
                                 f"{n_lab} labels for {n_img} images")
    if VERBOSE:
        print(f"✅ MNIST: {len(arrays['train_images'])} train, "
              f"{len(arrays['test_images'])} test images")
    return (arrays['train_images'], arrays['train_labels'],
            arrays['test_images'], arrays['test_labels'])


# ------------------------------------------------------------------ experiment configs

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(target: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split('.')
    node = target
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"key '{key}' descends into a non-table value")
    node[parts[-1]] = value


def read_config_file(filepath: str) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Raw config dict plus parsing metadata.

    Attempt 1 reads the whole file as JSON; attempt 2 reads key=value lines
    with dotted keys (trainer.gamma=0.9), skipping blanks and # comments.
    """
    if not os.path.exists(filepath):
        raise ConfigError(f"config file not found: {filepath}")
    metadata = {'source_file': filepath, 'format': None, 'skipped_lines': []}

    with open(filepath, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError(f"{filepath}: top-level JSON value must be an object")
        metadata['format'] = 'json'
        return data, metadata
    except json.JSONDecodeError:
        pass

    data: Dict[str, Any] = {}
    for line_num, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            metadata['skipped_lines'].append(line_num)
            continue
        key, value = line.split('=', 1)
        _set_dotted(data, key.strip(), _parse_value(value.strip()))
    if metadata['skipped_lines']:
        raise ConfigError(f"{filepath}: unparseable lines {metadata['skipped_lines'][:10]}")
    metadata['format'] = 'key_value'
    return data, metadata


def build_experiment_config(raw: Dict[str, Any]) -> ExperimentConfig:
    """Typed config from a validated raw dict; the learner's lambda feeds the trainer"""
    learner_raw = dict(raw['learner'])
    learner = LearnerSpec(kind=learner_raw['kind'], lam=learner_raw.get('lam'),
                          n=learner_raw.get('n'))
    trainer_raw = dict(raw.get('trainer', {}))
    if learner.lam is not None:
        trainer_raw['lam'] = learner.lam
    trainer = TrainerConfig(**trainer_raw)
    extras = {k: raw[k] for k in ('units', 'epochs', 'batches_per_epoch', 'seeds', 'out',
                                  'desk_scale', 'data_dir', 'log_alignment', 'budget_seconds')
              if k in raw}
    return ExperimentConfig(name=raw.get('name', raw['task']['kind']), task=dict(raw['task']),
                            learner=learner, trainer=trainer, **extras)


def load_experiment_config(filepath: str, overrides: Optional[Dict[str, Any]] = None
                           ) -> ExperimentConfig:
    """Read, override, validate and type an experiment config"""
    from .config import VERBOSE
    from .validators import run_all_validations

    raw, metadata = read_config_file(filepath)
    if VERBOSE:
        print(f"📂 Loaded config ({metadata['format']}): {filepath}")
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(raw, key, value)

    report = run_all_validations(raw)
    if not report['summary']['is_valid']:
        raise ConfigError(f"invalid config {filepath}", report['summary']['errors'])
    try:
        return build_experiment_config(raw)
    except TypeError as e:
        raise ConfigError(f"invalid config {filepath}: {e}")
