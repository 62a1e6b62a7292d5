# bplambda/tasks.py v1.0
"""Task generators: toy target reach (fixed and plastic), copy-repeat, sequential MNIST"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .cells import CellKind, HeadKind
from .config import COPY_SOLVED_BITS, MNIST_VALIDATION_SIZE
from .errors import ConfigError
from .loaders import load_mnist
from .tensor_core import DTYPE

TOY_T = 10
TOY_INPUT_DIM = 10
COPY_BITS = 8
COPY_INPUT_DIM = 10     # 8 bits + start channel + repeat channel
COPY_OUTPUT_DIM = 9     # 8 bits + stop channel
START_CHANNEL = 8
REPEAT_CHANNEL = 9
STOP_CHANNEL = 8
MNIST_ROWS = 28
MNIST_CLASSES = 10


@dataclass
class Episode:
    """A batch of equal-length sequences"""
    inputs: np.ndarray                     # (T, B, input_dim)
    targets: List[Optional[np.ndarray]]    # one entry per step
    head: HeadKind

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def batch(self) -> int:
        return self.inputs.shape[1]


class Task:
    """Base task: fixed dimensions, a head, a default cell and a batch sampler"""
    name = "task"
    head = HeadKind.MSE
    cell_kind = CellKind.TANH
    input_dim = 0
    output_dim = 0

    @property
    def length(self) -> int:
        raise NotImplementedError

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> Episode:
        raise NotImplementedError

    def epoch_batches(self, rng: np.random.Generator, batch_size: int,
                      n_batches: int) -> Iterator[Episode]:
        for _ in range(n_batches):
            yield self.sample_batch(rng, batch_size)

    def batch_metrics(self, episode: Episode, predictions: List[np.ndarray],
                      step_losses: np.ndarray) -> dict:
        return {}


# ------------------------------------------------------------------ toy tasks

class ToyTask(Task):
    """Static binary input at t = 1, null input after, unit-circle target at T"""
    input_dim = TOY_INPUT_DIM
    output_dim = 2
    head = HeadKind.MSE

    def __init__(self, name: str, T: int, inputs: np.ndarray, targets: np.ndarray,
                 cell_kind: CellKind):
        self.name = name
        self.T = T
        self.pair_inputs = inputs      # (P, 10)
        self.pair_targets = targets    # (P, 2)
        self.cell_kind = cell_kind

    @property
    def length(self) -> int:
        return self.T

    @property
    def n_pairs(self) -> int:
        return self.pair_inputs.shape[0]

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> Episode:
        """Batch item i carries pair i mod n_pairs; rng is unused (pairs are fixed)"""
        idx = np.arange(batch_size) % self.n_pairs
        inputs = np.zeros((self.T, batch_size, self.input_dim), dtype=DTYPE)
        inputs[0] = self.pair_inputs[idx]
        targets: List[Optional[np.ndarray]] = [None] * self.T
        targets[-1] = self.pair_targets[idx]
        return Episode(inputs, targets, self.head)

    def batch_metrics(self, episode: Episode, predictions: List[np.ndarray],
                      step_losses: np.ndarray) -> dict:
        """Task error: mean squared distance to the target at T"""
        diff = predictions[-1] - episode.targets[-1]
        return {'task_error': float(np.mean(diff ** 2))}


def _binary_inputs(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.integers(0, 2, size=(count, TOY_INPUT_DIM)).astype(DTYPE)


def toy_fixed(seed: int, n_pairs: int = 1) -> ToyTask:
    """Fixed linear RNN toy task: T = 10, random unit-circle target(s)"""
    rng = np.random.default_rng(seed)
    inputs = _binary_inputs(rng, n_pairs)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_pairs)
    targets = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return ToyTask("toy_fixed", TOY_T, inputs, targets, CellKind.LINEAR)


def toy_plastic(T: int, seed: int) -> ToyTask:
    """Three pairs, targets spread equidistantly on the unit circle (phase 0)"""
    if T <= 0 or T % 10 != 0 or T > 100:
        raise ConfigError(f"toy_plastic length must be a multiple of 10 in [10, 100], got {T}")
    rng = np.random.default_rng(seed)
    inputs = _binary_inputs(rng, 3)
    angles = 2.0 * np.pi * np.arange(3) / 3.0
    targets = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return ToyTask("toy_plastic", T, inputs, targets, CellKind.TANH)


# ------------------------------------------------------------------ copy-repeat

@dataclass
class Curriculum:
    """Copy-repeat difficulty level; solved_history holds the lengths solved so far"""
    N: int = 1
    R: int = 1
    solved_history: List[int] = field(default_factory=list)

    def __post_init__(self):
        if self.N < 1 or self.R < 1:
            raise ConfigError(f"curriculum needs N, R >= 1, got N={self.N}, R={self.R}")

    @property
    def length(self) -> int:
        return self.N * (self.R + 1) + 3

    @property
    def solved_length(self) -> int:
        return max(self.solved_history, default=0)


def advance_curriculum(state: Curriculum, solved: bool) -> Curriculum:
    """On a solve, increment N and R alternately, N first"""
    if not solved:
        return state
    history = state.solved_history + [state.length]
    if state.N == state.R:
        return Curriculum(state.N + 1, state.R, history)
    return Curriculum(state.N, state.R + 1, history)


class CopyRepeatTask(Task):
    """Start flag, N pattern steps, repeat count R/10, N*R output steps, stop step"""
    name = "copy_repeat"
    head = HeadKind.BITS
    cell_kind = CellKind.LSTM
    input_dim = COPY_INPUT_DIM
    output_dim = COPY_OUTPUT_DIM

    def __init__(self, N: int, R: int, seed: int = 0):
        if N < 1 or R < 1:
            raise ConfigError(f"copy_repeat needs N, R >= 1, got N={N}, R={R}")
        self.N, self.R, self.seed = N, R, seed
        self.rng = np.random.default_rng([seed, N, R])

    @property
    def length(self) -> int:
        return self.N * (self.R + 1) + 3

    @property
    def output_steps(self) -> range:
        """0-based step indices carrying a target"""
        first = self.N + 2
        return range(first, self.length)

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> Episode:
        """Patterns come from the task's own (seed, N, R) stream; rng is unused"""
        N, R, T = self.N, self.R, self.length
        patterns = self.rng.integers(0, 2, size=(N, batch_size, COPY_BITS)).astype(DTYPE)
        inputs = np.zeros((T, batch_size, self.input_dim), dtype=DTYPE)
        inputs[0, :, START_CHANNEL] = 1.0
        inputs[1:N + 1, :, :COPY_BITS] = patterns
        inputs[N + 1, :, REPEAT_CHANNEL] = R / 10.0

        targets: List[Optional[np.ndarray]] = [None] * T
        for r in range(R):
            for i in range(N):
                y = np.zeros((batch_size, self.output_dim), dtype=DTYPE)
                y[:, :COPY_BITS] = patterns[i]
                targets[N + 2 + r * N + i] = y
        stop = np.zeros((batch_size, self.output_dim), dtype=DTYPE)
        stop[:, STOP_CHANNEL] = 1.0
        targets[T - 1] = stop
        return Episode(inputs, targets, self.head)

    def batch_metrics(self, episode: Episode, predictions: List[np.ndarray],
                      step_losses: np.ndarray) -> dict:
        """Bits error: per-sequence summed BCE over the output phase, in bits"""
        bits = float(np.mean(np.sum(step_losses, axis=0)) / np.log(2.0))
        return {'task_error': bits, 'solved': bits < COPY_SOLVED_BITS}


def copy_repeat(N: int, R: int, seed: int = 0) -> CopyRepeatTask:
    return CopyRepeatTask(N, R, seed)


# ------------------------------------------------------------------ sequential MNIST

@dataclass
class MnistSplits:
    train_images: np.ndarray   # (N, 28, 28) in [0, 1]
    train_labels: np.ndarray
    valid_images: np.ndarray
    valid_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray


def split_mnist(train_images: np.ndarray, train_labels: np.ndarray, test_images: np.ndarray,
                test_labels: np.ndarray, validation_size: int = MNIST_VALIDATION_SIZE
                ) -> MnistSplits:
    """Validation = the last validation_size training images; pixels scaled to [0, 1]"""
    if validation_size >= len(train_images):
        raise ConfigError(f"validation size {validation_size} leaves no training images")
    scale = lambda a: np.asarray(a, dtype=DTYPE) / 255.0
    cut = len(train_images) - validation_size
    return MnistSplits(scale(train_images[:cut]), np.asarray(train_labels[:cut], dtype=np.int64),
                       scale(train_images[cut:]), np.asarray(train_labels[cut:], dtype=np.int64),
                       scale(test_images), np.asarray(test_labels, dtype=np.int64))


class SeqMnistTask(Task):
    """Rows presented one per step, cross-entropy at the last row only"""
    name = "seq_mnist"
    head = HeadKind.SOFTMAX_CE
    cell_kind = CellKind.LSTM
    input_dim = MNIST_ROWS
    output_dim = MNIST_CLASSES

    def __init__(self, splits: MnistSplits):
        self.splits = splits

    @property
    def length(self) -> int:
        return MNIST_ROWS

    def episode(self, images: np.ndarray, labels: np.ndarray) -> Episode:
        inputs = np.transpose(images, (1, 0, 2)).astype(DTYPE)   # (28, B, 28)
        targets: List[Optional[np.ndarray]] = [None] * MNIST_ROWS
        targets[-1] = labels
        return Episode(inputs, targets, self.head)

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> Episode:
        idx = rng.integers(0, len(self.splits.train_labels), size=batch_size)
        return self.episode(self.splits.train_images[idx], self.splits.train_labels[idx])

    def epoch_batches(self, rng: np.random.Generator, batch_size: int,
                      n_batches: int) -> Iterator[Episode]:
        """One shuffled pass over the training split, at most n_batches batches"""
        order = rng.permutation(len(self.splits.train_labels))
        for b in range(min(n_batches, len(order) // batch_size)):
            idx = order[b * batch_size:(b + 1) * batch_size]
            yield self.episode(self.splits.train_images[idx], self.splits.train_labels[idx])

    def eval_batches(self, split: str, batch_size: int) -> Iterator[Episode]:
        images = getattr(self.splits, f"{split}_images")
        labels = getattr(self.splits, f"{split}_labels")
        for start in range(0, len(labels), batch_size):
            yield self.episode(images[start:start + batch_size], labels[start:start + batch_size])

    def batch_metrics(self, episode: Episode, predictions: List[np.ndarray],
                      step_losses: np.ndarray) -> dict:
        correct = np.argmax(predictions[-1], axis=1) == episode.targets[-1]
        return {'accuracy': float(np.mean(correct)), 'correct': int(np.sum(correct))}


def seq_mnist(data_dir: Optional[str] = None, train_limit: Optional[int] = None,
              eval_limit: Optional[int] = None,
              validation_size: int = MNIST_VALIDATION_SIZE) -> SeqMnistTask:
    """Load IDX files from data_dir (or the data-dir environment variable)"""
    train_images, train_labels, test_images, test_labels = load_mnist(data_dir)
    splits = split_mnist(train_images, train_labels, test_images, test_labels, validation_size)
    if train_limit is not None:
        splits.train_images = splits.train_images[:train_limit]
        splits.train_labels = splits.train_labels[:train_limit]
    if eval_limit is not None:
        for name in ('valid', 'test'):
            setattr(splits, f"{name}_images", getattr(splits, f"{name}_images")[:eval_limit])
            setattr(splits, f"{name}_labels", getattr(splits, f"{name}_labels")[:eval_limit])
    return SeqMnistTask(splits)
