# bplambda/dataclasses.py v1.0
"""Data classes shared by learners, the runner and the exporters"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .cells import RnnParams
from .errors import ConfigError
from .optim import AdamState
from .synthesiser import SynthParams

LEARNER_KINDS = ('bp_lambda', 'nstep_sg', 'tbptt', 'no_bptt', 'oracle',
                 'offline_lambda_sg', 'online_lambda_sg')
TASK_KINDS = ('toy_fixed', 'toy_plastic', 'copy_repeat', 'seq_mnist')


@dataclass
class TrainerConfig:
    """Rates, discounting and update mode shared by every learner"""
    synth_lr: float
    rnn_lr: float = 1e-3
    gamma: float = 1.0
    lam: float = 1.0
    sg_scale: float = 1.0
    batch_size: int = 1
    seed: int = 0
    raw_updates: bool = False      # immediate SGD on theta inside the sequence
    train_rnn: bool = True         # False freezes Psi and the readout
    structured_trace: bool = True

    def __post_init__(self):
        errors = []
        if not 0.0 <= self.gamma <= 1.0:
            errors.append(f"gamma={self.gamma} outside [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            errors.append(f"lam={self.lam} outside [0, 1]")
        if self.synth_lr <= 0 or self.rnn_lr <= 0:
            errors.append("learning rates must be positive")
        if self.batch_size < 1:
            errors.append(f"batch_size={self.batch_size} < 1")
        if errors:
            raise ConfigError("invalid trainer config", errors)


@dataclass
class TrainState:
    """Everything a learner mutates between batches"""
    params: RnnParams
    synth: SynthParams
    rnn_opt: AdamState
    synth_opt: AdamState

    @classmethod
    def create(cls, params: RnnParams, cfg: TrainerConfig) -> 'TrainState':
        return cls(params, SynthParams.zeros(params.state_dim),
                   AdamState(rate=cfg.rnn_lr), AdamState(rate=cfg.synth_lr))


@dataclass
class LearnerSpec:
    """Learner name plus its single knob (lambda or truncation length)"""
    kind: str
    lam: Optional[float] = None
    n: Optional[int] = None

    @property
    def label(self) -> str:
        if self.kind in ('bp_lambda', 'offline_lambda_sg', 'online_lambda_sg'):
            return f"{self.kind}({self.lam:g})"
        if self.kind in ('nstep_sg', 'tbptt'):
            return f"{self.kind}({self.n})"
        return self.kind


@dataclass
class ExperimentConfig:
    """One experiment: task x learner x trainer settings x seeds"""
    name: str
    task: Dict[str, Any]
    learner: LearnerSpec
    trainer: TrainerConfig
    units: int = 30
    epochs: int = 1
    batches_per_epoch: int = 100
    seeds: List[int] = field(default_factory=lambda: [0])
    out: str = "runs"
    desk_scale: bool = False
    data_dir: Optional[str] = None
    log_alignment: bool = False
    budget_seconds: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class MetricRow:
    """One CSV line; alignment holds one cosine per timestep (None when undefined)"""
    epoch: int
    batch: int
    loss: float
    task_error: Optional[float] = None
    accuracy: Optional[float] = None
    solved_length: Optional[int] = None
    alignment: List[Optional[float]] = field(default_factory=list)


@dataclass
class SequenceResult:
    """What every learner returns from one training batch"""
    step_losses: np.ndarray                 # (T, B)
    predictions: List[np.ndarray]           # readout output per step
    trajectory: Optional[Any] = None        # TrajectoryRecord when recorded
    synth_values: Optional[np.ndarray] = None   # (T + 1, B, n) synthesiser output per state

    @property
    def loss(self) -> float:
        """Summed-over-time loss averaged over the batch"""
        return float(np.mean(np.sum(self.step_losses, axis=0)))
