# bplambda/errors.py v1.0
"""Exception hierarchy shared by kernels, learners, loaders and the runner"""

from typing import Any, Dict, List, Optional


class BpLambdaError(Exception):
    """Base class for all library errors"""


class ShapeError(BpLambdaError, ValueError):
    """Operand shapes do not conform"""


class NonFiniteError(BpLambdaError, ArithmeticError):
    """A kernel produced or received NaN/inf"""


class DivergenceError(NonFiniteError):
    """Training produced a non-finite state or loss"""

    def __init__(self, message: str, step: Optional[int] = None,
                 last_metrics: Optional[Dict[str, Any]] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
        self.last_metrics = last_metrics or {}


class ContractViolation(BpLambdaError, RuntimeError):
    """A cached step was used after the parameters it was computed with changed"""


class MissingTargetError(BpLambdaError, ValueError):
    """A readout head required a target that was not supplied"""


class HorizonError(BpLambdaError, ValueError):
    """A target was requested beyond the available trajectory"""


class IdxFormatError(BpLambdaError, ValueError):
    """Malformed or truncated IDX file"""

    def __init__(self, path: str, offset: int, message: str):
        super().__init__(f"{path} @ byte {offset}: {message}")
        self.path = path
        self.offset = offset


class ConfigError(BpLambdaError, ValueError):
    """Experiment configuration failed validation"""

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors = errors or []
