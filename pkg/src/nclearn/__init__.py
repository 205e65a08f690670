"""nclearn: meta-learned generalization-gap estimation on a small numpy autodiff core.

The main entry points are :class:`NeuralComplexity` (the gap estimator),
:func:`train_regularized` (task learners, optionally NC-regularized),
:class:`MemoryBank` (snapshot replay) and :func:`compute_bound`.
"""
from .bank import BankConfig, MemoryBank, Snapshot
from .bound import BoundReport, compute_bound, dkw_band, empirical_cdf, epsilon_for_target
from .errors import (
    CapacityError,
    ContextError,
    ContractError,
    DimensionError,
    EmptyBankError,
    FormatError,
    InfeasibleError,
    LabelFormatError,
    NumericError,
)
from .learners import LambdaSchedule, LearnerConfig, gap, lambda_at, train_regularized
from .model import HypothesisEval, NcClassificationConfig, NcRegressionConfig, NeuralComplexity
from .tasks import TaskBatch, sample_sinusoid_task, sample_synthetic_classification_task
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "BankConfig", "BoundReport", "CapacityError", "ContextError", "ContractError",
    "DimensionError", "EmptyBankError", "FormatError", "HypothesisEval", "InfeasibleError",
    "LabelFormatError", "LambdaSchedule", "LearnerConfig", "MemoryBank", "NcClassificationConfig",
    "NcRegressionConfig", "NeuralComplexity", "NumericError", "Snapshot", "TaskBatch", "Tensor",
    "compute_bound", "dkw_band", "empirical_cdf", "epsilon_for_target", "gap", "lambda_at",
    "sample_sinusoid_task", "sample_synthetic_classification_task", "train_regularized",
]
