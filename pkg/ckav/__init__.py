"""A checkpoint averaging library.

**ckav** builds a single model from several checkpoints of one training run by
interpolating their parameters. It allows users to:

* read and write checkpoints in a compact container with optional gradients
* select checkpoints by development perplexity or by position in the run
* average them with uniform, perplexity-softmax, explicit or optimized weights
* sweep averaging hyperparameters and export plot-ready CSV/JSON tables

A small MLP classifier with an Adam trainer and a quadratic bowl task are included
so every scheme can be exercised end to end.
"""

from ckav.averaging import (
    GradStepConfig,
    TemperatureConfig,
    WeightVector,
    explicit_weights,
    gradient_step_average,
    interpolate,
    ppl_softmax_weights,
    uniform_weights,
    weighted_average,
)
from ckav.checkpoint import Checkpoint, CheckpointMeta, TensorMap, validate_compat
from ckav.container import read_checkpoint, read_series, write_checkpoint
from ckav.objectives import Evaluation, Objective
from ckav.records import SweepRecord
from ckav.selection import SelectionKind, SelectionStrategy, make_strategy, select
from ckav.weight_optimizer import OptimizeConfig, one_step_optimize

__version__ = "0.1.0"

__all__ = [
    "TensorMap",
    "CheckpointMeta",
    "Checkpoint",
    "validate_compat",
    "read_checkpoint",
    "write_checkpoint",
    "read_series",
    "SelectionKind",
    "SelectionStrategy",
    "make_strategy",
    "select",
    "WeightVector",
    "TemperatureConfig",
    "GradStepConfig",
    "uniform_weights",
    "ppl_softmax_weights",
    "explicit_weights",
    "interpolate",
    "weighted_average",
    "gradient_step_average",
    "Objective",
    "Evaluation",
    "OptimizeConfig",
    "one_step_optimize",
    "SweepRecord",
]
