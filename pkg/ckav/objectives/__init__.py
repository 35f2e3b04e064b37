"""Development objectives that checkpoints are scored with.

**ckav** ships two objectives: the cross-entropy of a small tanh MLP classifier on
synthetic data, standing in for a real model, and a quadratic bowl whose optimum is
known exactly. The [`Objective`][ckav.objectives.objective.Objective] abstract base
class can be sub-classed to score checkpoints of other models.
"""

from ckav.objectives.mlp import (
    DevSet,
    MlpObjective,
    ToyModelSpec,
    accuracy,
    forward_loss,
    grad_params,
    init_params,
    make_synthetic_data,
    read_dataset,
    write_dataset,
)
from ckav.objectives.objective import Evaluation, Objective
from ckav.objectives.quadratic import (
    QuadraticObjective,
    QuadraticTaskSpec,
    quadratic_checkpoints,
    sample_quadratic_checkpoints,
)

__all__ = [
    "Objective",
    "Evaluation",
    "ToyModelSpec",
    "DevSet",
    "MlpObjective",
    "init_params",
    "forward_loss",
    "grad_params",
    "accuracy",
    "make_synthetic_data",
    "read_dataset",
    "write_dataset",
    "QuadraticTaskSpec",
    "QuadraticObjective",
    "quadratic_checkpoints",
    "sample_quadratic_checkpoints",
]
