"""Provides optimization of interpolation weights on development data.

Weights are re-parameterized as ``w = softmax(g)`` so that any step in the logits
``g`` keeps them normalized. Starting from ``g = 0`` (uniform weights), a single
gradient-descent step of size ``η`` is taken on the development loss of the
interpolated model. The checkpoint parameters themselves are never updated.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax as _softmax

from ckav.averaging import (
    WeightVector,
    accumulation_order,
    interpolate,
    uniform_weights,
)
from ckav.checkpoint import Checkpoint
from ckav.exceptions import OptimizerUsageError
from ckav.objectives.objective import Evaluation, Objective

logger = logging.getLogger(__name__)

#: Logits ``g_k``, one per checkpoint
LogitVector = NDArray[np.float64]


@dataclass(frozen=True)
class OptimizeConfig:
    """Step size of the one-step logit update."""

    #: Step size ``η`` in logit space
    eta: float = 1.0

    def __post_init__(self) -> None:
        """Validates the step size."""
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be finite and non-negative")


@dataclass(frozen=True)
class OptimizeReport:
    """Outcome of a one-step logit update."""

    #: Logits after the step
    logits: tuple[float, ...]

    #: Gradient of the development loss with respect to the initial logits
    gradient: tuple[float, ...]

    #: Development loss with uniform weights
    loss_before: float

    #: Development loss with the optimized weights
    loss_after: float

    def to_dict(self) -> dict[str, object]:
        """Returns the report as a JSON-compatible dictionary."""
        return {
            "logits": list(self.logits),
            "gradient": list(self.gradient),
            "dev_loss_before": self.loss_before,
            "dev_ppl_before": math.exp(self.loss_before),
            "dev_loss_after": self.loss_after,
            "dev_ppl_after": math.exp(self.loss_after),
        }


def _as_logits(logits: ArrayLike) -> LogitVector:
    values = np.asarray(logits, dtype=np.float64)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError("logits must be a non-empty vector")
    if not np.isfinite(values).all():
        raise ValueError("logits must be finite")
    return values


def softmax(logits: ArrayLike) -> WeightVector:
    """Normalizes logits into interpolation weights.

    Args:
        logits: One logit per checkpoint.

    Returns:
        ``exp(g_k) / Σ exp(g_k')``, computed stably.
    """
    return WeightVector(_softmax(_as_logits(logits)))


def dev_loss_of_weights(
    ckpts: Sequence[Checkpoint], w: WeightVector, objective: Objective
) -> Evaluation:
    """Evaluates the interpolated model ``Σ w_k θ_k`` on development data.

    The interpolation is kept in 64-bit precision.

    Args:
        ckpts: Compatible checkpoints.
        w: Weights aligned with ``ckpts``.
        objective: The development objective.

    Returns:
        The development loss and perplexity.
    """
    return objective.evaluate(interpolate(ckpts, w))


def _inner_products(
    ckpts: Sequence[Checkpoint], gradient: Mapping[str, NDArray[np.float64]]
) -> NDArray[np.float64]:
    # s_j = <G, θ_j>, reduced by tensor name, then checkpoint order
    s = np.zeros(len(ckpts))
    order = accumulation_order(ckpts)
    for name in gradient:
        flat = np.ravel(gradient[name])
        for j in order:
            s[j] += flat @ np.ravel(ckpts[j].params[name]).astype(np.float64)
    return s


def grad_wrt_logits(
    ckpts: Sequence[Checkpoint], logits: ArrayLike, objective: Objective
) -> NDArray[np.float64]:
    """Computes the gradient of the development loss with respect to the logits.

    With ``w = softmax(g)``, ``θ̂ = Σ w_j θ_j``, ``G = ∇L(θ̂)`` and
    ``s_j = <G, θ_j>`` over all tensors, the chain rule gives
    ``dL/dg_k = w_k (s_k - Σ_j w_j s_j)``. The components sum to zero.

    Args:
        ckpts: Compatible checkpoints.
        logits: One logit per checkpoint.
        objective: The development objective.

    Returns:
        One gradient component per checkpoint.
    """
    w = softmax(logits)
    averaged = interpolate(ckpts, w)
    s = _inner_products(ckpts, objective.grad(averaged))
    return w.values * (s - w.values @ s)


def one_step_optimize(
    ckpts: Sequence[Checkpoint], objective: Objective, cfg: OptimizeConfig
) -> tuple[WeightVector, OptimizeReport]:
    """Optimizes interpolation weights with one gradient step on the logits.

    Args:
        ckpts: At least two compatible checkpoints.
        objective: The development objective.
        cfg: The logit step size.

    Returns:
        The optimized weights and a report with the logits and the development
        loss before and after the step.

    Raises:
        OptimizerUsageError: If fewer than two checkpoints are given.
    """
    return optimize_path(ckpts, objective, [cfg.eta])[0]


def optimize_path(
    ckpts: Sequence[Checkpoint], objective: Objective, etas: Sequence[float]
) -> list[tuple[WeightVector, OptimizeReport]]:
    """Takes one logit step for each of several step sizes.

    The logit gradient at the uniform starting point is evaluated once and scaled
    by every step size.

    Args:
        ckpts: At least two compatible checkpoints.
        objective: The development objective.
        etas: Step sizes.

    Returns:
        The optimized weights and report of every step size, in input order.

    Raises:
        OptimizerUsageError: If fewer than two checkpoints are given.
    """
    if len(ckpts) < 2:
        raise OptimizerUsageError("weight optimization needs at least 2 checkpoints")
    configs = [OptimizeConfig(eta) for eta in etas]
    start = np.zeros(len(ckpts))
    gradient = grad_wrt_logits(ckpts, start, objective)
    before = dev_loss_of_weights(ckpts, uniform_weights(len(ckpts)), objective)
    logger.info("logit gradient at uniform weights: %s", gradient.tolist())

    results = []
    for cfg in configs:
        logits = -cfg.eta * gradient
        w = softmax(logits)
        after = dev_loss_of_weights(ckpts, w, objective)
        report = OptimizeReport(
            logits=tuple(logits.tolist()),
            gradient=tuple(gradient.tolist()),
            loss_before=before.loss,
            loss_after=after.loss,
        )
        results.append((w, report))
    return results
