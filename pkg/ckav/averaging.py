"""Provides interpolation weights and averaged checkpoints.

An averaged checkpoint is the convex combination ``θ̂ = Σ w_k θ_k`` of several
checkpoints. Weights are either uniform, derived from development perplexities via
a temperature softmax, or supplied explicitly. The gradient-step variant moves the
average a further step ``η`` against the mean of the stored gradients.

All sums accumulate in 64-bit precision in a fixed order (checkpoint step
ascending) and are rounded to the 32-bit storage dtype once at the end, so results
do not depend on input order or thread count.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from ckav.checkpoint import (
    STORAGE_DTYPE,
    Checkpoint,
    CheckpointMeta,
    TensorMap,
    validate_compat,
)
from ckav.exceptions import AveragingUsageError
from ckav.utils import parallel_map

logger = logging.getLogger(__name__)

#: Tolerance on the sum of a weight vector
WEIGHT_SUM_TOL = 1e-12

#: Tolerance on the sum of user-supplied weights before renormalization
EXPLICIT_WEIGHT_SUM_TOL = 1e-9


class WeightVector:
    """Normalized interpolation weights, aligned with a list of checkpoints."""

    def __init__(self, weights: ArrayLike):
        """Initializes a weight vector.

        Args:
            weights: Non-negative weights summing to 1.

        Raises:
            ValueError: If the vector is empty, has negative or non-finite entries,
                or does not sum to 1 within ``WEIGHT_SUM_TOL``.
        """
        values = np.array(weights, dtype=np.float64)
        if values.ndim != 1 or len(values) == 0:
            raise ValueError("weights must be a non-empty vector")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("weights must be finite and non-negative")
        if abs(values.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {values.sum()!r}, not 1")
        values.setflags(write=False)
        self._values = values

    def __repr__(self) -> str:
        """Returns the weights as a list."""
        return f"WeightVector({self._values.tolist()})"

    def __len__(self) -> int:
        """Returns the number of weights."""
        return len(self._values)

    def __getitem__(self, k: int) -> float:
        """Returns the weight at position ``k``."""
        return float(self._values[k])

    def __iter__(self) -> Iterator[float]:
        """Iterates over the weights."""
        return iter(self._values.tolist())

    def __eq__(self, other: object) -> bool:
        """Returns whether two vectors hold bit-identical weights."""
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self._values.tobytes() == other._values.tobytes()

    __hash__ = None  # type: ignore[assignment]

    @property
    def values(self) -> NDArray[np.float64]:
        """The weights as a read-only array."""
        return self._values


@dataclass(frozen=True)
class TemperatureConfig:
    """Temperature of the perplexity softmax."""

    #: Sharpness ``τ``; 0 gives uniform weights, large values approach one-hot
    tau: float = 1.0

    def __post_init__(self) -> None:
        """Validates the temperature."""
        if not math.isfinite(self.tau) or self.tau < 0:
            raise ValueError("tau must be finite and non-negative")


@dataclass(frozen=True)
class GradStepConfig:
    """Step size of the gradient-step extension."""

    #: Step size ``η`` in parameter space
    eta: float = 0.0

    def __post_init__(self) -> None:
        """Validates the step size."""
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be finite and non-negative")


def uniform_weights(k: int) -> WeightVector:
    """Returns ``k`` equal weights.

    Args:
        k: The number of checkpoints.

    Returns:
        A vector with every entry ``1 / k``.
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    return WeightVector(np.full(int(k), 1.0 / k))


def ppl_softmax_weights(ppls: Sequence[float], cfg: TemperatureConfig) -> WeightVector:
    """Derives weights from development perplexities.

    ``w_k = exp(-τ ln ppl_k) / Σ exp(-τ ln ppl_k')``, i.e. ``w_k ∝ ppl_k^(-τ)``.
    A temperature of zero yields exactly uniform weights.

    Args:
        ppls: Development perplexity of each checkpoint.
        cfg: The temperature.

    Returns:
        The normalized weights.
    """
    values = np.asarray(ppls, dtype=np.float64)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError("ppls must be a non-empty list")
    if not np.isfinite(values).all() or (values <= 0).any():
        raise ValueError("ppls must be finite and positive")
    if cfg.tau == 0:
        return uniform_weights(len(values))
    return WeightVector(softmax(-cfg.tau * np.log(values)))


def explicit_weights(weights: Sequence[float]) -> WeightVector:
    """Validates user-supplied weights and renormalizes them.

    Args:
        weights: Non-negative weights summing to 1 within ``EXPLICIT_WEIGHT_SUM_TOL``.

    Returns:
        The renormalized weights.
    """
    values = np.asarray(weights, dtype=np.float64)
    if values.ndim != 1 or len(values) == 0:
        raise ValueError("weights must be a non-empty list")
    if not np.isfinite(values).all() or (values < 0).any():
        raise ValueError("weights must be finite and non-negative")
    if abs(values.sum() - 1.0) > EXPLICIT_WEIGHT_SUM_TOL:
        raise ValueError(f"weights sum to {values.sum()!r}, expected 1")
    return WeightVector(values / values.sum())


def accumulation_order(ckpts: Sequence[Checkpoint]) -> list[int]:
    """Returns the fixed order in which checkpoints are summed.

    Checkpoints are ordered by step, then tag, then position.
    """
    return sorted(
        range(len(ckpts)), key=lambda i: (ckpts[i].meta.step, ckpts[i].meta.tag, i)
    )


def _check_inputs(ckpts: Sequence[Checkpoint], w: WeightVector) -> None:
    if len(ckpts) != len(w):
        raise AveragingUsageError(
            f"got {len(ckpts)} checkpoints but {len(w)} weights"
        )
    validate_compat(ckpts)


def _weighted_sum(
    tensors: Sequence[NDArray[Any]], weights: Sequence[float], order: Sequence[int]
) -> NDArray[np.float64]:
    first, *rest = order
    acc = np.multiply(weights[first], tensors[first], dtype=np.float64)
    for i in rest:
        acc += np.multiply(weights[i], tensors[i], dtype=np.float64)
    return acc


def interpolate(
    ckpts: Sequence[Checkpoint], w: WeightVector, threads: int = 1
) -> TensorMap:
    """Computes ``Σ w_k θ_k`` without rounding to the storage dtype.

    Args:
        ckpts: Compatible checkpoints.
        w: Weights aligned with ``ckpts``.
        threads: Maximum number of tensors processed in parallel.

    Returns:
        A 64-bit tensor map.
    """
    _check_inputs(ckpts, w)
    order = accumulation_order(ckpts)
    names = list(ckpts[0].params)

    def average(name: str) -> NDArray[np.float64]:
        return _weighted_sum([c.params[name] for c in ckpts], list(w), order)

    return TensorMap(dict(zip(names, parallel_map(average, names, threads))))


def _output_meta(ckpts: Sequence[Checkpoint], tag: str) -> CheckpointMeta:
    return CheckpointMeta(step=max(ckpt.meta.step for ckpt in ckpts), tag=tag)


def weighted_average(
    ckpts: Sequence[Checkpoint],
    w: WeightVector,
    threads: int = 1,
    tag: str = "weighted-average",
) -> Checkpoint:
    """Averages checkpoints with the given weights.

    Args:
        ckpts: Compatible checkpoints.
        w: Weights aligned with ``ckpts``.
        threads: Maximum number of tensors processed in parallel.
        tag: Tag recorded in the output metadata.

    Returns:
        The averaged checkpoint, without gradients or perplexity, at the largest
        input step.

    Raises:
        AveragingUsageError: If the number of weights does not match.
        CompatibilityError: If checkpoint tensors do not line up.
    """
    averaged = interpolate(ckpts, w, threads)
    logger.debug("averaged %d checkpoints with weights %s", len(ckpts), list(w))
    return Checkpoint(
        params=averaged.astype(STORAGE_DTYPE), meta=_output_meta(ckpts, tag)
    )


def gradient_step_average(
    ckpts: Sequence[Checkpoint],
    w: WeightVector,
    cfg: GradStepConfig,
    threads: int = 1,
    tag: str = "gradient-step",
) -> Checkpoint:
    """Averages checkpoints, then steps against their mean gradient.

    Computes ``Σ w_k θ_k - η (1/K) Σ ∇L(θ_k)``. The gradient mean is uniform
    regardless of ``w``. With ``η = 0`` the result is bit-identical to
    [`weighted_average`][ckav.averaging.weighted_average].

    Args:
        ckpts: Compatible checkpoints that all carry gradients.
        w: Weights aligned with ``ckpts``.
        cfg: The step size.
        threads: Maximum number of tensors processed in parallel.
        tag: Tag recorded in the output metadata.

    Returns:
        The stepped checkpoint, without gradients or perplexity.

    Raises:
        AveragingUsageError: If a checkpoint has no gradients or the number of
            weights does not match.
    """
    missing = [i for i, ckpt in enumerate(ckpts) if ckpt.grads is None]
    if missing:
        raise AveragingUsageError(
            f"gradient required for gradient-step averaging, missing in {missing}"
        )
    _check_inputs(ckpts, w)
    if cfg.eta == 0:
        return weighted_average(ckpts, w, threads, tag)

    order = accumulation_order(ckpts)
    uniform = [1.0 / len(ckpts)] * len(ckpts)
    names = list(ckpts[0].params)

    def step(name: str) -> NDArray[np.float32]:
        mean = _weighted_sum([c.params[name] for c in ckpts], list(w), order)
        grads = [c.grads[name] for c in ckpts if c.grads is not None]
        grad = _weighted_sum(grads, uniform, order)
        return (mean - cfg.eta * grad).astype(STORAGE_DTYPE)

    stepped = parallel_map(step, names, threads)
    logger.debug("stepped average of %d checkpoints with eta=%r", len(ckpts), cfg.eta)
    return Checkpoint(
        params=TensorMap(dict(zip(names, stepped))), meta=_output_meta(ckpts, tag)
    )
