"""Provides sweeps over checkpoint averaging hyperparameters.

Every sweep evaluates a grid of settings on a development objective and returns
one [`SweepRecord`][ckav.records.SweepRecord] per grid point, in a fixed documented
order. Grid points are independent and may be evaluated on several threads without
changing the result.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ckav.averaging import (
    GradStepConfig,
    TemperatureConfig,
    WeightVector,
    gradient_step_average,
    ppl_softmax_weights,
    uniform_weights,
    weighted_average,
)
from ckav.checkpoint import Checkpoint, validate_compat
from ckav.exceptions import SweepUsageError
from ckav.objectives.objective import Objective
from ckav.records import SweepRecord
from ckav.selection import SelectionKind, SelectionStrategy, make_strategy
from ckav.utils import parallel_map
from ckav.weight_optimizer import optimize_path

logger = logging.getLogger(__name__)

#: Default temperatures, covering the uniform and one-hot limits
DEFAULT_TAUS = (0.0, 0.1, 1.0, 10.0, 100.0, 1e3, 1e6)

#: Default step sizes: the baseline plus 8 log-spaced values from 1e-4 to 1e2
DEFAULT_ETAS = (0.0, *np.logspace(-4, 2, 8).tolist())

#: Default temperature of the gradient-step sweep
DEFAULT_GRAD_TAU = 100.0

#: Default simplex grid resolution (231 points)
DEFAULT_RESOLUTION = 20


@dataclass(frozen=True)
class SimplexGridSpec:
    """Barycentric lattice over three checkpoints."""

    #: Grid spacing is ``1 / resolution`` along each barycentric axis
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self) -> None:
        """Validates the resolution."""
        value = self.resolution
        if isinstance(value, bool) or int(value) != value or value < 1:
            raise ValueError("resolution must be a positive integer")
        object.__setattr__(self, "resolution", int(value))

    def __len__(self) -> int:
        """Returns the number of grid points, ``(R + 1)(R + 2) / 2``."""
        r = self.resolution
        return (r + 1) * (r + 2) // 2

    def points(self) -> list[tuple[int, int, int]]:
        """Returns all ``(a, b, c)`` with ``a + b + c = R`` in lexicographic order."""
        r = self.resolution
        return [(a, b, r - a - b) for a in range(r + 1) for b in range(r + 1 - a)]


@dataclass(frozen=True)
class FlatnessReport:
    """Spread of the development loss over a simplex grid."""

    #: Max minus min loss over points with every coordinate ≥ 1, if there are any
    interior_spread: float | None

    #: Max minus min loss over the whole grid
    grid_spread: float

    def to_dict(self) -> dict[str, float | None]:
        """Returns the report as a JSON-compatible dictionary."""
        return {
            "interior_spread": self.interior_spread,
            "grid_spread": self.grid_spread,
        }


def _ordered(series: Sequence[Checkpoint]) -> list[Checkpoint]:
    if len(series) == 0:
        raise SweepUsageError("cannot sweep an empty checkpoint series")
    return sorted(series, key=lambda ckpt: ckpt.meta.step)


def _selected(
    series: Sequence[Checkpoint], strategy: SelectionStrategy
) -> list[Checkpoint]:
    ordered = _ordered(series)
    return strategy.select([ckpt.meta for ckpt in ordered]).take(ordered)


def _ppls(ckpts: Sequence[Checkpoint]) -> list[float]:
    ppls = [ckpt.meta.dev_ppl for ckpt in ckpts]
    if any(ppl is None for ppl in ppls):
        raise SweepUsageError("every selected checkpoint needs a dev_ppl")
    return [float(ppl) for ppl in ppls]  # type: ignore[arg-type]


def _record(
    params: dict[str, float],
    ckpt: Checkpoint,
    objective: Objective,
    weights: WeightVector | None = None,
) -> SweepRecord:
    evaluation = objective.evaluate(ckpt.params)
    record = SweepRecord.from_evaluation(params, evaluation, weights)
    logger.info("%s: dev_ppl %.6f", params, record.dev_ppl)
    return record


def series_records(
    series: Sequence[Checkpoint], objective: Objective, threads: int = 1
) -> list[SweepRecord]:
    """Evaluates every checkpoint of a series on its own.

    Args:
        series: The checkpoint series.
        objective: The development objective.
        threads: Maximum number of checkpoints evaluated in parallel.

    Returns:
        One record per checkpoint with parameter ``step``, in step order.
    """

    def evaluate(ckpt: Checkpoint) -> SweepRecord:
        return _record({"step": ckpt.meta.step}, ckpt, objective)

    return parallel_map(evaluate, _ordered(series), threads)


def k_sweep(
    series: Sequence[Checkpoint],
    kind: SelectionKind | str,
    k_max: int,
    objective: Objective,
    threads: int = 1,
) -> list[SweepRecord]:
    """Evaluates the uniform mean of the selected checkpoints for growing ``K``.

    Args:
        series: The checkpoint series, with development perplexities.
        kind: The selection rule.
        k_max: The largest ``K``; clipped to the series length.
        objective: The development objective.
        threads: Maximum number of grid points evaluated in parallel.

    Returns:
        One record with parameter ``k`` for ``K = 1 .. min(k_max, len(series))``.
    """
    ordered = _ordered(series)
    if k_max < 1:
        raise ValueError("k_max must be at least 1")

    name = SelectionKind(kind).value

    def evaluate(k: int) -> SweepRecord:
        selected = _selected(ordered, make_strategy(kind, k))
        w = uniform_weights(len(selected))
        averaged = weighted_average(selected, w, tag=f"uniform-{name}-{k}")
        return _record({"k": k}, averaged, objective)

    return parallel_map(evaluate, range(1, min(k_max, len(ordered)) + 1), threads)


def temp_sweep(
    series: Sequence[Checkpoint],
    strategy: SelectionStrategy,
    taus: Sequence[float],
    objective: Objective,
    threads: int = 1,
) -> list[SweepRecord]:
    """Evaluates perplexity-weighted averages over a range of temperatures.

    Args:
        series: The checkpoint series, with development perplexities.
        strategy: Selects the checkpoints to average.
        taus: The temperatures, evaluated in the given order.
        objective: The development objective.
        threads: Maximum number of grid points evaluated in parallel.

    Returns:
        One record with parameter ``tau`` and the weights used, per temperature.
    """
    selected = _selected(series, strategy)
    ppls = _ppls(selected)

    def evaluate(tau: float) -> SweepRecord:
        w = ppl_softmax_weights(ppls, TemperatureConfig(tau))
        averaged = weighted_average(selected, w, tag=f"ppl-softmax-{tau!r}")
        return _record({"tau": tau}, averaged, objective, w)

    return parallel_map(evaluate, taus, threads)


def eta_sweep_grad(
    series: Sequence[Checkpoint],
    strategy: SelectionStrategy,
    tau: float,
    etas: Sequence[float],
    objective: Objective,
    threads: int = 1,
) -> list[SweepRecord]:
    """Evaluates gradient-step averages over a range of step sizes.

    Args:
        series: The checkpoint series, with gradients and development perplexities.
        strategy: Selects the checkpoints to average.
        tau: Temperature of the perplexity weights.
        etas: The step sizes, evaluated in the given order.
        objective: The development objective.
        threads: Maximum number of grid points evaluated in parallel.

    Returns:
        One record with parameter ``eta`` and the weights used, per step size.
    """
    selected = _selected(series, strategy)
    w = ppl_softmax_weights(_ppls(selected), TemperatureConfig(tau))

    def evaluate(eta: float) -> SweepRecord:
        stepped = gradient_step_average(
            selected, w, GradStepConfig(eta), tag=f"gradient-step-{eta!r}"
        )
        return _record({"eta": eta}, stepped, objective, w)

    return parallel_map(evaluate, etas, threads)


def eta_sweep_optimize(
    ckpts: Sequence[Checkpoint],
    etas: Sequence[float],
    objective: Objective,
    threads: int = 1,
) -> list[SweepRecord]:
    """Evaluates one-step optimized interpolation weights over a range of step sizes.

    The logit gradient is computed once at uniform weights and scaled by each step
    size.

    Args:
        ckpts: At least two compatible checkpoints.
        etas: The logit step sizes, evaluated in the given order.
        objective: The development objective.
        threads: Maximum number of grid points evaluated in parallel.

    Returns:
        One record with parameter ``eta`` and the optimized weights, per step size.
    """
    path = optimize_path(ckpts, objective, etas)

    def evaluate(point: tuple[float, WeightVector]) -> SweepRecord:
        eta, w = point
        averaged = weighted_average(ckpts, w, tag=f"optimized-{eta!r}")
        return _record({"eta": eta}, averaged, objective, w)

    points = [(eta, w) for eta, (w, _) in zip(etas, path)]
    return parallel_map(evaluate, points, threads)


def simplex_grid(
    c1: Checkpoint,
    c2: Checkpoint,
    c3: Checkpoint,
    grid: SimplexGridSpec,
    objective: Objective,
    threads: int = 1,
) -> list[SweepRecord]:
    """Evaluates averages of three checkpoints on a barycentric lattice.

    Args:
        c1: The checkpoint weighted by ``a / R``.
        c2: The checkpoint weighted by ``b / R``.
        c3: The checkpoint weighted by ``c / R``.
        grid: The lattice resolution ``R``.
        objective: The development objective.
        threads: Maximum number of grid points evaluated in parallel.

    Returns:
        ``(R + 1)(R + 2) / 2`` records with parameters ``a``, ``b``, ``c`` and the
        weights, in lexicographic ``(a, b)`` order.
    """
    ckpts = [c1, c2, c3]
    validate_compat(ckpts)
    r = grid.resolution

    def evaluate(point: tuple[int, int, int]) -> SweepRecord:
        w = WeightVector([n / r for n in point])
        averaged = weighted_average(ckpts, w, tag="simplex")
        a, b, c = point
        return _record({"a": a, "b": b, "c": c}, averaged, objective, w)

    return parallel_map(evaluate, grid.points(), threads)


def simplex_flatness(records: Sequence[SweepRecord]) -> FlatnessReport:
    """Summarizes how flat the loss surface of a simplex grid is.

    Args:
        records: Records produced by [`simplex_grid`][ckav.sweep.simplex_grid].

    Returns:
        The loss spread over the interior points and over the whole grid.
    """
    if len(records) == 0:
        raise SweepUsageError("no simplex records to summarize")
    losses = [record.dev_loss for record in records]
    interior = [
        record.dev_loss
        for record in records
        if all(record.params[axis] >= 1 for axis in ("a", "b", "c"))
    ]
    return FlatnessReport(
        interior_spread=max(interior) - min(interior) if interior else None,
        grid_spread=max(losses) - min(losses),
    )
