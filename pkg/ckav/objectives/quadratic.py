"""Provides the quadratic bowl task, a checkpoint series with a known optimum.

Checkpoints are noisy copies of a center ``θ*`` stored in a single tensor
``"theta"``. The loss ``||θ - θ*||² / dim`` makes averaging and gradient steps
predictable in closed form, which turns it into an oracle for the flat-landscape
behaviour seen on real models.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from overrides import override

from ckav.checkpoint import Checkpoint, CheckpointMeta, TensorMap
from ckav.container import EXTENSION, write_checkpoint
from ckav.exceptions import CompatibilityError
from ckav.objectives.objective import Objective

logger = logging.getLogger(__name__)

#: Name of the single tensor of a quadratic checkpoint
THETA = "theta"


@dataclass(frozen=True)
class QuadraticTaskSpec:
    """Definition of a quadratic checkpoint series."""

    #: Dimension of ``theta``
    dim: int

    #: The optimum ``θ*``
    center: tuple[float, ...] = field(default=())

    #: Standard deviation of the per-coordinate checkpoint noise
    noise_sigma: float = 0.5

    #: Number of checkpoints to sample
    num_checkpoints: int = 16

    #: A seed for random number generation
    seed: int = 0

    def __post_init__(self) -> None:
        """Validates the task, defaulting the center to the origin.

        Raises:
            ValueError: If sizes are not positive, the noise is negative, or the
                center length differs from ``dim``.
        """
        for name in ("dim", "num_checkpoints"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
        center = tuple(float(c) for c in self.center) or (0.0,) * self.dim
        if len(center) != self.dim:
            raise ValueError(f"center has {len(center)} entries, expected {self.dim}")
        if not all(math.isfinite(c) for c in center):
            raise ValueError("center must be finite")
        object.__setattr__(self, "center", center)
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be finite and non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        """Returns the task as a JSON-compatible dictionary."""
        return {
            "dim": self.dim,
            "center": list(self.center),
            "noise_sigma": self.noise_sigma,
            "num_checkpoints": self.num_checkpoints,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> QuadraticTaskSpec:
        """Creates a spec from a dictionary.

        ``dim`` may be omitted when ``center`` is given.
        """
        try:
            center = tuple(values.get("center", ()))
            return cls(
                dim=values.get("dim", len(center)),
                center=center,
                noise_sigma=values.get("noise_sigma", 0.5),
                num_checkpoints=values.get("num_checkpoints", 16),
                seed=values.get("seed", 0),
            )
        except TypeError as e:
            raise ValueError(f"invalid quadratic task spec: {e}") from e


class QuadraticObjective(Objective):
    """Normalized squared distance to a fixed center."""

    def __init__(self, center: ArrayLike):
        """Initializes the objective.

        Args:
            center: The optimum ``θ*``.
        """
        self.center: NDArray[np.float64] = np.array(center, dtype=np.float64)
        if self.center.ndim != 1 or len(self.center) == 0:
            raise ValueError("center must be a non-empty vector")
        self.center.setflags(write=False)

    @override
    def __repr__(self) -> str:
        return f"quadratic(dim={len(self.center)})"

    def _theta(self, params: TensorMap) -> NDArray[np.float64]:
        if list(params) != [THETA] or params[THETA].shape != self.center.shape:
            raise CompatibilityError(
                f"shape mismatch: expected tensor {THETA!r} of shape "
                f"{list(self.center.shape)}, got {params!r}"
            )
        return np.asarray(params[THETA], dtype=np.float64)

    @override
    def loss(self, params: TensorMap) -> float:
        diff = self._theta(params) - self.center
        return float(diff @ diff) / len(self.center)

    @override
    def grad(self, params: TensorMap) -> TensorMap:
        diff = self._theta(params) - self.center
        return TensorMap({THETA: 2.0 * diff / len(self.center)})


def quadratic_checkpoints(spec: QuadraticTaskSpec) -> list[Checkpoint]:
    """Samples a quadratic checkpoint series in memory.

    Checkpoint ``k`` holds ``θ* + ε_k`` with ``ε_k`` drawn iid from
    ``normal(0, noise_sigma²)``. Its gradient and ``dev_ppl = exp(L)`` are computed
    from the stored 32-bit parameters.

    Args:
        spec: The task definition.

    Returns:
        The checkpoints, with steps ``0 .. num_checkpoints - 1``.
    """
    objective = QuadraticObjective(spec.center)
    rng = np.random.default_rng(spec.seed)
    ckpts = []
    for k in range(spec.num_checkpoints):
        noise = rng.normal(0.0, spec.noise_sigma, size=spec.dim)
        params = TensorMap({THETA: (objective.center + noise).astype(np.float32)})
        ckpts.append(
            Checkpoint(
                params=params,
                grads=objective.grad(params),
                meta=CheckpointMeta(
                    step=k, dev_ppl=math.exp(objective.loss(params)), tag="quadratic"
                ),
            )
        )
    return ckpts


def sample_quadratic_checkpoints(
    spec: QuadraticTaskSpec, out_dir: str | Path
) -> list[CheckpointMeta]:
    """Samples a quadratic checkpoint series and writes it to disk.

    Args:
        spec: The task definition.
        out_dir: Directory receiving ``ckpt-<step>.ckav`` files.

    Returns:
        The metadata of every written checkpoint, in step order.
    """
    out = Path(out_dir)
    metas = []
    for ckpt in quadratic_checkpoints(spec):
        write_checkpoint(out / f"ckpt-{ckpt.meta.step:06d}{EXTENSION}", ckpt)
        metas.append(ckpt.meta)
    logger.info("wrote %d quadratic checkpoints to %s", len(metas), out)
    return metas

