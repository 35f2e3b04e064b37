"""Provides Adam training of the toy classifier with periodic checkpoints.

Training produces the checkpoint series that selection, averaging and the sweeps
consume. Every checkpoint stores the current parameters, the gradient of the most
recent minibatch and the development perplexity measured at save time.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ckav.checkpoint import STORAGE_DTYPE, Checkpoint, CheckpointMeta, TensorMap
from ckav.container import EXTENSION, PathType, write_checkpoint
from ckav.objectives.mlp import (
    DevSet,
    ToyModelSpec,
    forward_loss,
    grad_params,
    init_params,
    make_synthetic_data,
)

logger = logging.getLogger(__name__)

#: Default number of synthetic training examples
DEFAULT_N_TRAIN = 2000

#: Default number of synthetic development examples
DEFAULT_N_DEV = 500


@dataclass(frozen=True)
class AdamConfig:
    """Optimizer and checkpointing settings of a training run."""

    #: Learning rate
    lr: float = 1e-3

    #: Decay rate of the first moment estimate
    beta1: float = 0.9

    #: Decay rate of the second moment estimate
    beta2: float = 0.999

    #: Constant added to the denominator for numerical stability
    eps: float = 1e-8

    #: Number of examples per minibatch
    batch_size: int = 32

    #: Number of minibatch steps
    steps: int = 8000

    #: Save a checkpoint every this many steps
    checkpoint_every: int = 200

    #: A seed for parameter initialization and shuffling
    seed: int = 0

    def __post_init__(self) -> None:
        """Validates the settings.

        Raises:
            ValueError: If a setting is out of range.
        """
        if not math.isfinite(self.lr) or self.lr <= 0:
            raise ValueError("lr must be positive")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not math.isfinite(self.eps) or self.eps <= 0:
            raise ValueError("eps must be positive")
        for name in ("batch_size", "steps", "checkpoint_every"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict[str, Any]:
        """Returns the settings as a JSON-compatible dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> AdamConfig:
        """Creates settings from a dictionary; missing keys take their defaults."""
        known = cls.__dataclass_fields__
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ValueError(f"unknown Adam settings {unknown}")
        try:
            return cls(**dict(values))
        except TypeError as e:
            raise ValueError(f"invalid Adam settings: {e}") from e


class Adam:
    """Adam optimizer with bias-corrected moment estimates."""

    def __init__(self, cfg: AdamConfig):
        """Initializes the optimizer.

        Args:
            cfg: Optimizer settings.
        """
        self.cfg = cfg
        self.t = 0
        self._m: dict[str, NDArray[np.float64]] = {}
        self._v: dict[str, NDArray[np.float64]] = {}

    def step(
        self, params: dict[str, NDArray[np.float64]], grads: Mapping[str, Any]
    ) -> None:
        """Updates parameters in place.

        Args:
            params: Parameters to update.
            grads: Gradients with the same names and shapes.
        """
        self.t += 1
        cfg = self.cfg
        step_size = cfg.lr / (1.0 - cfg.beta1**self.t)
        bias2 = 1.0 - cfg.beta2**self.t
        for name, param in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if name not in self._m:
                self._m[name] = np.zeros_like(param)
                self._v[name] = np.zeros_like(param)
            m, v = self._m[name], self._v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            param -= step_size * m / (np.sqrt(v / bias2) + cfg.eps)


def _batches(
    n: int, batch_size: int, rng: np.random.Generator
) -> Iterator[NDArray[np.intp]]:
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def train(
    spec: ToyModelSpec, train_data: DevSet, dev: DevSet, cfg: AdamConfig
) -> Iterator[Checkpoint]:
    """Trains the toy classifier, yielding a checkpoint every few steps.

    Parameters are initialized from ``cfg.seed``; minibatches come from a per-epoch
    shuffle seeded with ``cfg.seed + 1``. The run is single-threaded and fully
    deterministic. ``dev_ppl`` is measured on the stored 32-bit parameters.

    Args:
        spec: The model architecture.
        train_data: Training examples.
        dev: Development examples used to measure ``dev_ppl``.
        cfg: Optimizer settings.

    Yields:
        One checkpoint per ``cfg.checkpoint_every`` steps, in step order.
    """
    train_data.check_labels(spec)
    dev.check_labels(spec)
    params = {name: np.array(t) for name, t in init_params(spec, cfg.seed).items()}
    optimizer = Adam(cfg)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)
    batches = _batches(len(train_data), cfg.batch_size, shuffle_rng)
    for step in range(1, cfg.steps + 1):
        grads = grad_params(TensorMap(params), train_data.subset(next(batches)), spec)
        optimizer.step(params, grads)
        if step % cfg.checkpoint_every == 0:
            current = TensorMap(params).astype(STORAGE_DTYPE)
            _, dev_ppl = forward_loss(current, dev, spec)
            logger.info("step %d: dev_ppl %.6f", step, dev_ppl)
            yield Checkpoint(
                params=current,
                grads=grads,
                meta=CheckpointMeta(step=step, dev_ppl=dev_ppl, tag="adam"),
            )


def train_with_checkpoints(
    spec: ToyModelSpec,
    train_data: DevSet,
    dev: DevSet,
    cfg: AdamConfig,
    out_dir: PathType,
) -> list[CheckpointMeta]:
    """Trains the toy classifier and writes its checkpoints to disk.

    Args:
        spec: The model architecture.
        train_data: Training examples.
        dev: Development examples used to measure ``dev_ppl``.
        cfg: Optimizer settings.
        out_dir: Directory receiving ``ckpt-<step>.ckav`` files.

    Returns:
        The metadata of every written checkpoint, in step order.
    """
    out = Path(out_dir)
    metas = []
    for ckpt in train(spec, train_data, dev, cfg):
        write_checkpoint(out / f"ckpt-{ckpt.meta.step:06d}{EXTENSION}", ckpt)
        metas.append(ckpt.meta)
    logger.info("wrote %d checkpoints to %s", len(metas), out)
    return metas


def make_toy_task(
    spec: ToyModelSpec,
    n_train: int = DEFAULT_N_TRAIN,
    n_dev: int = DEFAULT_N_DEV,
    seed: int = 0,
) -> tuple[DevSet, DevSet]:
    """Samples training and development sets of one synthetic task.

    Args:
        spec: The model architecture.
        n_train: Number of training examples.
        n_dev: Number of development examples.
        seed: A seed for random number generation.

    Returns:
        The training set and the development set.
    """
    if n_train < 1 or n_dev < 1:
        raise ValueError("n_train and n_dev must be at least 1")
    return make_synthetic_data(spec, n_train + n_dev, seed).split(n_train)
