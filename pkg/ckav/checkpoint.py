"""Provides in-memory checkpoint types.

A [`Checkpoint`][ckav.checkpoint.Checkpoint] bundles model parameters, the optional
gradient of the most recent training batch, and a little metadata. Parameters and
gradients live in a [`TensorMap`][ckav.checkpoint.TensorMap], an immutable mapping
from tensor names to arrays that always iterates in lexicographic name order.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, DTypeLike, NDArray

from ckav.exceptions import CompatibilityError

#: Storage dtype of checkpoint tensors
STORAGE_DTYPE = np.dtype(np.float32)

#: Smallest development perplexity accepted in metadata
MIN_DEV_PPL = 1e-9


class TensorMap(Mapping[str, NDArray[Any]]):
    """Immutable mapping from tensor names to dense floating point arrays.

    Floating point inputs keep their precision; anything else is converted to 64-bit
    floats. Arrays are copied on construction and marked read-only, which makes a
    tensor map safe to share between threads.
    """

    def __init__(self, entries: Mapping[str, ArrayLike] | None = None):
        """Initializes a tensor map.

        Args:
            entries: Tensors keyed by name.

        Raises:
            ValueError: If a name is empty or a tensor has a zero-length dimension.
        """
        tensors: dict[str, NDArray[Any]] = {}
        for name in sorted(entries or {}):
            if not isinstance(name, str) or not name:
                raise ValueError("tensor names must be non-empty strings")
            array = np.array(entries[name])  # type: ignore[index]
            if not np.issubdtype(array.dtype, np.floating):
                array = array.astype(np.float64)
            if any(dim < 1 for dim in array.shape):
                raise ValueError(f"tensor {name!r} has a zero-length dimension")
            array.setflags(write=False)
            tensors[name] = array
        self._tensors = tensors

    def __getitem__(self, name: str) -> NDArray[Any]:
        """Returns the tensor with the given name."""
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        """Iterates over tensor names in lexicographic order."""
        return iter(self._tensors)

    def __len__(self) -> int:
        """Returns the number of tensors."""
        return len(self._tensors)

    def __repr__(self) -> str:
        """Returns a summary of tensor names and shapes."""
        inner = ", ".join(f"{name}: {list(t.shape)}" for name, t in self.items())
        return f"TensorMap({{{inner}}})"

    def __eq__(self, other: object) -> bool:
        """Returns whether two maps hold the same names, shapes, dtypes and bytes."""
        if not isinstance(other, TensorMap):
            return NotImplemented
        if list(self) != list(other):
            return False
        return all(
            a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()
            for a, b in zip(self.values(), other.values())
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        """The shape of every tensor, keyed by name."""
        return {name: tensor.shape for name, tensor in self.items()}

    @property
    def size(self) -> int:
        """The total number of elements over all tensors."""
        return sum(tensor.size for tensor in self.values())

    def astype(self, dtype: DTypeLike) -> TensorMap:
        """Returns a copy of the map with every tensor cast to ``dtype``."""
        return TensorMap({name: t.astype(dtype) for name, t in self.items()})

    def all_finite(self) -> bool:
        """Returns ``True`` if no tensor contains NaN or infinite values."""
        return all(bool(np.isfinite(tensor).all()) for tensor in self.values())


@dataclass(frozen=True)
class CheckpointMeta:
    """Metadata saved with a checkpoint."""

    #: Training step at save time
    step: int = 0

    #: Development set perplexity, if it was measured
    dev_ppl: float | None = None

    #: Free-form description, e.g. the averaging scheme that produced the checkpoint
    tag: str = ""

    def __post_init__(self) -> None:
        """Validates the metadata fields.

        Raises:
            ValueError: If the step is negative or the perplexity is not a finite
                value above ``MIN_DEV_PPL``.
        """
        if isinstance(self.step, bool) or int(self.step) != self.step or self.step < 0:
            raise ValueError("step must be a non-negative integer")
        object.__setattr__(self, "step", int(self.step))
        if self.dev_ppl is not None:
            dev_ppl = float(self.dev_ppl)
            if not math.isfinite(dev_ppl) or dev_ppl <= MIN_DEV_PPL:
                raise ValueError(f"dev_ppl must be finite and > {MIN_DEV_PPL}")
            object.__setattr__(self, "dev_ppl", dev_ppl)

    def to_dict(self) -> dict[str, Any]:
        """Returns the metadata as a JSON-compatible dictionary."""
        return {"step": self.step, "dev_ppl": self.dev_ppl, "tag": self.tag}

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> CheckpointMeta:
        """Creates metadata from a dictionary produced by ``to_dict``."""
        return cls(
            step=values.get("step", 0),
            dev_ppl=values.get("dev_ppl"),
            tag=values.get("tag", ""),
        )


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Snapshot of model parameters saved during training.

    Parameters and gradients are always held in the 32-bit storage dtype.
    """

    #: Model parameters
    params: TensorMap

    #: Gradient of the most recent batch, with the same names and shapes as params
    grads: TensorMap | None = None

    #: Step, perplexity and tag
    meta: CheckpointMeta = field(default_factory=CheckpointMeta)

    def __post_init__(self) -> None:
        """Casts tensors to the storage dtype and checks gradient layout.

        Raises:
            CompatibilityError: If gradients do not mirror the parameters.
        """
        object.__setattr__(self, "params", _as_storage(self.params))
        if self.grads is not None:
            grads = _as_storage(self.grads)
            if grads.shapes != self.params.shapes:
                raise CompatibilityError(
                    "gradient/param mismatch: "
                    f"params {sorted(self.params)} vs grads {sorted(grads)}"
                )
            object.__setattr__(self, "grads", grads)

    def __eq__(self, other: object) -> bool:
        """Returns whether two checkpoints hold identical tensors and metadata."""
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.params == other.params
            and self.grads == other.grads
            and self.meta == other.meta
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def has_grads(self) -> bool:
        """Whether the checkpoint carries gradients."""
        return self.grads is not None

    def with_meta(self, **changes: Any) -> Checkpoint:
        """Returns a copy of the checkpoint with updated metadata fields."""
        return replace(self, meta=replace(self.meta, **changes))


def _as_storage(tensors: Mapping[str, ArrayLike]) -> TensorMap:
    if isinstance(tensors, TensorMap) and all(
        t.dtype == STORAGE_DTYPE for t in tensors.values()
    ):
        return tensors
    return TensorMap(
        {name: np.asarray(t, dtype=STORAGE_DTYPE) for name, t in tensors.items()}
    )


def validate_compat(ckpts: Sequence[Checkpoint]) -> None:
    """Checks that checkpoints share tensor names and shapes.

    Gradient presence may differ between checkpoints.

    Args:
        ckpts: The checkpoints to compare.

    Raises:
        CompatibilityError: If the list is empty, a tensor is missing from one of
            the checkpoints, or shapes differ.
    """
    if len(ckpts) == 0:
        raise CompatibilityError("no checkpoints given")
    reference = ckpts[0].params.shapes
    for i, ckpt in enumerate(ckpts[1:], start=1):
        shapes = ckpt.params.shapes
        for name in reference:
            if name not in shapes:
                raise CompatibilityError(
                    f"incompatible: {name} missing in checkpoint {i}"
                )
        for name in shapes:
            if name not in reference:
                raise CompatibilityError(
                    f"incompatible: {name} missing in checkpoint 0"
                )
        for name, shape in reference.items():
            if shapes[name] != shape:
                raise CompatibilityError(
                    f"shape mismatch at {name}: {list(shape)} in checkpoint 0, "
                    f"{list(shapes[name])} in checkpoint {i}"
                )
