"""Provides [`SelectionStrategy`][ckav.selection.strategy.SelectionStrategy] class."""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import TypeVar

from overrides import EnforceOverrides

from ckav.checkpoint import CheckpointMeta
from ckav.exceptions import SelectionUsageError

T = TypeVar("T")


class SelectionKind(Enum):
    """Enum for the available checkpoint selection rules."""

    TOP_K = "top-k"
    LAST_K_FROM_BEST = "last-k-best"
    LAST_K_FROM_END = "last-k-end"


@dataclass(frozen=True)
class SelectionResult:
    """Positions of the selected checkpoints within the input series."""

    indices: tuple[int, ...]

    def __len__(self) -> int:
        """Returns the number of selected checkpoints."""
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        """Iterates over the selected positions in selection order."""
        return iter(self.indices)

    def take(self, items: Sequence[T]) -> list[T]:
        """Picks the selected entries out of a series.

        Args:
            items: A series aligned with the metadata that was selected from.

        Returns:
            The selected entries, in selection order.
        """
        return [items[i] for i in self.indices]


class SelectionStrategy(ABC, EnforceOverrides):
    """Base class for a checkpoint selection strategy.

    A strategy picks ``k`` checkpoints out of a series of checkpoint metadata ordered
    by training step. When the series is shorter than ``k``, the whole series is
    selected.
    """

    #: Whether the strategy needs a development perplexity for every checkpoint
    requires_ppl: bool = True

    def __init__(self, k: int) -> None:
        """Initializes a selection strategy.

        Args:
            k: The number of checkpoints to select.
        """
        if isinstance(k, bool) or int(k) != k or k < 1:
            raise ValueError("k must be a positive integer")
        self.k = int(k)

    @abstractmethod
    def __repr__(self) -> str:
        """Returns a string representation of the strategy."""

    @property
    @abstractmethod
    def kind(self) -> SelectionKind:
        """The selection rule implemented by the strategy."""

    @abstractmethod
    def _select(self, metas: Sequence[CheckpointMeta]) -> list[int]:
        """Returns the selected positions of a validated, non-empty series."""

    def select(self, metas: Sequence[CheckpointMeta]) -> SelectionResult:
        """Selects checkpoints from a series.

        Args:
            metas: Checkpoint metadata ordered by step ascending.

        Returns:
            The positions of the selected checkpoints.

        Raises:
            SelectionUsageError: If the series is empty or a required perplexity is
                missing.
        """
        if len(metas) == 0:
            raise SelectionUsageError("cannot select from an empty series")
        if self.requires_ppl:
            missing = [i for i, meta in enumerate(metas) if meta.dev_ppl is None]
            if missing:
                raise SelectionUsageError(
                    f"{self!r} requires dev_ppl, missing for checkpoints {missing}"
                )
        return SelectionResult(indices=tuple(self._select(metas)))


def select(
    metas: Sequence[CheckpointMeta], strategy: SelectionStrategy
) -> SelectionResult:
    """Selects checkpoints from a series with a strategy.

    Args:
        metas: Checkpoint metadata ordered by step ascending.
        strategy: The selection strategy.

    Returns:
        The positions of the selected checkpoints.
    """
    return strategy.select(metas)
