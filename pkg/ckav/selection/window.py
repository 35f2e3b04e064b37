"""Provides window-based checkpoint selection.

A window strategy selects ``k`` consecutive checkpoints of the series, ordered by
step. The window is clipped at the start of the series.
"""

from __future__ import annotations

from collections.abc import Sequence

from overrides import override

from ckav.checkpoint import CheckpointMeta
from ckav.selection.strategy import SelectionKind, SelectionStrategy
from ckav.utils import stable_argmin


class LastKFromBestStrategy(SelectionStrategy):
    """Selects the ``k`` checkpoints ending at the best one.

    The best checkpoint has the lowest development perplexity, the smaller step
    winning ties.
    """

    @override
    def __repr__(self) -> str:
        return f"last-k-best (k={self.k})"

    @property
    @override
    def kind(self) -> SelectionKind:
        return SelectionKind.LAST_K_FROM_BEST

    @override
    def _select(self, metas: Sequence[CheckpointMeta]) -> list[int]:
        best = stable_argmin(
            [meta.dev_ppl for meta in metas], [meta.step for meta in metas]
        )
        return list(range(max(0, best - self.k + 1), best + 1))


class LastKFromEndStrategy(SelectionStrategy):
    """Selects the final ``k`` checkpoints of the series."""

    requires_ppl = False

    @override
    def __repr__(self) -> str:
        return f"last-k-end (k={self.k})"

    @property
    @override
    def kind(self) -> SelectionKind:
        return SelectionKind.LAST_K_FROM_END

    @override
    def _select(self, metas: Sequence[CheckpointMeta]) -> list[int]:
        return list(range(max(0, len(metas) - self.k), len(metas)))
