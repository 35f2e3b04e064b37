"""Provides ranking-based checkpoint selection."""

from __future__ import annotations

from collections.abc import Sequence

from overrides import override

from ckav.checkpoint import CheckpointMeta
from ckav.selection.strategy import SelectionKind, SelectionStrategy


class TopKStrategy(SelectionStrategy):
    """Selects the ``k`` checkpoints with the lowest development perplexity.

    Ties are broken by the smaller step. The result is ordered by perplexity, then
    step.
    """

    @override
    def __repr__(self) -> str:
        return f"top-k (k={self.k})"

    @property
    @override
    def kind(self) -> SelectionKind:
        return SelectionKind.TOP_K

    @override
    def _select(self, metas: Sequence[CheckpointMeta]) -> list[int]:
        ranked = sorted(
            range(len(metas)), key=lambda i: (metas[i].dev_ppl, metas[i].step, i)
        )
        return ranked[: self.k]
