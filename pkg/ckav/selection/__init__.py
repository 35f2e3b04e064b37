"""Checkpoint selection strategies.

**ckav** provides the selection rules used when averaging a series of checkpoints:
the top-``k`` checkpoints by development perplexity, the ``k`` checkpoints ending at
the best one, and the final ``k`` checkpoints. The
[`SelectionStrategy`][ckav.selection.strategy.SelectionStrategy] abstract base class
can also be sub-classed to implement custom rules.
"""

from __future__ import annotations

from ckav.selection.ranked import TopKStrategy
from ckav.selection.strategy import (
    SelectionKind,
    SelectionResult,
    SelectionStrategy,
    select,
)
from ckav.selection.window import LastKFromBestStrategy, LastKFromEndStrategy

_STRATEGIES: dict[SelectionKind, type[SelectionStrategy]] = {
    SelectionKind.TOP_K: TopKStrategy,
    SelectionKind.LAST_K_FROM_BEST: LastKFromBestStrategy,
    SelectionKind.LAST_K_FROM_END: LastKFromEndStrategy,
}


def make_strategy(kind: SelectionKind | str, k: int) -> SelectionStrategy:
    """Creates the strategy implementing a selection rule.

    Args:
        kind: A selection kind or its command-line name (e.g. ``"top-k"``).
        k: The number of checkpoints to select.

    Returns:
        The configured strategy.
    """
    return _STRATEGIES[SelectionKind(kind)](k)


__all__ = [
    "SelectionKind",
    "SelectionResult",
    "SelectionStrategy",
    "TopKStrategy",
    "LastKFromBestStrategy",
    "LastKFromEndStrategy",
    "make_strategy",
    "select",
]
