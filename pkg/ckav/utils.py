"""Provides commonly used utility functions."""

from __future__ import annotations

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np
from numpy.typing import ArrayLike

T = TypeVar("T")
R = TypeVar("R")


def stable_argmin(values: ArrayLike, steps: ArrayLike) -> int:
    """Computes the argmin of an array with a deterministic tie-break.

    If there are multiple minimums, the one with the smallest step is chosen, and
    among equal steps the earliest position wins.

    Args:
        values: An input array.
        steps: Training steps aligned with ``values``.

    Returns:
        The position of the minimum.
    """
    values, steps = np.asarray(values), np.asarray(steps)
    candidates = np.where(values == np.min(values))[0]
    return int(candidates[np.argmin(steps[candidates])])


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Applies a function to every item, optionally on a thread pool.

    Results are always returned in input order, so callers see the same output
    for any thread count.

    Args:
        fn: The function to apply.
        items: The inputs.
        threads: Maximum number of worker threads.

    Returns:
        A list of results aligned with ``items``.
    """
    if threads < 1:
        raise ValueError("threads must be at least 1")
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
