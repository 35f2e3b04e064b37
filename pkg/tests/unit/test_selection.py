import numpy as np
import pytest
from overrides import override

from ckav import CheckpointMeta
from ckav.exceptions import SelectionUsageError
from ckav.selection import (
    LastKFromBestStrategy,
    LastKFromEndStrategy,
    SelectionKind,
    SelectionResult,
    SelectionStrategy,
    TopKStrategy,
    make_strategy,
    select,
)


def metas_from(ppls, steps=None):
    steps = steps or range(1, len(ppls) + 1)
    return [CheckpointMeta(step=s, dev_ppl=p) for s, p in zip(steps, ppls)]


@pytest.fixture
def metas():
    return metas_from([9.0, 5.0, 6.0, 5.5])


class TestSelectionStrategy:
    class FirstStrategy(SelectionStrategy):
        requires_ppl = False

        @override
        def __repr__(self) -> str:
            return "first"

        @property
        @override
        def kind(self) -> SelectionKind:
            return SelectionKind.LAST_K_FROM_END

        @override
        def _select(self, metas) -> list[int]:
            return [0]

    @pytest.mark.parametrize("k", [0, -1, 1.5, True])
    def test_init_rejects_invalid_k(self, k):
        with pytest.raises(ValueError):
            self.FirstStrategy(k)

    def test_select_rejects_empty_series(self):
        with pytest.raises(SelectionUsageError):
            self.FirstStrategy(1).select([])

    def test_select_wraps_indices(self, metas):
        assert self.FirstStrategy(1).select(metas) == SelectionResult((0,))

    def test_module_level_select_delegates(self, mocker, metas):
        strategy = self.FirstStrategy(1)
        spy = mocker.spy(strategy, "select")
        select(metas, strategy)
        spy.assert_called_once_with(metas)

    @pytest.mark.parametrize("cls", [TopKStrategy, LastKFromBestStrategy])
    def test_missing_ppl_raises(self, cls):
        metas = [CheckpointMeta(step=1, dev_ppl=3.0), CheckpointMeta(step=2)]
        with pytest.raises(SelectionUsageError, match="requires dev_ppl"):
            cls(1).select(metas)


class TestSelectionResult:
    def test_take_picks_items_in_selection_order(self):
        assert SelectionResult((2, 0)).take(["a", "b", "c"]) == ["c", "a"]

    def test_len_and_iter(self):
        result = SelectionResult((1, 3))
        assert len(result) == 2
        assert list(result) == [1, 3]


class TestTopKStrategy:
    def test_selects_lowest_ppl(self, metas):
        assert list(TopKStrategy(2).select(metas)) == [1, 3]

    def test_k_one_is_argmin(self, metas):
        assert list(TopKStrategy(1).select(metas)) == [1]

    def test_ties_broken_by_smaller_step(self):
        metas = metas_from([4.0, 3.0, 3.0, 3.0], steps=[10, 40, 20, 30])
        assert list(TopKStrategy(2).select(metas)) == [2, 3]

    def test_clips_to_series_length(self, metas):
        assert sorted(TopKStrategy(10).select(metas)) == [0, 1, 2, 3]

    def test_selects_k_smallest_under_permutation(self):
        rng = np.random.default_rng(7)
        ppls = rng.uniform(2, 20, size=12)
        for _ in range(5):
            perm = rng.permutation(12)
            metas = metas_from(list(ppls[perm]))
            chosen = [metas[i].dev_ppl for i in TopKStrategy(4).select(metas)]
            assert chosen == sorted(ppls)[:4]

    def test_nested_in_k(self):
        metas = metas_from(list(np.random.default_rng(11).uniform(2, 20, 15)))
        for k in range(1, 15):
            smaller = set(TopKStrategy(k).select(metas))
            assert smaller < set(TopKStrategy(k + 1).select(metas))

    def test_kind(self):
        assert TopKStrategy(1).kind is SelectionKind.TOP_K


class TestLastKFromBestStrategy:
    def test_window_ends_at_best(self, metas):
        assert list(LastKFromBestStrategy(2).select(metas)) == [0, 1]

    def test_window_clips_at_start(self, metas):
        assert list(LastKFromBestStrategy(3).select(metas)) == [0, 1]

    def test_window_in_the_middle(self):
        metas = metas_from([9.0, 8.0, 7.0, 6.0, 7.5, 8.5])
        assert list(LastKFromBestStrategy(3).select(metas)) == [1, 2, 3]

    def test_best_tie_uses_smaller_step(self):
        metas = metas_from([9.0, 5.0, 6.0, 5.0])
        assert list(LastKFromBestStrategy(1).select(metas)) == [1]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_k_one_equals_top_k(self, seed):
        metas = metas_from(list(np.random.default_rng(seed).uniform(1, 9, 8)))
        assert list(LastKFromBestStrategy(1).select(metas)) == list(
            TopKStrategy(1).select(metas)
        )


class TestLastKFromEndStrategy:
    def test_selects_final_k(self, metas):
        assert list(LastKFromEndStrategy(2).select(metas)) == [2, 3]

    def test_does_not_need_ppl(self):
        metas = [CheckpointMeta(step=s) for s in range(5)]
        assert list(LastKFromEndStrategy(3).select(metas)) == [2, 3, 4]

    def test_clips_to_series_length(self, metas):
        assert list(LastKFromEndStrategy(9).select(metas)) == [0, 1, 2, 3]


class TestMakeStrategy:
    @pytest.mark.parametrize(
        "kind,cls",
        [
            ("top-k", TopKStrategy),
            ("last-k-best", LastKFromBestStrategy),
            (SelectionKind.LAST_K_FROM_END, LastKFromEndStrategy),
        ],
    )
    def test_builds_strategy_for_kind(self, kind, cls):
        strategy = make_strategy(kind, 3)
        assert isinstance(strategy, cls)
        assert strategy.k == 3

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError):
            make_strategy("best-effort", 3)
