from __future__ import annotations

import numpy as np
import pytest
from overrides import override

from ckav import Checkpoint, CheckpointMeta, TensorMap
from ckav.objectives import Objective, QuadraticObjective, QuadraticTaskSpec


class ConstantObjective(Objective):
    def __init__(self, value: float = 1.0):
        self.value = value

    @override
    def __repr__(self) -> str:
        return "constant-objective"

    @override
    def loss(self, params: TensorMap) -> float:
        return self.value

    @override
    def grad(self, params: TensorMap) -> TensorMap:
        return TensorMap({name: np.zeros(t.shape) for name, t in params.items()})


@pytest.fixture
def ckpt_factory():
    class RandomCheckpointFactory:
        SHAPES = {"a": (3, 2), "b": (4,)}

        @staticmethod
        def random(
            step: int = 0,
            dev_ppl: float | None = None,
            seed: int | None = None,
            grads: bool = True,
            tag: str = "",
            shapes: dict[str, tuple[int, ...]] | None = None,
        ) -> Checkpoint:
            rng = np.random.default_rng(step if seed is None else seed)
            shapes = shapes or RandomCheckpointFactory.SHAPES
            params = {name: rng.standard_normal(s) for name, s in shapes.items()}
            grad_map = (
                {name: rng.standard_normal(s) for name, s in shapes.items()}
                if grads
                else None
            )
            return Checkpoint(
                params=TensorMap(params),
                grads=None if grad_map is None else TensorMap(grad_map),
                meta=CheckpointMeta(step=step, dev_ppl=dev_ppl, tag=tag),
            )

        @staticmethod
        def series(ppls: list[float], grads: bool = True) -> list[Checkpoint]:
            return [
                RandomCheckpointFactory.random(
                    step=100 * (i + 1), dev_ppl=ppl, grads=grads
                )
                for i, ppl in enumerate(ppls)
            ]

    return RandomCheckpointFactory


@pytest.fixture
def objective_factory():
    class ObjectiveFactory:
        @staticmethod
        def constant(value: float = 1.0) -> Objective:
            return ConstantObjective(value)

        @staticmethod
        def quadratic(dim: int = 8) -> QuadraticObjective:
            return QuadraticObjective(np.zeros(dim))

    return ObjectiveFactory


@pytest.fixture
def quadratic_spec():
    return QuadraticTaskSpec(dim=16, noise_sigma=0.5, num_checkpoints=6, seed=3)

