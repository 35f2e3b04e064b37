import math

import numpy as np
import pytest

from ckav import TensorMap, read_series
from ckav.exceptions import CompatibilityError
from ckav.objectives import (
    QuadraticObjective,
    QuadraticTaskSpec,
    quadratic_checkpoints,
    sample_quadratic_checkpoints,
)
from ckav.objectives.quadratic import THETA


class TestQuadraticTaskSpec:
    def test_center_defaults_to_origin(self):
        assert QuadraticTaskSpec(dim=3).center == (0.0, 0.0, 0.0)

    def test_from_dict_infers_dim(self):
        spec = QuadraticTaskSpec.from_dict({"center": [1, 2]})
        assert (spec.dim, spec.center) == (2, (1.0, 2.0))

    def test_dict_round_trip(self, quadratic_spec):
        assert QuadraticTaskSpec.from_dict(quadratic_spec.to_dict()) == quadratic_spec

    @pytest.mark.parametrize(
        "params",
        [
            {"dim": 0},
            {"dim": 2, "center": (1.0,)},
            {"dim": 2, "noise_sigma": -1.0},
            {"dim": 2, "num_checkpoints": 0},
            {"dim": 1, "center": (math.inf,)},
        ],
    )
    def test_rejects_invalid_values(self, params):
        with pytest.raises(ValueError):
            QuadraticTaskSpec(**params)

    @pytest.mark.parametrize(
        "values", [{"center": 5}, {"dim": None}, {"dim": 2, "seed": "zero"}]
    )
    def test_from_dict_reports_wrong_types_as_value_errors(self, values):
        with pytest.raises(ValueError, match="invalid quadratic task spec"):
            QuadraticTaskSpec.from_dict(values)


class TestQuadraticObjective:
    @pytest.fixture
    def objective(self):
        return QuadraticObjective([1.0, -1.0, 0.5, 2.0])

    def test_loss(self, objective):
        params = TensorMap({THETA: [0.0, 0.0, 0.0, 0.0]})
        assert objective.loss(params) == pytest.approx((1 + 1 + 0.25 + 4) / 4)

    def test_loss_is_zero_at_center(self, objective):
        assert objective.loss(TensorMap({THETA: objective.center})) == 0.0

    def test_grad(self, objective):
        theta = np.array([2.0, 0.0, 0.5, 1.0])
        grad = objective.grad(TensorMap({THETA: theta}))[THETA]
        assert grad.tolist() == (2 * (theta - objective.center) / 4).tolist()

    def test_rejects_other_tensors(self, objective):
        with pytest.raises(CompatibilityError, match="shape mismatch"):
            objective.loss(TensorMap({"w": np.zeros(4)}))

    def test_rejects_wrong_dim(self, objective):
        with pytest.raises(CompatibilityError):
            objective.loss(TensorMap({THETA: np.zeros(3)}))

    def test_repr(self, objective):
        assert repr(objective) == "quadratic(dim=4)"


class TestQuadraticCheckpoints:
    def test_series_layout(self, quadratic_spec):
        ckpts = quadratic_checkpoints(quadratic_spec)
        assert [c.meta.step for c in ckpts] == list(range(6))
        assert all(c.params.shapes == {THETA: (16,)} for c in ckpts)
        assert all(c.meta.tag == "quadratic" for c in ckpts)

    def test_ppl_and_grads_match_stored_params(self, quadratic_spec):
        objective = QuadraticObjective(quadratic_spec.center)
        for ckpt in quadratic_checkpoints(quadratic_spec):
            assert ckpt.meta.dev_ppl == math.exp(objective.loss(ckpt.params))
            expected = objective.grad(ckpt.params)[THETA].astype(np.float32)
            assert ckpt.grads[THETA].tobytes() == expected.tobytes()

    def test_seeded(self, quadratic_spec):
        assert quadratic_checkpoints(quadratic_spec) == quadratic_checkpoints(
            quadratic_spec
        )

    def test_noise_level(self):
        spec = QuadraticTaskSpec(dim=4096, noise_sigma=0.5, num_checkpoints=1)
        (ckpt,) = quadratic_checkpoints(spec)
        assert np.std(ckpt.params[THETA]) == pytest.approx(0.5, rel=0.05)

    def test_zero_noise_reproduces_center(self):
        spec = QuadraticTaskSpec(
            dim=3, center=(0.5, -1.25, 2.0), noise_sigma=0.0, num_checkpoints=4
        )
        for ckpt in quadratic_checkpoints(spec):
            assert ckpt.params[THETA].tolist() == [0.5, -1.25, 2.0]
            assert ckpt.meta.dev_ppl == 1.0

    def test_sample_writes_series(self, tmp_path, quadratic_spec):
        metas = sample_quadratic_checkpoints(quadratic_spec, tmp_path)
        paths = sorted(tmp_path.glob("ckpt-*.ckav"))
        assert [p.name for p in paths][:2] == ["ckpt-000000.ckav", "ckpt-000001.ckav"]
        assert [c.meta for c in read_series(paths)] == metas
