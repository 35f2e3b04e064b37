"""Provides the two-layer tanh MLP classifier used as the toy model.

The model maps an input ``x`` to ``logits = W2 tanh(W1 x + b1) + b2`` and is scored
with the mean cross-entropy of the softmax over ``logits``. Loss and gradients are
computed analytically in 64-bit precision.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from overrides import override
from scipy.special import log_softmax, softmax

from ckav.checkpoint import Checkpoint, CheckpointMeta, TensorMap
from ckav.container import PathType, read_checkpoint, write_checkpoint
from ckav.exceptions import CheckpointFormatError, CompatibilityError
from ckav.objectives.objective import Objective

#: Probability that a synthetic label is replaced by a uniformly drawn class
LABEL_NOISE = 0.05


@dataclass(frozen=True)
class ToyModelSpec:
    """Architecture of the toy classifier."""

    input_dim: int = 8
    hidden_dim: int = 16
    num_classes: int = 4
    activation: str = "tanh"

    def __post_init__(self) -> None:
        """Validates the layer sizes and activation.

        Raises:
            ValueError: If a dimension is smaller than 1 or the activation is not
                ``tanh``.
        """
        for name in ("input_dim", "hidden_dim", "num_classes"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """The expected shape of every parameter tensor."""
        return {
            "W1": (self.hidden_dim, self.input_dim),
            "W2": (self.num_classes, self.hidden_dim),
            "b1": (self.hidden_dim,),
            "b2": (self.num_classes,),
        }

    def to_dict(self) -> dict[str, Any]:
        """Returns the model shape as a JSON-compatible dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> ToyModelSpec:
        """Creates a spec from a dictionary, ignoring unrelated keys."""
        fields = ("input_dim", "hidden_dim", "num_classes", "activation")
        try:
            return cls(**{k: values[k] for k in fields if k in values})
        except TypeError as e:
            raise ValueError(f"invalid toy model spec: {e}") from e


@dataclass(frozen=True, eq=False)
class DevSet:
    """Labelled examples for training or evaluating the toy classifier."""

    #: Matrix of shape ``[n_examples, input_dim]``
    inputs: NDArray[np.float64]

    #: Class index of every example
    labels: NDArray[np.int64]

    def __post_init__(self) -> None:
        """Normalizes dtypes and validates the dataset.

        Raises:
            ValueError: If the dataset is empty or inputs and labels disagree.
        """
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels)
        if inputs.ndim != 2 or len(inputs) < 1:
            raise ValueError("inputs must be a non-empty 2-D matrix")
        if labels.shape != (len(inputs),):
            raise ValueError("labels must hold one class index per example")
        if not np.array_equal(labels, np.round(labels)) or (labels < 0).any():
            raise ValueError("labels must be non-negative integers")
        labels = labels.astype(np.int64)
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        """Returns the number of examples."""
        return len(self.labels)

    def subset(self, indices: ArrayLike) -> DevSet:
        """Returns the examples at the given positions."""
        return DevSet(inputs=self.inputs[indices], labels=self.labels[indices])

    def split(self, n: int) -> tuple[DevSet, DevSet]:
        """Splits the dataset into its first ``n`` examples and the remainder."""
        if not 0 < n < len(self):
            raise ValueError(f"split point must lie in (0, {len(self)})")
        return self.subset(slice(0, n)), self.subset(slice(n, None))

    def check_labels(self, spec: ToyModelSpec) -> None:
        """Checks the dataset against a model spec.

        Raises:
            CompatibilityError: If the input width or a label is out of range.
        """
        if self.inputs.shape[1] != spec.input_dim:
            raise CompatibilityError(
                f"shape mismatch at inputs: {self.inputs.shape[1]} features, "
                f"model expects {spec.input_dim}"
            )
        if self.labels.max() >= spec.num_classes:
            raise CompatibilityError(
                f"label {int(self.labels.max())} out of range for "
                f"{spec.num_classes} classes"
            )


def init_params(spec: ToyModelSpec, seed: int) -> TensorMap:
    """Initializes classifier parameters.

    Weights are drawn uniformly from ``[-a, a]`` with
    ``a = sqrt(6 / (fan_in + fan_out))`` and biases are zero.

    Args:
        spec: The model architecture.
        seed: A seed for random number generation.

    Returns:
        A 64-bit tensor map with ``W1``, ``b1``, ``W2`` and ``b2``.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, NDArray[np.float64]] = {}
    for weight, bias in (("W1", "b1"), ("W2", "b2")):
        fan_out, fan_in = spec.param_shapes[weight]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[weight] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[bias] = np.zeros(fan_out)
    return TensorMap(params)


def make_synthetic_data(spec: ToyModelSpec, n: int, seed: int) -> DevSet:
    """Samples a synthetic classification task.

    A hidden linear map labels standard normal inputs by their largest logit, after
    which a small fraction of labels is replaced by uniformly drawn classes. Inputs
    hold 32-bit values, so the dataset survives a container round trip unchanged. Split
    the result with [`DevSet.split`][ckav.objectives.mlp.DevSet.split] to obtain
    training and development sets of the same task.

    Args:
        spec: The model architecture.
        n: Number of examples.
        seed: A seed for random number generation.

    Returns:
        The sampled dataset.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal((spec.num_classes, spec.input_dim))
    inputs = rng.standard_normal((n, spec.input_dim)).astype(np.float32)
    labels = np.argmax(inputs @ truth.T, axis=1)
    relabel = rng.random(n) < LABEL_NOISE
    labels[relabel] = rng.integers(0, spec.num_classes, size=int(relabel.sum()))
    return DevSet(inputs=inputs, labels=labels)


def _unpack(params: TensorMap, spec: ToyModelSpec) -> dict[str, NDArray[np.float64]]:
    expected = spec.param_shapes
    if set(params) != set(expected):
        raise CompatibilityError(
            f"shape mismatch: expected tensors {sorted(expected)}, got {sorted(params)}"
        )
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CompatibilityError(
                f"shape mismatch at {name}: expected {list(shape)}, "
                f"got {list(params[name].shape)}"
            )
    return {name: np.asarray(params[name], dtype=np.float64) for name in expected}


def _forward(
    p: dict[str, NDArray[np.float64]], data: DevSet
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    hidden = np.tanh(data.inputs @ p["W1"].T + p["b1"])
    return hidden, hidden @ p["W2"].T + p["b2"]


def forward_loss(
    params: TensorMap, data: DevSet, spec: ToyModelSpec
) -> tuple[float, float]:
    """Computes the mean cross-entropy and perplexity of the classifier.

    Args:
        params: Classifier parameters.
        data: Labelled examples.
        spec: The model architecture.

    Returns:
        The loss and the perplexity ``exp(loss)``.

    Raises:
        CompatibilityError: If parameter shapes or the data do not match ``spec``.
    """
    data.check_labels(spec)
    _, logits = _forward(_unpack(params, spec), data)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-np.mean(log_probs[np.arange(len(data)), data.labels]))
    return loss, math.exp(loss)


def grad_params(params: TensorMap, batch: DevSet, spec: ToyModelSpec) -> TensorMap:
    """Computes the analytic gradient of the mean cross-entropy.

    Args:
        params: Classifier parameters.
        batch: Labelled examples.
        spec: The model architecture.

    Returns:
        A 64-bit tensor map with the same names and shapes as ``params``.

    Raises:
        CompatibilityError: If parameter shapes or the data do not match ``spec``.
    """
    batch.check_labels(spec)
    p = _unpack(params, spec)
    hidden, logits = _forward(p, batch)
    d_logits = softmax(logits, axis=1)
    d_logits[np.arange(len(batch)), batch.labels] -= 1.0
    d_logits /= len(batch)
    d_pre = (d_logits @ p["W2"]) * (1.0 - hidden**2)
    return TensorMap(
        {
            "W1": d_pre.T @ batch.inputs,
            "W2": d_logits.T @ hidden,
            "b1": d_pre.sum(axis=0),
            "b2": d_logits.sum(axis=0),
        }
    )


def accuracy(params: TensorMap, data: DevSet, spec: ToyModelSpec) -> float:
    """Returns the fraction of examples whose largest logit is the true label."""
    data.check_labels(spec)
    _, logits = _forward(_unpack(params, spec), data)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


class MlpObjective(Objective):
    """Mean cross-entropy of the toy classifier on a development set."""

    def __init__(self, spec: ToyModelSpec, data: DevSet):
        """Initializes the objective.

        Args:
            spec: The model architecture.
            data: The development set.

        Raises:
            CompatibilityError: If the data does not fit the architecture.
        """
        data.check_labels(spec)
        self.spec = spec
        self.data = data

    @override
    def __repr__(self) -> str:
        dims = (self.spec.input_dim, self.spec.hidden_dim, self.spec.num_classes)
        return f"mlp({'-'.join(map(str, dims))}, n={len(self.data)})"

    @override
    def loss(self, params: TensorMap) -> float:
        return forward_loss(params, self.data, self.spec)[0]

    @override
    def grad(self, params: TensorMap) -> TensorMap:
        return grad_params(params, self.data, self.spec)

    def accuracy(self, params: TensorMap) -> float:
        """Returns the classification accuracy on the development set."""
        return accuracy(params, self.data, self.spec)


def write_dataset(path: PathType, data: DevSet) -> None:
    """Writes a dataset as a container with tensors ``inputs`` and ``labels``.

    Labels are stored as float32 values.

    Args:
        path: Destination file.
        data: The dataset to write.
    """
    write_checkpoint(
        path,
        Checkpoint(
            params=TensorMap({"inputs": data.inputs, "labels": data.labels}),
            meta=CheckpointMeta(tag="dataset"),
        ),
    )


def read_dataset(path: PathType) -> DevSet:
    """Reads a dataset written by [`write_dataset`][ckav.objectives.mlp.write_dataset].

    Args:
        path: The container file.

    Returns:
        The dataset.

    Raises:
        CheckpointFormatError: If the tensors are missing, misshapen, or the labels
            are not non-negative integers.
    """
    params = read_checkpoint(path).params
    if set(params) != {"inputs", "labels"}:
        raise CheckpointFormatError(f"{path}: expected tensors 'inputs' and 'labels'")
    try:
        return DevSet(inputs=params["inputs"], labels=params["labels"])
    except ValueError as e:
        raise CheckpointFormatError(f"{path}: {e}") from e
