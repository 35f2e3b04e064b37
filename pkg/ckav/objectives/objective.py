"""Provides [`Objective`][ckav.objectives.objective.Objective] class."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

from overrides import EnforceOverrides

from ckav.checkpoint import TensorMap


@dataclass(frozen=True)
class Evaluation:
    """Development loss of a parameter set and the matching perplexity."""

    #: Mean loss on the development data
    loss: float

    #: ``exp(loss)``
    ppl: float

    @classmethod
    def from_loss(cls, loss: float) -> Evaluation:
        """Creates an evaluation from a loss value."""
        return cls(loss=float(loss), ppl=math.exp(loss))


class Objective(ABC, EnforceOverrides):
    """Base class for a development objective.

    An objective scores a set of model parameters. It supplies the loss that
    perplexities are derived from and its gradient with respect to every parameter
    tensor, which is all that checkpoint interpolation needs to know about a model.
    """

    @abstractmethod
    def __repr__(self) -> str:
        """Returns a string representation of the objective."""

    @abstractmethod
    def loss(self, params: TensorMap) -> float:
        """Returns the development loss of a parameter set.

        Args:
            params: Model parameters.

        Returns:
            The loss, computed in 64-bit precision.
        """

    @abstractmethod
    def grad(self, params: TensorMap) -> TensorMap:
        """Returns the gradient of the loss with respect to every parameter.

        Args:
            params: Model parameters.

        Returns:
            A 64-bit tensor map with the same names and shapes as ``params``.
        """

    def evaluate(self, params: TensorMap) -> Evaluation:
        """Evaluates the loss and perplexity of a parameter set.

        Args:
            params: Model parameters.

        Returns:
            The loss and ``exp(loss)``.
        """
        return Evaluation.from_loss(self.loss(params))
