"""Provides sweep result records and their CSV/JSON tables."""

from __future__ import annotations

import io
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import pandas as pd

from ckav.averaging import WeightVector
from ckav.objectives.objective import Evaluation

#: Relative tolerance of the ``dev_ppl = exp(dev_loss)`` check
PPL_RTOL = 1e-9

#: printf-style format of floats in CSV output (17 significant digits)
FLOAT_FORMAT = "%.17g"


class OutputFormat(Enum):
    """Enum for the supported sweep table formats."""

    CSV = "csv"
    JSON = "json"


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """One evaluated grid point of a sweep."""

    #: Values of the swept hyperparameters, keyed by name
    params: Mapping[str, float]

    #: Development loss at the grid point
    dev_loss: float

    #: ``exp(dev_loss)``
    dev_ppl: float

    #: Interpolation weights used at the grid point, if recorded
    weights: WeightVector | None = field(default=None)

    def __post_init__(self) -> None:
        """Checks that the perplexity matches the loss.

        Raises:
            ValueError: If ``dev_ppl`` differs from ``exp(dev_loss)``.
        """
        if not math.isclose(self.dev_ppl, math.exp(self.dev_loss), rel_tol=PPL_RTOL):
            raise ValueError(
                f"dev_ppl {self.dev_ppl!r} does not equal exp({self.dev_loss!r})"
            )

    @classmethod
    def from_evaluation(
        cls,
        params: Mapping[str, float],
        evaluation: Evaluation,
        weights: WeightVector | None = None,
    ) -> SweepRecord:
        """Creates a record from an evaluation."""
        return cls(
            params=dict(params),
            dev_loss=evaluation.loss,
            dev_ppl=evaluation.ppl,
            weights=weights,
        )

    def to_dict(self) -> dict[str, Any]:
        """Returns the record as a flat row.

        Keys are the swept parameters, ``dev_loss``, ``dev_ppl`` and, when weights
        are recorded, ``w_0 .. w_{K-1}``.
        """
        row: dict[str, Any] = dict(self.params)
        row["dev_loss"] = self.dev_loss
        row["dev_ppl"] = self.dev_ppl
        for k, weight in enumerate(self.weights or []):
            row[f"w_{k}"] = weight
        return row


def records_to_frame(records: Sequence[SweepRecord]) -> pd.DataFrame:
    """Builds a table with one row per record.

    Columns are the swept parameters (in first-seen order), ``dev_loss``,
    ``dev_ppl``, then the weight columns.

    Args:
        records: The sweep records, in output order.

    Returns:
        The table.
    """
    param_columns: list[str] = []
    num_weights = 0
    for record in records:
        param_columns += [name for name in record.params if name not in param_columns]
        num_weights = max(num_weights, len(record.weights or []))
    columns = param_columns + ["dev_loss", "dev_ppl"]
    columns += [f"w_{k}" for k in range(num_weights)]
    return pd.DataFrame([record.to_dict() for record in records], columns=columns)


def format_records(
    records: Sequence[SweepRecord],
    fmt: OutputFormat | str = OutputFormat.CSV,
    summary: Mapping[str, Any] | None = None,
) -> str:
    """Renders records as CSV or JSON text.

    CSV output has a header row and prints floats with 17 significant digits;
    missing weight cells are left blank. JSON output is an object with a
    ``records`` list and, if given, a ``summary``.

    Args:
        records: The sweep records, in output order.
        fmt: The output format.
        summary: Extra statistics for JSON output.

    Returns:
        The rendered table.
    """
    if OutputFormat(fmt) is OutputFormat.JSON:
        payload: dict[str, Any] = {"records": [r.to_dict() for r in records]}
        if summary is not None:
            payload["summary"] = dict(summary)
        return json.dumps(payload, indent=2) + "\n"
    buffer = io.StringIO()
    records_to_frame(records).to_csv(
        buffer, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n"
    )
    return buffer.getvalue()


def write_records(
    records: Sequence[SweepRecord],
    path: str | Path,
    fmt: OutputFormat | str = OutputFormat.CSV,
    summary: Mapping[str, Any] | None = None,
) -> None:
    """Writes records to a CSV or JSON file.

    Args:
        records: The sweep records, in output order.
        path: Destination file.
        fmt: The output format.
        summary: Extra statistics for JSON output.
    """
    Path(path).write_text(format_records(records, fmt, summary), encoding="utf-8")
