import csv
from collections.abc import Iterator, Mapping, Sequence
from enum import StrEnum
from pathlib import Path
from typing import Any, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from conformalkit.classification.predictors import CalibratedPredictor
from conformalkit.core.errors import InputError, ParseError
from conformalkit.core.models.types import PredictionInterval, PredictionSet
from conformalkit.regression.predictors import RegressionThreshold


class TaskEnum(StrEnum):
    """Kind of prediction a command works on."""

    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class ThresholdArtifact(BaseModel):
    """Everything ``predict`` needs to rebuild a calibrated predictor.

    Attributes:
        task (TaskEnum): Classification or regression.
        seed (int): The run seed used at calibration.
        classification (CalibratedPredictor, optional): Set for classification.
        regression (RegressionThreshold, optional): Set for regression.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    task: TaskEnum
    seed: int
    classification: CalibratedPredictor | None = None
    regression: RegressionThreshold | None = None

    @model_validator(mode="after")
    def _check_payload(self) -> Self:
        is_classification = self.task is TaskEnum.CLASSIFICATION
        if (self.classification is not None) != is_classification or (
            self.regression is not None
        ) == is_classification:
            msg = f"a {self.task} artifact must carry exactly its own payload"
            raise ValueError(msg)
        return self


def format_float(value: float) -> str:
    """Shortest text that parses back to the same float.

    Examples:
        >>> format_float(0.1), format_float(float("inf"))
        ('0.1', 'inf')
    """
    return repr(float(value))


def _check_exists(path: Path) -> None:
    if not path.is_file():
        msg = f"input file not found: {path}"
        raise InputError(msg)


def _rows(path: Path) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based line number, stripped cells) of every non-blank line."""
    _check_exists(path)
    with path.open(newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        for cells in reader:
            stripped = [cell.strip() for cell in cells]
            if any(stripped):
                yield reader.line_num, stripped


def _parse_float(path: Path, line: int, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(path, f"not a number: {cell!r}", line) from None


def _parse_int(path: Path, line: int, cell: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise ParseError(path, f"not an integer: {cell!r}", line) from None


def read_matrix(path: Path) -> NDArray[np.float64]:
    """Read a headerless numeric CSV with a constant column count.

    Raises:
        InputError: If the file does not exist.
        ParseError: On a non-numeric cell, a ragged row or an empty file.
    """
    rows: list[list[float]] = []
    for line, cells in _rows(path):
        if rows and len(cells) != len(rows[0]):
            msg = f"expected {len(rows[0])} columns, got {len(cells)}"
            raise ParseError(path, msg, line)
        rows.append([_parse_float(path, line, cell) for cell in cells])
    if not rows:
        raise ParseError(path, "file holds no rows")
    return np.array(rows, dtype=np.float64)


def read_labels(path: Path) -> NDArray[np.int64]:
    """Read a single-column CSV of integer class labels.

    Raises:
        InputError: If the file does not exist.
        ParseError: On a non-integer cell, extra columns or an empty file.
    """
    labels: list[int] = []
    for line, cells in _rows(path):
        if len(cells) != 1:
            raise ParseError(path, f"expected one label, got {len(cells)} cells", line)
        labels.append(_parse_int(path, line, cells[0]))
    if not labels:
        raise ParseError(path, "file holds no rows")
    return np.array(labels, dtype=np.int64)


def read_vector(path: Path) -> NDArray[np.float64]:
    """Read a single-column numeric CSV (e.g. weights)."""
    matrix = read_matrix(path)
    if matrix.shape[1] != 1:
        raise ParseError(path, f"expected one column, got {matrix.shape[1]}")
    return matrix[:, 0]


def write_matrix(path: Path, matrix: ArrayLike) -> None:
    """Write a headerless numeric CSV, one row per item."""
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerows([format_float(v) for v in row] for row in values)


def write_labels(path: Path, labels: ArrayLike) -> None:
    """Write a single-column CSV of integer labels."""
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerows([int(label)] for label in np.asarray(labels).ravel())


def write_prediction_sets(path: Path, sets: Sequence[PredictionSet]) -> None:
    """Write one line per row: the row index, then the members ascending.

    An empty set is written as the bare index.
    """
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerows([i, *s.sorted_members()] for i, s in enumerate(sets))


def _check_index(path: Path, line: int, cell: str, expected: int) -> None:
    if _parse_int(path, line, cell) != expected:
        raise ParseError(path, f"expected row index {expected}, got {cell}", line)


def read_prediction_sets(path: Path) -> list[PredictionSet]:
    """Read a file written by :func:`write_prediction_sets`.

    Raises:
        InputError: If the file does not exist.
        ParseError: On out-of-order indices or non-integer labels.
    """
    sets: list[PredictionSet] = []
    for line, cells in _rows(path):
        _check_index(path, line, cells[0], len(sets))
        members = frozenset(_parse_int(path, line, cell) for cell in cells[1:])
        sets.append(PredictionSet(members=members))
    if not sets:
        raise ParseError(path, "file holds no rows")
    return sets


def write_intervals(path: Path, intervals: Sequence[PredictionInterval]) -> None:
    """Write one line per row: the index, then ``lo,hi`` for every dimension.

    An empty interval is written as the bare index.
    """
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        for i, interval in enumerate(intervals):
            bounds = (
                []
                if interval.empty
                else [
                    format_float(v)
                    for pair in zip(interval.lower, interval.upper, strict=True)
                    for v in pair
                ]
            )
            writer.writerow([i, *bounds])


def read_intervals(path: Path) -> list[PredictionInterval]:
    """Read a file written by :func:`write_intervals`.

    Raises:
        InputError: If the file does not exist.
        ParseError: On out-of-order indices, odd bound counts or lo > hi.
    """
    intervals: list[PredictionInterval] = []
    for line, cells in _rows(path):
        _check_index(path, line, cells[0], len(intervals))
        bounds = [_parse_float(path, line, cell) for cell in cells[1:]]
        if not bounds:
            intervals.append(
                PredictionInterval.model_construct(lower=[0.0], upper=[0.0], empty=True)
            )
            continue
        if len(bounds) % 2:
            raise ParseError(path, "expected lo,hi pairs", line)
        try:
            intervals.append(PredictionInterval(lower=bounds[0::2], upper=bounds[1::2]))
        except ValidationError as error:
            raise ParseError(path, "lower bound exceeds upper bound", line) from error
    if not intervals:
        raise ParseError(path, "file holds no rows")
    return intervals


def write_rows(
    path: Path, fieldnames: Sequence[str], rows: Sequence[Mapping[str, Any]]
) -> None:
    """Write a headed CSV; floats are written losslessly, extra keys dropped."""
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(
            file, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n"
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    key: format_float(value) if isinstance(value, float) else value
                    for key, value in row.items()
                }
            )


def write_json(path: Path, model: BaseModel) -> None:
    """Write a pydantic model as indented JSON."""
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_artifact(path: Path) -> ThresholdArtifact:
    """Read a threshold artifact written by ``calibrate``.

    Raises:
        InputError: If the file does not exist.
        ParseError: If the file is not a valid artifact.
    """
    _check_exists(path)
    try:
        return ThresholdArtifact.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as error:
        raise ParseError(path, f"invalid threshold artifact: {error}") from error
