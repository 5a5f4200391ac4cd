from collections.abc import Sequence
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from conformalkit.classification.scores import validate_labels
from conformalkit.core.errors import InputError
from conformalkit.core.models.types import validate_alpha


class SupportsMembership(Protocol):
    """What metrics need from a prediction set, interval or interval union."""

    def contains(self, truth: float | Sequence[float] | NDArray[np.float64]) -> bool:
        """Return whether the truth is a member."""
        ...

    def size(self) -> float:
        """Return the cardinality or total width."""
        ...


PredictionRegions = Sequence[SupportsMembership] | NDArray[np.bool_]
"""Prediction objects, or an n x K boolean membership mask for classification."""


class EvaluationReport(BaseModel):
    """Summary metrics of one set of predictions.

    Attributes:
        coverage_rate (float): Fraction of covered items, in [0, 1].
        average_size (float, optional): Mean set cardinality (classification).
        average_width (float, optional): Mean total width, may be inf (regression).
        cov_gap (float, optional): Class-conditional coverage gap in percent.
        n_test (int): Number of evaluated items.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    coverage_rate: float = Field(ge=0.0, le=1.0)
    average_size: float | None = Field(default=None, ge=0.0)
    average_width: float | None = Field(default=None, ge=0.0)
    cov_gap: float | None = Field(default=None, ge=0.0)
    n_test: int = Field(ge=1)


def _is_mask(regions: PredictionRegions) -> bool:
    return isinstance(regions, np.ndarray)


def _check_nonempty(regions: PredictionRegions) -> int:
    n = len(regions)
    if n == 0:
        msg = "cannot evaluate an empty prediction list"
        raise InputError(msg)
    return n


def coverage_flags(regions: PredictionRegions, truths: ArrayLike) -> NDArray[np.bool_]:
    """Return whether each truth lies in its prediction region.

    Args:
        regions (PredictionRegions): Prediction objects or an n x K mask.
        truths (ArrayLike): n labels, values or n x d targets.

    Returns:
        NDArray[np.bool_]: One flag per item.

    Raises:
        InputError: If the inputs are empty or differ in length.
    """
    n = _check_nonempty(regions)
    values = np.asarray(truths)
    if values.ndim == 0 or values.shape[0] != n:
        msg = f"got {values.size} truths for {n} predictions"
        raise InputError(msg)
    if _is_mask(regions):
        mask = np.asarray(regions, dtype=bool)
        labels = validate_labels(values, n, mask.shape[1])
        return mask[np.arange(n), labels]
    return np.array(
        [region.contains(value) for region, value in zip(regions, values, strict=True)]
    )


def coverage_rate(regions: PredictionRegions, truths: ArrayLike) -> float:
    """Fraction of items whose truth lies in its region.

    Examples:
        >>> from conformalkit.core.models.types import PredictionSet
        >>> sets = [
        ...     PredictionSet(members=frozenset({0})),
        ...     PredictionSet(members=frozenset()),
        ... ]
        >>> coverage_rate(sets, [0, 0])
        0.5
    """
    return float(coverage_flags(regions, truths).mean())


def average_size(regions: PredictionRegions) -> float:
    """Mean cardinality (sets) or mean total width (intervals); inf propagates."""
    _check_nonempty(regions)
    if _is_mask(regions):
        return float(np.asarray(regions, dtype=bool).sum(axis=1).mean())
    return float(np.mean([region.size() for region in regions]))


def average_width(intervals: PredictionRegions) -> float:
    """Mean of the summed per-dimension widths; inf propagates."""
    if _is_mask(intervals):
        msg = "average_width expects intervals, not a membership mask"
        raise InputError(msg)
    return average_size(intervals)


def class_coverage(
    regions: PredictionRegions, labels: ArrayLike, num_classes: int
) -> NDArray[np.float64]:
    """Coverage of every class; ``nan`` for classes absent from the labels.

    Args:
        regions (PredictionRegions): Prediction sets or an n x K mask.
        labels (ArrayLike): n true labels.
        num_classes (int): Size of the label universe.

    Returns:
        NDArray[np.float64]: A vector of length ``num_classes``.
    """
    if num_classes < 1:
        msg = f"num_classes must be at least 1, got {num_classes}"
        raise InputError(msg)
    targets = validate_labels(labels, _check_nonempty(regions), num_classes)
    flags = coverage_flags(regions, targets)
    counts = np.bincount(targets, minlength=num_classes).astype(np.float64)
    hits = np.bincount(targets, weights=flags.astype(np.float64), minlength=num_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, hits / counts, np.nan)


def cov_gap(
    regions: PredictionRegions, labels: ArrayLike, alpha: float, num_classes: int
) -> float:
    """Mean absolute class-coverage deviation from ``1 - alpha``, in percent.

    Classes absent from the labels are left out of the average.

    Raises:
        InputError: If no class is present.

    Examples:
        >>> mask = np.array([[True, False], [False, True]])
        >>> round(cov_gap(mask, [0, 1], 0.1, 2), 6)
        10.0
    """
    alpha = validate_alpha(alpha)
    per_class = class_coverage(regions, labels, num_classes)
    present = per_class[~np.isnan(per_class)]
    if present.size == 0:
        msg = "no class is present in the test labels"
        raise InputError(msg)
    return float(100.0 * np.mean(np.abs(present - (1.0 - alpha))))


def evaluate_classification(
    regions: PredictionRegions, labels: ArrayLike, alpha: float, num_classes: int
) -> EvaluationReport:
    """Coverage, average set size and CovGap of classification predictions."""
    return EvaluationReport(
        coverage_rate=coverage_rate(regions, labels),
        average_size=average_size(regions),
        cov_gap=cov_gap(regions, labels, alpha, num_classes),
        n_test=len(regions),
    )


def evaluate_regression(
    intervals: PredictionRegions, targets: ArrayLike
) -> EvaluationReport:
    """Coverage and average width of regression predictions."""
    return EvaluationReport(
        coverage_rate=coverage_rate(intervals, targets),
        average_width=average_width(intervals),
        n_test=len(intervals),
    )
