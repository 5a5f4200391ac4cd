import math
from collections.abc import Sequence
from enum import StrEnum
from typing import Annotated, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from conformalkit.core.errors import InputError

Alpha = Annotated[float, Field(gt=0.0, lt=1.0)]
"""Significance level, strictly between 0 and 1."""


def validate_alpha(alpha: float) -> float:
    """Check that a significance level lies in the open unit interval.

    Args:
        alpha (float): The significance level.

    Returns:
        float: The same value, as a float.

    Raises:
        InputError: If alpha is not in (0, 1).

    Examples:
        >>> validate_alpha(0.1)
        0.1
        >>> validate_alpha(1.0)
        Traceback (most recent call last):
            ...
        conformalkit.core.errors.InputError: alpha must lie in (0, 1), got 1.0
    """
    value = float(alpha)
    if not 0.0 < value < 1.0:
        msg = f"alpha must lie in (0, 1), got {value}"
        raise InputError(msg)
    return value


class ThresholdKindEnum(StrEnum):
    """Shape of a calibrated threshold, one per classification predictor."""

    SCALAR = "scalar"
    PER_CLASS = "per_class"
    PER_CLUSTER = "per_cluster"
    WEIGHTED = "weighted"


class CalibratedThreshold(BaseModel):
    """The quantile(s) produced by calibration.

    Infinite thresholds are serialized as the string ``"Infinity"`` so that
    artifacts stay valid JSON.

    Attributes:
        kind (ThresholdKindEnum): Which predictor produced the threshold.
        values (list[float]): One value for ``scalar``, ``num_classes`` values
            for ``per_class``, one value per cluster (fallback last) for
            ``per_cluster``; empty for ``weighted``.
        num_classes (int): Size of the label universe.
        class_to_cluster (list[int], optional): Cluster index of every class
            (``per_cluster`` only).
        weighted_scores (list[float], optional): Retained calibration scores
            (``weighted`` only).
        weighted_weights (list[float], optional): Weights of the retained
            calibration scores (``weighted`` only).
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    kind: ThresholdKindEnum
    values: list[float] = Field(default_factory=list)
    num_classes: int = Field(ge=1)
    class_to_cluster: list[int] | None = None
    weighted_scores: list[float] | None = None
    weighted_weights: list[float] | None = None

    @model_validator(mode="after")
    def _check_shape(self) -> Self:
        if any(math.isnan(v) or v == -math.inf for v in self.values):
            msg = "threshold values must be finite or +inf"
            raise ValueError(msg)
        match self.kind:
            case ThresholdKindEnum.SCALAR if len(self.values) != 1:
                msg = "a scalar threshold holds exactly one value"
                raise ValueError(msg)
            case ThresholdKindEnum.PER_CLASS if len(self.values) != self.num_classes:
                msg = "a per-class threshold holds one value per class"
                raise ValueError(msg)
            case ThresholdKindEnum.PER_CLUSTER:
                mapping = self.class_to_cluster or []
                if len(mapping) != self.num_classes or any(
                    not 0 <= c < len(self.values) for c in mapping
                ):
                    msg = "class_to_cluster must map every class to a cluster"
                    raise ValueError(msg)
            case ThresholdKindEnum.WEIGHTED:
                if self.weighted_scores is None or self.weighted_weights is None:
                    msg = "a weighted threshold retains scores and weights"
                    raise ValueError(msg)
                if len(self.weighted_scores) != len(self.weighted_weights):
                    msg = "retained scores and weights differ in length"
                    raise ValueError(msg)
        return self

    def label_thresholds(self) -> NDArray[np.float64]:
        """Expand the threshold to one value per label.

        Returns:
            NDArray[np.float64]: A vector of length ``num_classes``.

        Raises:
            InputError: For weighted thresholds, which depend on the test weight.
        """
        values = np.asarray(self.values, dtype=np.float64)
        match self.kind:
            case ThresholdKindEnum.SCALAR:
                return np.full(self.num_classes, values[0])
            case ThresholdKindEnum.PER_CLASS:
                return values
            case ThresholdKindEnum.PER_CLUSTER:
                return values[np.asarray(self.class_to_cluster, dtype=np.int64)]
        msg = "weighted thresholds are resolved per test row"
        raise InputError(msg)


class PredictionSet(BaseModel):
    """A subset of the label universe ``{0, ..., K-1}``; may be empty.

    Examples:
        >>> prediction_set = PredictionSet(members=frozenset({0, 2}))
        >>> prediction_set.contains(2), prediction_set.size()
        (True, 2.0)
    """

    model_config = ConfigDict(frozen=True)

    members: frozenset[int]

    def contains(self, truth: int) -> bool:
        """Return whether the label is a member of the set."""
        return int(truth) in self.members

    def size(self) -> float:
        """Return the set cardinality."""
        return float(len(self.members))

    def sorted_members(self) -> list[int]:
        """Return the members in ascending order."""
        return sorted(self.members)


class PredictionInterval(BaseModel):
    """Closed per-dimension bounds ``[lower_j, upper_j]``.

    Bounds may be infinite. An interval flagged ``empty`` (ACI with an
    effective level of at least 1) covers nothing and has zero width.

    Examples:
        >>> interval = PredictionInterval(lower=[0.0], upper=[2.0])
        >>> interval.contains(2.0), interval.width()
        (True, 2.0)
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    lower: list[float]
    upper: list[float]
    empty: bool = False

    @model_validator(mode="after")
    def _check_bounds(self) -> Self:
        if len(self.lower) != len(self.upper) or not self.lower:
            msg = "lower and upper must be non-empty and of equal length"
            raise ValueError(msg)
        if any(lo > hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            msg = "lower bound exceeds upper bound"
            raise ValueError(msg)
        return self

    @classmethod
    def from_bounds(cls, lower: ArrayLike, upper: ArrayLike) -> "PredictionInterval":
        """Build an interval from array-like bounds without re-validation."""
        return cls.model_construct(
            lower=np.atleast_1d(np.asarray(lower, dtype=np.float64)).tolist(),
            upper=np.atleast_1d(np.asarray(upper, dtype=np.float64)).tolist(),
            empty=False,
        )

    @property
    def dims(self) -> int:
        """Number of output dimensions."""
        return len(self.lower)

    def contains(self, truth: float | Sequence[float] | NDArray[np.float64]) -> bool:
        """Return whether every coordinate of the truth lies inside its bounds."""
        if self.empty:
            return False
        values = np.atleast_1d(np.asarray(truth, dtype=np.float64))
        if values.size != self.dims:
            msg = f"truth has {values.size} dimensions, interval has {self.dims}"
            raise InputError(msg)
        return bool(
            np.all(
                (np.asarray(self.lower) <= values) & (values <= np.asarray(self.upper))
            )
        )

    def width(self) -> float:
        """Return the sum of per-dimension widths; infinite bounds propagate."""
        if self.empty:
            return 0.0
        return float(np.sum(np.asarray(self.upper) - np.asarray(self.lower)))

    def size(self) -> float:
        """Alias of :meth:`width` so sets and intervals share a protocol."""
        return self.width()


class IntervalUnion(BaseModel):
    """A union of disjoint one-dimensional intervals, as produced by R2CCP."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    intervals: list[PredictionInterval] = Field(default_factory=list)

    def contains(self, truth: float | Sequence[float] | NDArray[np.float64]) -> bool:
        """Return whether any member interval contains the truth."""
        return any(interval.contains(truth) for interval in self.intervals)

    def width(self) -> float:
        """Return the total length of the union."""
        return float(sum(interval.width() for interval in self.intervals))

    def size(self) -> float:
        """Alias of :meth:`width`."""
        return self.width()
