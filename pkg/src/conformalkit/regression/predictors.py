import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from conformalkit.classification.scores import validate_probabilities
from conformalkit.core.errors import InputError
from conformalkit.core.models.types import (
    Alpha,
    IntervalUnion,
    PredictionInterval,
    validate_alpha,
)
from conformalkit.core.quantile import conformal_quantile
from conformalkit.utils.log import log_operation, logger

DEFAULT_GRID_RESOLUTION = 2048


class RegressionMethodEnum(StrEnum):
    """Regression predictors with a fixed calibration set."""

    SPLIT = "split"
    CQR = "cqr"


def as_outputs(values: ArrayLike, name: str = "values") -> NDArray[np.float64]:
    """Return finite regression outputs as an n x d matrix.

    A one-dimensional input is read as n scalar outputs.

    Raises:
        InputError: If the array is not 1-D/2-D or holds non-finite entries.
    """
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    if matrix.ndim != 2:  # noqa: PLR2004
        msg = f"{name} must be an n x d matrix, got shape {matrix.shape}"
        raise InputError(msg)
    if not np.all(np.isfinite(matrix)):
        msg = f"{name} must be finite"
        raise InputError(msg)
    return matrix


@dataclass(frozen=True)
class QuantileBand:
    """Lower/upper quantile predictions for n items over d dimensions.

    Crossing bands (lower > upper) are legal input.

    Attributes:
        lower (NDArray[np.float64]): n x d predictions at level alpha / 2.
        upper (NDArray[np.float64]): n x d predictions at level 1 - alpha / 2.
    """

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Normalize both bounds to n x d and check their shapes agree."""
        lower = as_outputs(self.lower, "lower")
        upper = as_outputs(self.upper, "upper")
        if lower.shape != upper.shape:
            msg = f"lower {lower.shape} and upper {upper.shape} differ in shape"
            raise InputError(msg)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_points(cls, points: ArrayLike) -> "QuantileBand":
        """Degenerate band whose bounds both equal the point predictions."""
        matrix = as_outputs(points, "points")
        return cls(lower=matrix, upper=matrix.copy())

    @classmethod
    def from_pairs(cls, pairs: ArrayLike) -> "QuantileBand":
        """Read an n x 2d matrix laid out as ``lo_1, hi_1, ..., lo_d, hi_d``."""
        matrix = as_outputs(pairs, "pairs")
        if matrix.shape[1] % 2:
            msg = f"expected an even number of columns, got {matrix.shape[1]}"
            raise InputError(msg)
        return cls(lower=matrix[:, 0::2], upper=matrix[:, 1::2])

    def __len__(self) -> int:
        """Number of items."""
        return int(self.lower.shape[0])

    @property
    def dims(self) -> int:
        """Number of output dimensions."""
        return int(self.lower.shape[1])

    def row(self, index: int) -> "QuantileBand":
        """Return the band of a single item."""
        return QuantileBand(
            lower=self.lower[index : index + 1], upper=self.upper[index : index + 1]
        )


def band_scores(band: QuantileBand, targets: ArrayLike) -> NDArray[np.float64]:
    """Signed exceedances ``max(lo - y, y - hi)``, one column per dimension.

    With ``lo = hi`` the score is the absolute residual.

    Raises:
        InputError: If targets and band differ in shape.
    """
    observed = as_outputs(targets, "targets")
    if observed.shape != band.lower.shape:
        msg = f"targets {observed.shape} do not match predictions {band.lower.shape}"
        raise InputError(msg)
    return np.maximum(band.lower - observed, observed - band.upper)


def band_interval(
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    quantiles: NDArray[np.float64],
) -> PredictionInterval:
    """Widen one item's band by per-dimension quantiles.

    An infinite quantile yields an unbounded dimension; a negative quantile
    that makes the band cross yields an empty interval.
    """
    adjusted_lower = np.where(np.isposinf(quantiles), -np.inf, lower - quantiles)
    adjusted_upper = np.where(np.isposinf(quantiles), np.inf, upper + quantiles)
    if np.any(adjusted_lower > adjusted_upper):
        midpoint = (lower + upper) / 2
        return PredictionInterval.model_construct(
            lower=midpoint.tolist(), upper=midpoint.tolist(), empty=True
        )
    return PredictionInterval.from_bounds(adjusted_lower, adjusted_upper)


class RegressionThreshold(BaseModel):
    """Calibrated per-dimension quantiles of a Split or CQR predictor.

    Attributes:
        method (RegressionMethodEnum): Which predictor produced the threshold.
        alpha (float): Significance level used for calibration.
        quantiles (list[float]): One quantile per output dimension, maybe inf.
        scores (list[list[float]]): Retained n x d calibration scores.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    method: RegressionMethodEnum
    alpha: Alpha
    quantiles: list[float]
    scores: list[list[float]] = Field(default_factory=list)

    @property
    def dims(self) -> int:
        """Number of output dimensions."""
        return len(self.quantiles)

    def score_matrix(self) -> NDArray[np.float64]:
        """Return the retained calibration scores as an n x d matrix."""
        return np.asarray(self.scores, dtype=np.float64).reshape(-1, self.dims)


def _calibrate(
    method: RegressionMethodEnum, band: QuantileBand, targets: ArrayLike, alpha: float
) -> RegressionThreshold:
    alpha = validate_alpha(alpha)
    if len(band) == 0:
        msg = "calibration set must not be empty"
        raise InputError(msg)
    scores = band_scores(band, targets)
    quantiles = [conformal_quantile(scores[:, j], alpha) for j in range(band.dims)]
    logger.debug("%s quantiles: %s", method, quantiles)
    return RegressionThreshold(
        method=method, alpha=alpha, quantiles=quantiles, scores=scores.tolist()
    )


def _check_dims(threshold: RegressionThreshold, band: QuantileBand) -> None:
    if band.dims != threshold.dims:
        msg = f"predictions have {band.dims} dimensions, threshold has {threshold.dims}"
        raise InputError(msg)


@log_operation
def split_calibrate(
    point_predictions: ArrayLike, targets: ArrayLike, alpha: float
) -> RegressionThreshold:
    """Calibrate split conformal regression on absolute residuals.

    Args:
        point_predictions (ArrayLike): n x d (or n) point predictions.
        targets (ArrayLike): Targets of the same shape.
        alpha (float): Significance level in (0, 1).

    Returns:
        RegressionThreshold: Per-dimension residual quantiles.

    Examples:
        >>> split_calibrate(np.zeros(10), np.arange(1.0, 11.0), 0.1).quantiles
        [10.0]
    """
    return _calibrate(
        RegressionMethodEnum.SPLIT,
        QuantileBand.from_points(point_predictions),
        targets,
        alpha,
    )


def split_predict(
    threshold: RegressionThreshold, point_predictions: ArrayLike
) -> list[PredictionInterval]:
    """Build ``[y_hat - q, y_hat + q]`` for every test item."""
    return cqr_predict(threshold, QuantileBand.from_points(point_predictions))


@log_operation
def cqr_calibrate(
    band: QuantileBand, targets: ArrayLike, alpha: float
) -> RegressionThreshold:
    """Calibrate conformalized quantile regression.

    Args:
        band (QuantileBand): Lower/upper quantile predictions of the calibration set.
        targets (ArrayLike): Targets of the same shape.
        alpha (float): Significance level in (0, 1).

    Returns:
        RegressionThreshold: Per-dimension quantiles of ``max(lo - y, y - hi)``.
    """
    return _calibrate(RegressionMethodEnum.CQR, band, targets, alpha)


def cqr_predict(
    threshold: RegressionThreshold, band: QuantileBand
) -> list[PredictionInterval]:
    """Build ``[lo - q, hi + q]`` for every test item.

    Raises:
        InputError: If the band's dimensionality differs from the threshold's.
    """
    _check_dims(threshold, band)
    quantiles = np.asarray(threshold.quantiles, dtype=np.float64)
    return [
        band_interval(band.lower[i], band.upper[i], quantiles) for i in range(len(band))
    ]


class AciState(BaseModel):
    """State of adaptive conformal inference.

    Attributes:
        alpha_target (float): The target significance level.
        alpha_t (float): The current effective level; never clamped.
        gamma (float): Step size; zero freezes the level.
        history (int): Number of updates applied.

    Examples:
        >>> state = AciState.start(alpha=0.1, gamma=0.03)
        >>> round(aci_update(state, covered=True).alpha_t, 10)
        0.103
    """

    model_config = ConfigDict(frozen=True)

    alpha_target: Alpha
    alpha_t: float = Field(allow_inf_nan=False)
    gamma: float = Field(ge=0.0, allow_inf_nan=False)
    history: int = Field(default=0, ge=0)

    @classmethod
    def start(cls, alpha: float, gamma: float = 0.03) -> Self:
        """Initial state with ``alpha_t = alpha``."""
        return cls(alpha_target=alpha, alpha_t=alpha, gamma=gamma)


def aci_update(state: AciState, *, covered: bool) -> AciState:
    """Advance ACI by one observation: ``alpha_t += gamma * (alpha - err_t)``.

    Args:
        state (AciState): The current state.
        covered (bool): Whether the last interval covered the observation.

    Returns:
        AciState: The next state.
    """
    error = 0.0 if covered else 1.0
    return state.model_copy(
        update={
            "alpha_t": state.alpha_t + state.gamma * (state.alpha_target - error),
            "history": state.history + 1,
        }
    )


def aci_predict_interval(
    state: AciState, scores: ArrayLike, band: QuantileBand
) -> PredictionInterval:
    """Build one item's interval at the effective level ``alpha_t``.

    Args:
        state (AciState): The current state.
        scores (ArrayLike): n x d fixed calibration scores.
        band (QuantileBand): The test item's band (use
            :meth:`QuantileBand.from_points` for point predictions).

    Returns:
        PredictionInterval: Unbounded when ``alpha_t <= 0``, empty when
            ``alpha_t >= 1``, otherwise the band widened by the calibration
            quantile at level ``alpha_t``.
    """
    lower, upper = band.lower[0], band.upper[0]
    if state.alpha_t <= 0:
        return PredictionInterval.from_bounds(
            np.full(band.dims, -np.inf), np.full(band.dims, np.inf)
        )
    if state.alpha_t >= 1:
        midpoint = (lower + upper) / 2
        return PredictionInterval.model_construct(
            lower=midpoint.tolist(), upper=midpoint.tolist(), empty=True
        )
    calibration = as_outputs(scores, "scores")
    if calibration.shape[1] != band.dims:
        msg = f"scores have {calibration.shape[1]} dimensions, band has {band.dims}"
        raise InputError(msg)
    quantiles = np.array(
        [conformal_quantile(calibration[:, j], state.alpha_t) for j in range(band.dims)]
    )
    return band_interval(lower, upper, quantiles)


@dataclass(frozen=True)
class AciRun:
    """Outcome of running ACI sequentially over a test stream.

    Attributes:
        intervals (list[PredictionInterval]): One interval per step.
        covered (NDArray[np.bool_]): Whether each interval covered its target.
        alphas (NDArray[np.float64]): The effective level used at each step.
        final_state (AciState): The state after the last update.
    """

    intervals: list[PredictionInterval] = field(default_factory=list)
    covered: NDArray[np.bool_] = field(default_factory=lambda: np.zeros(0, dtype=bool))
    alphas: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    final_state: AciState | None = None


@log_operation
def aci_run(
    state: AciState, scores: ArrayLike, band: QuantileBand, targets: ArrayLike
) -> AciRun:
    """Predict, observe and update over the test stream in order.

    Args:
        state (AciState): The initial state.
        scores (ArrayLike): n x d fixed calibration scores.
        band (QuantileBand): m test bands.
        targets (ArrayLike): m x d observed targets.

    Returns:
        AciRun: Intervals, coverage flags, levels and the final state.
    """
    observed = as_outputs(targets, "targets")
    if observed.shape != band.lower.shape:
        msg = f"targets {observed.shape} do not match predictions {band.lower.shape}"
        raise InputError(msg)
    intervals: list[PredictionInterval] = []
    covered = np.zeros(len(band), dtype=bool)
    alphas = np.zeros(len(band))
    for t in range(len(band)):
        alphas[t] = state.alpha_t
        interval = aci_predict_interval(state, scores, band.row(t))
        covered[t] = interval.contains(observed[t])
        intervals.append(interval)
        state = aci_update(state, covered=bool(covered[t]))
    return AciRun(
        intervals=intervals, covered=covered, alphas=alphas, final_state=state
    )


class BinGrid(BaseModel):
    """Bin midpoints discretizing a bounded output range.

    Attributes:
        midpoints (list[float]): Strictly increasing bin centers, at least two.
        y_min (float): Lower end of the range.
        y_max (float): Upper end of the range.

    Examples:
        >>> BinGrid.uniform(0.0, 1.0, 4).midpoints
        [0.125, 0.375, 0.625, 0.875]
    """

    model_config = ConfigDict(frozen=True)

    midpoints: list[float] = Field(min_length=2)
    y_min: float = Field(allow_inf_nan=False)
    y_max: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_grid(self) -> Self:
        points = self.midpoints
        if any(b <= a for a, b in zip(points, points[1:], strict=False)):
            msg = "midpoints must be strictly increasing"
            raise ValueError(msg)
        if points[0] < self.y_min or points[-1] > self.y_max:
            msg = "midpoints must lie within [y_min, y_max]"
            raise ValueError(msg)
        return self

    @classmethod
    def uniform(cls, y_min: float, y_max: float, num_bins: int) -> Self:
        """Centers of ``num_bins`` equal-width bins over ``[y_min, y_max]``."""
        edges = np.linspace(y_min, y_max, num_bins + 1)
        midpoints = (edges[:-1] + edges[1:]) / 2
        return cls(midpoints=midpoints.tolist(), y_min=y_min, y_max=y_max)

    @classmethod
    def from_targets(
        cls, targets: ArrayLike, num_bins: int = 50, margin: float = 0.05
    ) -> Self:
        """Uniform grid over the target range widened by ``margin`` on each side."""
        values = np.asarray(targets, dtype=np.float64).ravel()
        low, high = float(values.min()), float(values.max())
        pad = margin * (high - low) if high > low else 1.0
        return cls.uniform(low - pad, high + pad, num_bins)

    @property
    def num_bins(self) -> int:
        """Number of bins."""
        return len(self.midpoints)

    def array(self) -> NDArray[np.float64]:
        """Midpoints as an array."""
        return np.asarray(self.midpoints, dtype=np.float64)

    def check_targets(self, targets: ArrayLike) -> NDArray[np.float64]:
        """Return targets as a vector, rejecting values outside the range."""
        values = np.asarray(targets, dtype=np.float64).ravel()
        if values.size and (
            not np.all(np.isfinite(values))
            or values.min() < self.y_min
            or values.max() > self.y_max
        ):
            msg = f"targets must lie within [{self.y_min}, {self.y_max}]"
            raise InputError(msg)
        return values


def interpolated_density(
    grid: BinGrid, bin_probabilities: ArrayLike, y: ArrayLike
) -> NDArray[np.float64]:
    """Evaluate the piecewise-linear density of every row at the matching y.

    ``bin_probabilities`` is n x K and ``y`` holds n values; values beyond the
    outer midpoints take the end bins' probability.
    """
    probs = validate_probabilities(bin_probabilities)
    values = np.asarray(y, dtype=np.float64).ravel()
    midpoints = grid.array()
    return np.array(
        [np.interp(v, midpoints, row) for v, row in zip(values, probs, strict=True)]
    )


class R2ccpThreshold(BaseModel):
    """Calibrated density threshold of R2CCP.

    Attributes:
        grid (BinGrid): The bin grid.
        alpha (float): Significance level used for calibration.
        quantile (float): Conformal quantile of the negated densities.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    grid: BinGrid
    alpha: Alpha
    quantile: float

    @property
    def density_level(self) -> float:
        """Minimum interpolated density of a member value, ``-quantile``."""
        return -self.quantile


@log_operation
def r2ccp_calibrate(
    bin_probabilities: ArrayLike, targets: ArrayLike, grid: BinGrid, alpha: float
) -> R2ccpThreshold:
    """Calibrate R2CCP on negated interpolated densities at the targets.

    Args:
        bin_probabilities (ArrayLike): n x K bin probabilities.
        targets (ArrayLike): n targets inside the grid range.
        grid (BinGrid): The bin grid.
        alpha (float): Significance level in (0, 1).

    Returns:
        R2ccpThreshold: The density threshold.

    Raises:
        InputError: On invalid probability rows or out-of-range targets.
    """
    probs = validate_probabilities(bin_probabilities)
    if probs.shape[1] != grid.num_bins:
        msg = f"expected {grid.num_bins} bin probabilities, got {probs.shape[1]}"
        raise InputError(msg)
    values = grid.check_targets(targets)
    if values.size != probs.shape[0]:
        msg = f"got {values.size} targets for {probs.shape[0]} rows"
        raise InputError(msg)
    scores = -interpolated_density(grid, probs, values)
    quantile = conformal_quantile(scores, alpha)
    return R2ccpThreshold(grid=grid, alpha=alpha, quantile=quantile)


def r2ccp_contains(threshold: R2ccpThreshold, probs_row: ArrayLike, y: float) -> bool:
    """Pointwise membership test ``p(y) >= -q``."""
    if math.isinf(threshold.quantile):
        return True
    density = interpolated_density(threshold.grid, probs_row, [y])[0]
    return bool(density >= threshold.density_level)


def _runs_to_union(
    points: NDArray[np.float64], mask: NDArray[np.bool_]
) -> IntervalUnion:
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    changes = np.diff(padded)
    starts = np.flatnonzero(changes == 1)
    stops = np.flatnonzero(changes == -1) - 1
    return IntervalUnion.model_construct(
        intervals=[
            PredictionInterval.from_bounds(points[a], points[b])
            for a, b in zip(starts, stops, strict=True)
        ]
    )


def r2ccp_predict(
    threshold: R2ccpThreshold,
    bin_probabilities: ArrayLike,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
) -> list[IntervalUnion]:
    """Materialize ``{y : p(y) >= -q}`` as a union of intervals per item.

    The range is scanned at ``grid_resolution`` evenly spaced points and
    consecutive member points are joined.

    Args:
        threshold (R2ccpThreshold): The calibrated threshold.
        bin_probabilities (ArrayLike): m x K bin probabilities.
        grid_resolution (int, optional): Number of scan points.
            Defaults to 2048.

    Returns:
        list[IntervalUnion]: One union per item; ``(-inf, inf)`` when the
            quantile is infinite.
    """
    if grid_resolution < 2:  # noqa: PLR2004
        msg = "grid_resolution must be at least 2"
        raise InputError(msg)
    probs = validate_probabilities(bin_probabilities)
    grid = threshold.grid
    if probs.shape[1] != grid.num_bins:
        msg = f"expected {grid.num_bins} bin probabilities, got {probs.shape[1]}"
        raise InputError(msg)
    if math.isinf(threshold.quantile):
        unbounded = IntervalUnion.model_construct(
            intervals=[PredictionInterval.from_bounds(-np.inf, np.inf)]
        )
        return [unbounded] * probs.shape[0]
    points = np.linspace(grid.y_min, grid.y_max, grid_resolution)
    midpoints = grid.array()
    return [
        _runs_to_union(
            points, np.interp(points, midpoints, row) >= threshold.density_level
        )
        for row in probs
    ]
