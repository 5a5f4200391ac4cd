from collections.abc import Callable, Sequence
from enum import StrEnum
from typing import Any, Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from conformalkit.classification.clustering import kmeans
from conformalkit.classification.scores import (
    CALIBRATION_STREAM,
    PREDICTION_STREAM,
    ScoreConfig,
    score_batch,
    score_matrix,
    validate_labels,
)
from conformalkit.core.errors import ConfigurationError, InputError, StateError
from conformalkit.core.models.types import (
    Alpha,
    CalibratedThreshold,
    PredictionSet,
    ThresholdKindEnum,
    validate_alpha,
)
from conformalkit.core.quantile import conformal_quantile, weighted_conformal_quantiles
from conformalkit.utils.log import log_operation, logger

MAX_AUTO_CLUSTERS = 10

WeightFunction = Callable[[Any], float]


class PredictorKindEnum(StrEnum):
    """Supported classification conformal algorithms."""

    SPLIT = "split"
    CLASS_WISE = "class_wise"
    CLUSTER = "cluster"
    WEIGHTED = "weighted"


THRESHOLD_KINDS = {
    PredictorKindEnum.SPLIT: ThresholdKindEnum.SCALAR,
    PredictorKindEnum.CLASS_WISE: ThresholdKindEnum.PER_CLASS,
    PredictorKindEnum.CLUSTER: ThresholdKindEnum.PER_CLUSTER,
    PredictorKindEnum.WEIGHTED: ThresholdKindEnum.WEIGHTED,
}


class ClusterConfig(BaseModel):
    """Hyperparameters of clustered calibration.

    Attributes:
        num_clusters (int, optional): Number of clusters; ``None`` picks half the
            eligible classes, clamped to ``[1, 10]``.
        quantile_levels (list[float]): Score quantiles embedding each class.
        min_class_count (int): Classes with fewer items use the marginal threshold.
        kmeans_iters (int): Lloyd iteration cap.
        kmeans_seed (int): Seed of the k-means++ initialization.
    """

    model_config = ConfigDict(frozen=True)

    num_clusters: int | None = Field(default=None, ge=1)
    quantile_levels: list[float] = Field(
        default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9]
    )
    min_class_count: int = Field(default=20, ge=1)
    kmeans_iters: int = Field(default=100, ge=1)
    kmeans_seed: int = Field(default=0, ge=0)

    @field_validator("quantile_levels")
    @classmethod
    def _check_levels(cls, levels: list[float]) -> list[float]:
        if not levels or any(not 0 < q < 1 for q in levels):
            msg = "quantile_levels must be non-empty and lie in (0, 1)"
            raise ValueError(msg)
        if any(b <= a for a, b in zip(levels, levels[1:], strict=False)):
            msg = "quantile_levels must be strictly increasing"
            raise ValueError(msg)
        return levels


class PredictorConfig(BaseModel):
    """Configuration of a classification predictor.

    Attributes:
        kind (PredictorKindEnum): The conformal algorithm.
        score (ScoreConfig): The nonconformity score.
        temperature (float): Temperature applied to logits before the softmax.
        cluster (ClusterConfig): Clustered-calibration hyperparameters.
        weight_fn (WeightFunction, optional): Maps an instance to its positive
            weight (likelihood ratio); used by the weighted predictor when no
            explicit weights are passed. Never serialized.

    Examples:
        >>> PredictorConfig(kind="class_wise").temperature
        1.0
    """

    model_config = ConfigDict(frozen=True)

    kind: PredictorKindEnum = PredictorKindEnum.SPLIT
    score: ScoreConfig = Field(default_factory=ScoreConfig)
    temperature: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)
    weight_fn: WeightFunction | None = Field(default=None, exclude=True)


class CalibratedPredictor(BaseModel):
    """A predictor together with its calibrated threshold.

    Attributes:
        config (PredictorConfig): The predictor configuration.
        threshold (CalibratedThreshold): The calibrated threshold.
        alpha (float): The significance level used for calibration.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="strings")

    config: PredictorConfig
    threshold: CalibratedThreshold
    alpha: Alpha

    @model_validator(mode="after")
    def _check_kind(self) -> Self:
        if THRESHOLD_KINDS[self.config.kind] is not self.threshold.kind:
            msg = (
                f"threshold kind {self.threshold.kind} does not match "
                f"predictor kind {self.config.kind}"
            )
            raise ValueError(msg)
        return self

    @property
    def num_classes(self) -> int:
        """Size of the label universe seen at calibration."""
        return self.threshold.num_classes


def _validate_logits(logits: ArrayLike) -> NDArray[np.float64]:
    matrix = np.asarray(logits, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[np.newaxis, :]
    if matrix.ndim != 2 or matrix.shape[1] == 0:  # noqa: PLR2004
        msg = f"expected an n x K logit matrix, got shape {matrix.shape}"
        raise InputError(msg)
    if not np.all(np.isfinite(matrix)):
        msg = "logits must be finite"
        raise InputError(msg)
    return matrix


def softmax_with_temperature(
    logits: ArrayLike, temperature: float = 1.0
) -> NDArray[np.float64]:
    """Apply temperature scaling followed by a numerically stable softmax.

    Args:
        logits (ArrayLike): A logit vector or an n x K logit matrix.
        temperature (float, optional): Positive temperature. Defaults to 1.0.

    Returns:
        NDArray[np.float64]: Probabilities with the input's shape.

    Raises:
        InputError: On non-finite logits or a non-positive temperature.

    Examples:
        >>> softmax_with_temperature([0.0, 0.0]).tolist()
        [0.5, 0.5]
        >>> softmax_with_temperature([0.0, float(np.log(3.0))]).round(12).tolist()
        [0.25, 0.75]
    """
    if not (np.isfinite(temperature) and temperature > 0):
        msg = f"temperature must be positive, got {temperature}"
        raise InputError(msg)
    raw = np.asarray(logits, dtype=np.float64)
    matrix = _validate_logits(raw) / temperature
    shifted = np.exp(matrix - matrix.max(axis=1, keepdims=True))
    probs = shifted / shifted.sum(axis=1, keepdims=True)
    return probs[0] if raw.ndim == 1 else probs


def _auto_num_clusters(num_eligible: int) -> int:
    return min(max(num_eligible // 2, 1), MAX_AUTO_CLUSTERS)


def _cluster_threshold(
    scores: NDArray[np.float64],
    labels: NDArray[np.int64],
    alpha: float,
    num_classes: int,
    cluster: ClusterConfig,
) -> CalibratedThreshold:
    marginal = conformal_quantile(scores, alpha)
    counts = np.bincount(labels, minlength=num_classes)
    eligible = np.flatnonzero(counts >= cluster.min_class_count)
    if eligible.size == 0:
        logger.info(
            "No class has %d items; using the marginal threshold",
            cluster.min_class_count,
        )
        return CalibratedThreshold(
            kind=ThresholdKindEnum.PER_CLUSTER,
            values=[marginal],
            num_classes=num_classes,
            class_to_cluster=[0] * num_classes,
        )
    requested = cluster.num_clusters or _auto_num_clusters(eligible.size)
    num_clusters = min(requested, eligible.size)
    embeddings = np.vstack(
        [np.quantile(scores[labels == k], cluster.quantile_levels) for k in eligible]
    )
    assignment = kmeans(
        embeddings,
        num_clusters,
        max_iter=cluster.kmeans_iters,
        seed=cluster.kmeans_seed,
    ).labels
    values: list[float] = []
    for c in range(num_clusters):
        pooled = scores[np.isin(labels, eligible[assignment == c])]
        values.append(conformal_quantile(pooled, alpha) if pooled.size else marginal)
    values.append(marginal)
    class_to_cluster = np.full(num_classes, num_clusters, dtype=np.int64)
    class_to_cluster[eligible] = assignment
    logger.debug(
        "Clustered %d eligible classes into %d clusters", eligible.size, num_clusters
    )
    return CalibratedThreshold(
        kind=ThresholdKindEnum.PER_CLUSTER,
        values=values,
        num_classes=num_classes,
        class_to_cluster=class_to_cluster.tolist(),
    )


def calibrate_from_scores(  # noqa: PLR0913
    kind: PredictorKindEnum,
    scores: ArrayLike,
    labels: ArrayLike,
    alpha: float,
    num_classes: int,
    *,
    cluster: ClusterConfig | None = None,
    weights: ArrayLike | None = None,
) -> CalibratedThreshold:
    """Calibrate a threshold from the true-label scores of a calibration set.

    Args:
        kind (PredictorKindEnum): The conformal algorithm.
        scores (ArrayLike): n true-label nonconformity scores.
        labels (ArrayLike): n class indices.
        alpha (float): Significance level in (0, 1).
        num_classes (int): Size of the label universe.
        cluster (ClusterConfig, optional): Clustered-calibration settings.
            Defaults to None (library defaults).
        weights (ArrayLike, optional): n calibration weights (weighted only).
            Defaults to None.

    Returns:
        CalibratedThreshold: The threshold for ``kind``.

    Raises:
        InputError: On an empty calibration set or inconsistent inputs.
        ConfigurationError: If the weighted predictor receives no weights.
    """
    alpha = validate_alpha(alpha)
    values = np.asarray(scores, dtype=np.float64).ravel()
    if values.size == 0:
        msg = "calibration set must not be empty"
        raise InputError(msg)
    targets = validate_labels(labels, values.size, num_classes)
    match kind:
        case PredictorKindEnum.SPLIT:
            return CalibratedThreshold(
                kind=ThresholdKindEnum.SCALAR,
                values=[conformal_quantile(values, alpha)],
                num_classes=num_classes,
            )
        case PredictorKindEnum.CLASS_WISE:
            per_class = [
                conformal_quantile(values[targets == k], alpha)
                if np.any(targets == k)
                else np.inf
                for k in range(num_classes)
            ]
            return CalibratedThreshold(
                kind=ThresholdKindEnum.PER_CLASS,
                values=per_class,
                num_classes=num_classes,
            )
        case PredictorKindEnum.CLUSTER:
            return _cluster_threshold(
                values, targets, alpha, num_classes, cluster or ClusterConfig()
            )
        case PredictorKindEnum.WEIGHTED:
            if weights is None:
                msg = "the weighted predictor needs calibration weights or a weight_fn"
                raise ConfigurationError(msg)
            masses = np.asarray(weights, dtype=np.float64).ravel()
            if masses.size != values.size:
                msg = f"got {masses.size} weights for {values.size} calibration items"
                raise InputError(msg)
            if np.any(masses < 0) or not np.all(np.isfinite(masses)):
                msg = "calibration weights must be finite and nonnegative"
                raise InputError(msg)
            return CalibratedThreshold(
                kind=ThresholdKindEnum.WEIGHTED,
                num_classes=num_classes,
                weighted_scores=values.tolist(),
                weighted_weights=masses.tolist(),
            )
    msg = f"unsupported predictor kind: {kind}"
    raise InputError(msg)


def predict_mask_from_scores(
    threshold: CalibratedThreshold,
    scores: ArrayLike,
    alpha: float,
    test_weights: ArrayLike | None = None,
) -> NDArray[np.bool_]:
    """Apply a calibrated threshold to an all-label score matrix.

    Args:
        threshold (CalibratedThreshold): The calibrated threshold.
        scores (ArrayLike): An m x K score matrix.
        alpha (float): Significance level (used by weighted thresholds).
        test_weights (ArrayLike, optional): m test weights (weighted only).
            Defaults to None.

    Returns:
        NDArray[np.bool_]: An m x K membership mask.

    Raises:
        InputError: On a label-universe mismatch or missing test weights.
    """
    matrix = np.asarray(scores, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != threshold.num_classes:  # noqa: PLR2004
        msg = f"expected m x {threshold.num_classes} scores, got shape {matrix.shape}"
        raise InputError(msg)
    if threshold.kind is not ThresholdKindEnum.WEIGHTED:
        return matrix <= threshold.label_thresholds()[np.newaxis, :]
    if test_weights is None:
        msg = "the weighted predictor needs one test weight per row"
        raise InputError(msg)
    masses = np.asarray(test_weights, dtype=np.float64).ravel()
    if masses.size != matrix.shape[0]:
        msg = f"got {masses.size} test weights for {matrix.shape[0]} rows"
        raise InputError(msg)
    row_thresholds = weighted_conformal_quantiles(
        threshold.weighted_scores or [], threshold.weighted_weights or [], masses, alpha
    )
    return matrix <= row_thresholds[:, np.newaxis]


def mask_to_sets(mask: NDArray[np.bool_]) -> list[PredictionSet]:
    """Convert a membership mask into prediction sets."""
    return [
        PredictionSet.model_construct(members=frozenset(np.flatnonzero(row).tolist()))
        for row in mask
    ]


def _resolve_weights(
    config: PredictorConfig,
    explicit: ArrayLike | None,
    instances: Sequence[Any] | NDArray,
) -> ArrayLike | None:
    if config.kind is not PredictorKindEnum.WEIGHTED or explicit is not None:
        return explicit
    if config.weight_fn is None:
        return None
    return np.array(
        [config.weight_fn(instance) for instance in instances], dtype=np.float64
    )


@log_operation
def calculate_threshold(
    predictor: PredictorConfig,
    cal_logits: ArrayLike,
    cal_labels: ArrayLike,
    alpha: float,
    cal_weights: ArrayLike | None = None,
) -> CalibratedPredictor:
    """Calibrate a classification predictor from calibration logits.

    Args:
        predictor (PredictorConfig): The predictor configuration.
        cal_logits (ArrayLike): An n x K logit matrix, n >= 1.
        cal_labels (ArrayLike): n class indices.
        alpha (float): Significance level in (0, 1).
        cal_weights (ArrayLike, optional): n calibration weights for the
            weighted predictor; computed with ``weight_fn`` when omitted.
            Defaults to None.

    Returns:
        CalibratedPredictor: The calibrated predictor.

    Raises:
        InputError: On an empty calibration set or invalid inputs.
        ConfigurationError: If the weighted predictor has no weights.

    Examples:
        >>> logits = np.log(np.tile([0.9, 0.05, 0.05], (9, 1)))
        >>> calibrated = calculate_threshold(PredictorConfig(
        ...     score=ScoreConfig(kind="thr")), logits, [0] * 9, 0.1)
        >>> round(calibrated.threshold.values[0], 6)
        0.1
    """
    logits = _validate_logits(cal_logits)
    if logits.shape[0] == 0:
        msg = "calibration set must not be empty"
        raise InputError(msg)
    probs = softmax_with_temperature(logits, predictor.temperature)
    scores = score_batch(predictor.score, probs, cal_labels, stream=CALIBRATION_STREAM)
    threshold = calibrate_from_scores(
        predictor.kind,
        scores,
        cal_labels,
        alpha,
        logits.shape[1],
        cluster=predictor.cluster,
        weights=_resolve_weights(predictor, cal_weights, logits),
    )
    return CalibratedPredictor(config=predictor, threshold=threshold, alpha=alpha)


def prediction_mask(
    predictor: CalibratedPredictor,
    test_logits: ArrayLike,
    test_weights: ArrayLike | None = None,
) -> NDArray[np.bool_]:
    """Compute the m x K membership mask of the prediction sets.

    Raises:
        StateError: If the predictor has not been calibrated.
        InputError: On invalid logits or missing test weights.
    """
    if not isinstance(predictor, CalibratedPredictor):
        msg = "predictor must be calibrated before predicting"
        raise StateError(msg)
    logits = _validate_logits(test_logits)
    if logits.shape[0] == 0:
        msg = "test set must not be empty"
        raise InputError(msg)
    probs = softmax_with_temperature(logits, predictor.config.temperature)
    scores = score_matrix(predictor.config.score, probs, stream=PREDICTION_STREAM)
    weights = _resolve_weights(predictor.config, test_weights, logits)
    return predict_mask_from_scores(
        predictor.threshold, scores, predictor.alpha, weights
    )


@log_operation
def predict_with_logits(
    predictor: CalibratedPredictor,
    test_logits: ArrayLike,
    test_weights: ArrayLike | None = None,
) -> list[PredictionSet]:
    """Build one prediction set per test row.

    Label ``k`` enters row ``i``'s set when its score does not exceed the
    threshold that applies to ``(i, k)``.

    Args:
        predictor (CalibratedPredictor): A calibrated predictor.
        test_logits (ArrayLike): An m x K logit matrix, m >= 1.
        test_weights (ArrayLike, optional): m test weights for the weighted
            predictor; computed with ``weight_fn`` when omitted. Defaults to None.

    Returns:
        list[PredictionSet]: m prediction sets, possibly empty.

    Raises:
        StateError: If the predictor has not been calibrated.
        InputError: On invalid logits or missing test weights.
    """
    return mask_to_sets(prediction_mask(predictor, test_logits, test_weights))


class ConformalClassifier:
    """Wraps a row-wise model function with calibrate-then-predict.

    Attributes:
        config (PredictorConfig): The predictor configuration.
        model (Callable[[Any], ArrayLike]): Maps one instance to its logits.
        calibrated (CalibratedPredictor | None): Set by :meth:`calibrate`.

    Examples:
        >>> classifier = ConformalClassifier(PredictorConfig(), model=lambda x: x)
        >>> classifier.predict([[0.0, 1.0]])
        Traceback (most recent call last):
            ...
        conformalkit.core.errors.StateError: call calibrate() before predict()
    """

    def __init__(
        self, config: PredictorConfig, model: Callable[[Any], ArrayLike]
    ) -> None:
        """Initialize the classifier.

        Args:
            config (PredictorConfig): The predictor configuration.
            model (Callable[[Any], ArrayLike]): Maps one instance to its logits.
        """
        self.config = config
        self.model = model
        self.calibrated: CalibratedPredictor | None = None

    def logits(self, inputs: Sequence[Any] | NDArray) -> NDArray[np.float64]:
        """Apply the model to every instance and stack the logits."""
        rows = [
            np.asarray(self.model(instance), dtype=np.float64) for instance in inputs
        ]
        if not rows:
            msg = "inputs must not be empty"
            raise InputError(msg)
        return np.vstack(rows)

    def calibrate(
        self, inputs: Sequence[Any] | NDArray, labels: ArrayLike, alpha: float
    ) -> CalibratedPredictor:
        """Calibrate on labeled instances and remember the result."""
        weights = _resolve_weights(self.config, None, inputs)
        self.calibrated = calculate_threshold(
            self.config, self.logits(inputs), labels, alpha, cal_weights=weights
        )
        return self.calibrated

    def predict(
        self, inputs: Sequence[Any] | NDArray, test_weights: ArrayLike | None = None
    ) -> list[PredictionSet]:
        """Predict sets for unlabeled instances.

        Raises:
            StateError: If :meth:`calibrate` has not been called.
        """
        if self.calibrated is None:
            msg = "call calibrate() before predict()"
            raise StateError(msg)
        weights = _resolve_weights(self.config, test_weights, inputs)
        return predict_with_logits(self.calibrated, self.logits(inputs), weights)
