from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from conformalkit.core.errors import InputError

PROBABILITY_TOLERANCE = 1e-6

CALIBRATION_STREAM = 0
PREDICTION_STREAM = 1


class ScoreKindEnum(StrEnum):
    """Supported classification nonconformity scores."""

    THR = "thr"
    APS = "aps"
    RAPS = "raps"
    SAPS = "saps"
    MARGIN = "margin"


class ScoreConfig(BaseModel):
    """Configuration of a classification score function.

    Attributes:
        kind (ScoreKindEnum): Which score to compute.
        raps_penalty (float): RAPS rank penalty ``lambda``.
        raps_kreg (int): RAPS rank below which no penalty applies.
        saps_weight (float): SAPS ranking weight.
        randomized (bool): Draw one ``u ~ U(0, 1)`` per row; ``u = 1`` otherwise.
        rng_seed (int): Seed of the per-row uniform draws.

    Examples:
        >>> ScoreConfig(kind=ScoreKindEnum.RAPS, raps_penalty=1.0).raps_kreg
        0
    """

    model_config = ConfigDict(frozen=True)

    kind: ScoreKindEnum = ScoreKindEnum.THR
    raps_penalty: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)
    raps_kreg: int = Field(default=0, ge=0)
    saps_weight: float = Field(default=0.25, gt=0.0, allow_inf_nan=False)
    randomized: bool = True
    rng_seed: int = Field(default=0, ge=0, lt=2**64)


def validate_probabilities(probs: ArrayLike) -> NDArray[np.float64]:
    """Validate a probability matrix and return it as a 2-D float64 array.

    Args:
        probs (ArrayLike): A probability vector or an n x K matrix.

    Returns:
        NDArray[np.float64]: The probabilities as an n x K matrix.

    Raises:
        InputError: If an entry leaves [0, 1] or a row does not sum to 1.
    """
    matrix = np.asarray(probs, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[np.newaxis, :]
    if matrix.ndim != 2 or matrix.shape[1] == 0:  # noqa: PLR2004
        msg = f"expected an n x K probability matrix, got shape {matrix.shape}"
        raise InputError(msg)
    if matrix.size and (
        not np.all(np.isfinite(matrix))
        or matrix.min() < -PROBABILITY_TOLERANCE
        or matrix.max() > 1 + PROBABILITY_TOLERANCE
    ):
        msg = "probabilities must lie in [0, 1]"
        raise InputError(msg)
    if matrix.size and np.max(np.abs(matrix.sum(axis=1) - 1.0)) > PROBABILITY_TOLERANCE:
        msg = "every probability row must sum to 1"
        raise InputError(msg)
    return matrix


def row_uniforms(
    config: ScoreConfig, n: int, stream: int = 0, *, start: int = 0
) -> NDArray[np.float64]:
    """Return the ``u`` value of rows ``start`` to ``start + n``.

    Row ``i`` always receives the ``i``-th draw of the PCG64 stream seeded by
    ``(rng_seed, stream)``, so results do not depend on batching.

    Args:
        config (ScoreConfig): The score configuration.
        n (int): Number of rows.
        stream (int, optional): Stream identifier. Defaults to 0.
        start (int, optional): Index of the first row. Defaults to 0.

    Returns:
        NDArray[np.float64]: ``n`` values, all ones when not randomized.
    """
    if not config.randomized:
        return np.ones(n)
    bits = np.random.PCG64([config.rng_seed, stream])
    # one double consumes one 64-bit step
    bits.advance(start)
    return np.random.Generator(bits).random(n)


def descending_ranks(probs: NDArray[np.float64]) -> NDArray[np.int64]:
    """Return the 1-based descending rank of every entry, ties by label index.

    Examples:
        >>> descending_ranks(np.array([[0.2, 0.5, 0.2, 0.1]])).tolist()
        [[2, 1, 3, 4]]
    """
    order = np.argsort(-probs, axis=1, kind="stable")
    ranks = np.empty_like(order)
    positions = np.arange(1, probs.shape[1] + 1)[np.newaxis, :]
    np.put_along_axis(ranks, order, positions, axis=1)
    return ranks


def _mass_strictly_above(probs: NDArray[np.float64]) -> NDArray[np.float64]:
    order = np.argsort(-probs, axis=1, kind="stable")
    ranked = np.take_along_axis(probs, order, axis=1)
    exclusive = np.cumsum(ranked, axis=1) - ranked
    # Within a tie group every member sees the mass before the group's head.
    positions = np.arange(probs.shape[1])[np.newaxis, :]
    starts = np.ones_like(ranked, dtype=bool)
    starts[:, 1:] = ranked[:, 1:] != ranked[:, :-1]
    heads = np.maximum.accumulate(np.where(starts, positions, 0), axis=1)
    ranked_mass = np.take_along_axis(exclusive, heads, axis=1)
    mass = np.empty_like(ranked_mass)
    np.put_along_axis(mass, order, ranked_mass, axis=1)
    return mass


def _max_other(probs: NDArray[np.float64]) -> NDArray[np.float64]:
    num_classes = probs.shape[1]
    if num_classes == 1:
        return np.zeros_like(probs)
    order = np.argsort(-probs, axis=1, kind="stable")
    top = np.take_along_axis(probs, order[:, :1], axis=1)
    second = np.take_along_axis(probs, order[:, 1:2], axis=1)
    is_top = np.arange(num_classes)[np.newaxis, :] == order[:, :1]
    return np.where(is_top, second, top)


def _scores_from_probabilities(
    config: ScoreConfig, probs: NDArray[np.float64], u: NDArray[np.float64]
) -> NDArray[np.float64]:
    u = u[:, np.newaxis]
    match config.kind:
        case ScoreKindEnum.THR:
            return 1.0 - probs
        case ScoreKindEnum.APS:
            return _mass_strictly_above(probs) + u * probs
        case ScoreKindEnum.RAPS:
            ranks = descending_ranks(probs)
            penalty = config.raps_penalty * np.maximum(0, ranks - config.raps_kreg)
            return _mass_strictly_above(probs) + u * probs + penalty
        case ScoreKindEnum.SAPS:
            ranks = descending_ranks(probs)
            top = probs.max(axis=1, keepdims=True)
            return np.where(
                ranks == 1,
                u * top,
                top + (ranks - 2 + u) * config.saps_weight,
            )
        case ScoreKindEnum.MARGIN:
            return _max_other(probs) - probs
    msg = f"unsupported score kind: {config.kind}"
    raise InputError(msg)


def _check_kreg(config: ScoreConfig, num_classes: int) -> None:
    if config.kind is ScoreKindEnum.RAPS and config.raps_kreg >= num_classes > 1:
        msg = f"raps_kreg={config.raps_kreg} must be below K={num_classes}"
        raise InputError(msg)


def score_matrix(
    config: ScoreConfig, probs: ArrayLike, *, stream: int = 0
) -> NDArray[np.float64]:
    """Score every label of every row.

    Args:
        config (ScoreConfig): The score configuration.
        probs (ArrayLike): An n x K probability matrix.
        stream (int, optional): Uniform stream identifier. Defaults to 0.

    Returns:
        NDArray[np.float64]: An n x K score matrix sharing one ``u`` per row.
    """
    matrix = validate_probabilities(probs)
    _check_kreg(config, matrix.shape[1])
    u = row_uniforms(config, matrix.shape[0], stream)
    return _scores_from_probabilities(config, matrix, u)


def _row_u(config: ScoreConfig, row: int, stream: int) -> NDArray[np.float64]:
    return row_uniforms(config, 1, stream, start=row)


def score_all(
    config: ScoreConfig, probs_row: ArrayLike, *, row: int = 0, stream: int = 0
) -> NDArray[np.float64]:
    """Score every label of a single probability vector.

    Args:
        config (ScoreConfig): The score configuration.
        probs_row (ArrayLike): A probability vector of length K.
        row (int, optional): Row index, selects the ``u`` draw. Defaults to 0.
        stream (int, optional): Uniform stream identifier. Defaults to 0.

    Returns:
        NDArray[np.float64]: K scores.

    Examples:
        >>> score_all(ScoreConfig(kind="thr"), [0.7, 0.2, 0.1]).round(6).tolist()
        [0.3, 0.8, 0.9]
    """
    matrix = validate_probabilities(probs_row)
    if matrix.shape[0] != 1:
        msg = "score_all expects a single probability vector"
        raise InputError(msg)
    _check_kreg(config, matrix.shape[1])
    return _scores_from_probabilities(config, matrix, _row_u(config, row, stream))[0]


def score(
    config: ScoreConfig,
    probs_row: ArrayLike,
    label: int,
    *,
    row: int = 0,
    stream: int = 0,
) -> float:
    """Score one (probability vector, label) pair.

    Args:
        config (ScoreConfig): The score configuration.
        probs_row (ArrayLike): A probability vector of length K.
        label (int): Class index in ``[0, K)``.
        row (int, optional): Row index, selects the ``u`` draw. Defaults to 0.
        stream (int, optional): Uniform stream identifier. Defaults to 0.

    Returns:
        float: The nonconformity score.

    Raises:
        InputError: If the label is out of range or the row is invalid.

    Examples:
        >>> round(score(ScoreConfig(kind="thr"), [0.7, 0.2, 0.1], 0), 6)
        0.3
    """
    scores = score_all(config, probs_row, row=row, stream=stream)
    if not 0 <= label < scores.size:
        msg = f"label {label} outside [0, {scores.size})"
        raise InputError(msg)
    return float(scores[label])


def validate_labels(labels: ArrayLike, n: int, num_classes: int) -> NDArray[np.int64]:
    """Check a label vector against the row count and label universe.

    Raises:
        InputError: On length mismatch or out-of-range labels.
    """
    values = np.asarray(labels).ravel()
    if values.size != n:
        msg = f"got {values.size} labels for {n} rows"
        raise InputError(msg)
    if values.size and (
        not np.issubdtype(values.dtype, np.integer)
        and not np.all(np.equal(np.mod(values, 1), 0))
    ):
        msg = "labels must be integers"
        raise InputError(msg)
    values = values.astype(np.int64)
    if values.size and (values.min() < 0 or values.max() >= num_classes):
        msg = f"labels must lie in [0, {num_classes})"
        raise InputError(msg)
    return values


def score_batch(
    config: ScoreConfig, probs: ArrayLike, labels: ArrayLike, *, stream: int = 0
) -> NDArray[np.float64]:
    """Score the true label of every row.

    Args:
        config (ScoreConfig): The score configuration.
        probs (ArrayLike): An n x K probability matrix.
        labels (ArrayLike): n class indices.
        stream (int, optional): Uniform stream identifier. Defaults to 0.

    Returns:
        NDArray[np.float64]: n scores; empty when n = 0.
    """
    matrix = validate_probabilities(probs)
    targets = validate_labels(labels, matrix.shape[0], matrix.shape[1])
    scores = score_matrix(config, matrix, stream=stream)
    return scores[np.arange(targets.size), targets]


def score_jacobian(config: ScoreConfig, probs: ArrayLike) -> NDArray[np.float64]:
    """Differentiate the deterministic (``u = 1``) scores w.r.t. probabilities.

    The scores are piecewise linear in the probabilities; the returned
    Jacobian is exact away from probability ties.

    Args:
        config (ScoreConfig): The score configuration; ``randomized`` is ignored.
        probs (ArrayLike): An n x K probability matrix.

    Returns:
        NDArray[np.float64]: An n x K x K array ``J[i, k, j] = ds_ik / dp_ij``.
    """
    matrix = validate_probabilities(probs)
    n, num_classes = matrix.shape
    eye = np.broadcast_to(np.eye(num_classes), (n, num_classes, num_classes))
    match config.kind:
        case ScoreKindEnum.THR:
            return -eye.copy()
        case ScoreKindEnum.APS | ScoreKindEnum.RAPS:
            above = matrix[:, np.newaxis, :] > matrix[:, :, np.newaxis]
            return above.astype(np.float64) + eye
        case ScoreKindEnum.SAPS:
            top = np.argmax(matrix, axis=1)
            jacobian = np.zeros((n, num_classes, num_classes))
            jacobian[np.arange(n), :, top] = 1.0
            return jacobian
        case ScoreKindEnum.MARGIN:
            jacobian = -eye.copy()
            if num_classes > 1:
                order = np.argsort(-matrix, axis=1, kind="stable")
                rows = np.arange(n)[:, np.newaxis]
                labels = np.arange(num_classes)[np.newaxis, :]
                others = np.where(labels == order[:, :1], order[:, 1:2], order[:, :1])
                jacobian[rows, labels, others] += 1.0
            return jacobian
    msg = f"unsupported score kind: {config.kind}"
    raise InputError(msg)
