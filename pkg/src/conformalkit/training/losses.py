import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from conformalkit.classification.predictors import softmax_with_temperature
from conformalkit.classification.scores import (
    ScoreConfig,
    score_jacobian,
    score_matrix,
    validate_labels,
)
from conformalkit.core.errors import InputError
from conformalkit.core.models.types import validate_alpha
from conformalkit.core.quantile import conformal_rank
from conformalkit.regression.predictors import BinGrid

CONTR_MIN_BATCH = 4


@dataclass(frozen=True)
class LossEvaluation:
    """A loss value with its gradient w.r.t. the model outputs.

    Attributes:
        value (float): The scalar loss.
        grad (NDArray[np.float64]): ``d loss / d outputs``, shaped like the outputs.
    """

    value: float
    grad: NDArray[np.float64]


LossFunction = Callable[[NDArray[np.float64], NDArray[np.float64]], LossEvaluation]
"""Maps (model outputs, targets) to a :class:`LossEvaluation`."""


def _softmax_backward(
    probs: NDArray[np.float64], grad_probs: NDArray[np.float64]
) -> NDArray[np.float64]:
    inner = np.sum(probs * grad_probs, axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def _as_matrix(outputs: ArrayLike, name: str) -> NDArray[np.float64]:
    matrix = np.asarray(outputs, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    if matrix.ndim != 2 or matrix.shape[0] == 0:  # noqa: PLR2004
        msg = f"{name} must be a non-empty n x k matrix, got shape {matrix.shape}"
        raise InputError(msg)
    return matrix


def quantile_loss(
    predictions: ArrayLike,
    targets: ArrayLike,
    quantiles: Sequence[float] = (0.05, 0.95),
) -> LossEvaluation:
    """Mean pinball loss over items and quantile heads.

    ``rho_q(e) = max(q e, (q - 1) e)`` with ``e = y - y_hat``; the subgradient
    at ``e = 0`` is taken as 0.

    Args:
        predictions (ArrayLike): n x h predictions, one column per quantile.
        targets (ArrayLike): n targets.
        quantiles (Sequence[float], optional): Strictly increasing levels in
            (0, 1). Defaults to (0.05, 0.95).

    Returns:
        LossEvaluation: The loss and its gradient w.r.t. the predictions.

    Raises:
        InputError: On invalid levels or mismatched shapes.

    Examples:
        >>> round(quantile_loss([[0.0, 2.0]], [1.0]).value, 6)
        0.05
    """
    levels = np.asarray(quantiles, dtype=np.float64)
    if (
        levels.ndim != 1
        or levels.size == 0
        or np.any((levels <= 0) | (levels >= 1))
        or np.any(np.diff(levels) <= 0)
    ):
        msg = (
            "quantile levels must be strictly increasing in (0, 1), "
            f"got {levels.tolist()}"
        )
        raise InputError(msg)
    outputs = _as_matrix(predictions, "predictions")
    observed = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    if outputs.shape != (observed.shape[0], levels.size):
        msg = (
            f"predictions {outputs.shape} do not match "
            f"{observed.shape[0]} targets x {levels.size} quantiles"
        )
        raise InputError(msg)
    errors = observed - outputs
    losses = np.maximum(levels * errors, (levels - 1) * errors)
    slopes = np.where(errors > 0, levels, np.where(errors < 0, levels - 1, 0.0))
    return LossEvaluation(value=float(losses.mean()), grad=-slopes / outputs.size)


def r2ccp_loss(
    bin_logits: ArrayLike,
    targets: ArrayLike,
    grid: BinGrid,
    p_exponent: float = 2.0,
    tau: float = 0.1,
) -> LossEvaluation:
    """Distance-penalized bin density loss with an entropy bonus.

    With ``p_i = softmax(bin_logits_i)`` the per-item loss is
    ``sum_k p_ik |y_i - m_k|^p - tau * H(p_i)``.

    Args:
        bin_logits (ArrayLike): n x K bin logits.
        targets (ArrayLike): n targets inside the grid range.
        grid (BinGrid): The bin grid with K midpoints.
        p_exponent (float, optional): Distance exponent. Defaults to 2.0.
        tau (float, optional): Entropy weight, nonnegative. Defaults to 0.1.

    Returns:
        LossEvaluation: The mean loss and its gradient w.r.t. the logits.

    Raises:
        InputError: On out-of-range targets or mismatched shapes.
    """
    if tau < 0:
        msg = f"tau must be nonnegative, got {tau}"
        raise InputError(msg)
    logits = _as_matrix(bin_logits, "bin_logits")
    if logits.shape[1] != grid.num_bins:
        msg = f"expected {grid.num_bins} bin logits, got {logits.shape[1]}"
        raise InputError(msg)
    observed = grid.check_targets(targets)
    if observed.size != logits.shape[0]:
        msg = f"got {observed.size} targets for {logits.shape[0]} rows"
        raise InputError(msg)
    probs = softmax_with_temperature(logits)
    offsets = observed[:, np.newaxis] - grid.array()[np.newaxis, :]
    distances = np.abs(offsets) ** p_exponent
    log_probs = np.log(np.maximum(probs, np.finfo(np.float64).tiny))
    neg_entropy = np.sum(probs * log_probs, axis=1)
    per_item = np.sum(probs * distances, axis=1) + tau * neg_entropy
    grad_probs = distances + tau * (log_probs + 1.0)
    n = logits.shape[0]
    return LossEvaluation(
        value=float(per_item.mean()), grad=_softmax_backward(probs, grad_probs) / n
    )


def _sigmoid(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def contr_loss(  # noqa: PLR0913
    logits: ArrayLike,
    labels: ArrayLike,
    score: ScoreConfig,
    alpha: float = 0.1,
    sigmoid_temp: float = 0.1,
    split_fraction: float = 0.5,
) -> LossEvaluation:
    """Smooth prediction-set size of a batch split into pseudo folds.

    The first ``ceil(split_fraction * n)`` items calibrate a threshold from
    their true-label scores (deterministic, ``u = 1``); every label of the
    remaining items contributes ``sigmoid((q - s) / sigmoid_temp)``. The
    gradient reaches the threshold only through the selected order statistic.

    Args:
        logits (ArrayLike): n x K logits, n >= 4.
        labels (ArrayLike): n class indices.
        score (ScoreConfig): The score function; ``randomized`` is ignored.
        alpha (float, optional): Significance level. Defaults to 0.1.
        sigmoid_temp (float, optional): Sigmoid temperature. Defaults to 0.1.
        split_fraction (float, optional): Share of pseudo-calibration items.
            Defaults to 0.5.

    Returns:
        LossEvaluation: Mean smooth set size over pseudo-test items, in [0, K].

    Raises:
        InputError: If n < 4 or a parameter is out of range.
    """
    alpha = validate_alpha(alpha)
    if sigmoid_temp <= 0:
        msg = f"sigmoid_temp must be positive, got {sigmoid_temp}"
        raise InputError(msg)
    if not 0 < split_fraction < 1:
        msg = f"split_fraction must lie in (0, 1), got {split_fraction}"
        raise InputError(msg)
    matrix = _as_matrix(logits, "logits")
    n, num_classes = matrix.shape
    if n < CONTR_MIN_BATCH:
        msg = f"contr_loss needs at least {CONTR_MIN_BATCH} items, got {n}"
        raise InputError(msg)
    targets = validate_labels(labels, n, num_classes)
    deterministic = score.model_copy(update={"randomized": False})

    probs = softmax_with_temperature(matrix)
    scores = score_matrix(deterministic, probs)
    num_cal = min(max(math.ceil(split_fraction * n), 1), n - 1)
    cal_scores = scores[np.arange(num_cal), targets[:num_cal]]
    rank = min(conformal_rank(num_cal, alpha), num_cal)
    order = np.argsort(cal_scores, kind="stable")
    selected = int(order[rank - 1])
    threshold = cal_scores[selected]

    test_scores = scores[num_cal:]
    num_test = test_scores.shape[0]
    membership = _sigmoid((threshold - test_scores) / sigmoid_temp)
    value = float(membership.sum() / num_test)

    slope = membership * (1.0 - membership) / (sigmoid_temp * num_test)
    grad_scores = np.zeros_like(scores)
    grad_scores[num_cal:] = -slope
    grad_scores[selected, targets[selected]] += slope.sum()
    jacobian = score_jacobian(deterministic, probs)
    grad_probs = np.einsum("ik,ikj->ij", grad_scores, jacobian)
    return LossEvaluation(value=value, grad=_softmax_backward(probs, grad_probs))


def cross_entropy_loss(logits: ArrayLike, labels: ArrayLike) -> LossEvaluation:
    """Mean negative log-likelihood of the labels under ``softmax(logits)``.

    Examples:
        >>> round(cross_entropy_loss([[0.0, 0.0]], [1]).value, 6)
        0.693147
    """
    matrix = _as_matrix(logits, "logits")
    n, num_classes = matrix.shape
    targets = validate_labels(labels, n, num_classes)
    shifted = matrix - matrix.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(log_norm - shifted[np.arange(n), targets]))
    grad = softmax_with_temperature(matrix)
    grad[np.arange(n), targets] -= 1.0
    return LossEvaluation(value=value, grad=grad / n)


def weighted_sum(*terms: tuple[float, LossFunction]) -> LossFunction:
    """Combine losses sharing outputs and targets as ``sum_i w_i L_i``.

    Examples:
        >>> loss = weighted_sum((1.0, cross_entropy_loss), (0.5, cross_entropy_loss))
        >>> round(loss(np.zeros((1, 2)), np.array([0])).value, 6)
        1.039721
    """
    if not terms:
        msg = "weighted_sum needs at least one term"
        raise InputError(msg)

    def combined(
        outputs: NDArray[np.float64], targets: NDArray[np.float64]
    ) -> LossEvaluation:
        evaluations = [(weight, loss(outputs, targets)) for weight, loss in terms]
        return LossEvaluation(
            value=float(sum(weight * e.value for weight, e in evaluations)),
            grad=sum(
                (weight * e.grad for weight, e in evaluations),
                np.zeros(np.shape(outputs)),
            ),
        )

    return combined
