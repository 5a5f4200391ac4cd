import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from conformalkit.core.errors import InputError
from conformalkit.core.models.types import validate_alpha

# Relative slack on the target mass; makes uniform weights reduce exactly to
# the unweighted order statistic despite float rounding in (n + 1)(1 - alpha).
_MASS_TOLERANCE = 1e-12


def as_score_vector(scores: ArrayLike) -> NDArray[np.float64]:
    """Validate and flatten calibration scores.

    Args:
        scores (ArrayLike): The nonconformity scores.

    Returns:
        NDArray[np.float64]: A one-dimensional float64 copy.

    Raises:
        InputError: If the vector is empty or holds a non-finite entry.
    """
    values = np.asarray(scores, dtype=np.float64).ravel()
    if values.size == 0:
        msg = "score vector must not be empty"
        raise InputError(msg)
    if not np.all(np.isfinite(values)):
        msg = "calibration scores must be finite"
        raise InputError(msg)
    return values


def _mass_target[T: (float, NDArray[np.float64])](total: T, alpha: float) -> T:
    return total * (1.0 - alpha) - _MASS_TOLERANCE * total


def conformal_rank(n: int, alpha: float) -> int:
    """Return the 1-based order statistic used by split conformal calibration.

    Args:
        n (int): Number of calibration scores.
        alpha (float): Significance level in (0, 1).

    Returns:
        int: ``ceil((n + 1)(1 - alpha))``; may exceed ``n``.

    Examples:
        >>> conformal_rank(10, 0.1)
        10
        >>> conformal_rank(3, 0.1)
        4
    """
    return max(1, math.ceil(_mass_target(float(n + 1), validate_alpha(alpha))))


def conformal_quantile(scores: ArrayLike, alpha: float) -> float:
    """Compute the split conformal calibration threshold.

    Args:
        scores (ArrayLike): Finite calibration scores, at least one.
        alpha (float): Significance level in (0, 1).

    Returns:
        float: The ``ceil((n + 1)(1 - alpha))``-th smallest score, or ``inf``
            when that rank exceeds ``n``.

    Raises:
        InputError: If the scores are empty or non-finite, or alpha is invalid.

    Examples:
        >>> conformal_quantile(range(1, 11), 0.1)
        10.0
        >>> conformal_quantile([5.0], 0.5)
        5.0
        >>> conformal_quantile([1.0, 2.0, 3.0], 0.1)
        inf
    """
    values = as_score_vector(scores)
    rank = conformal_rank(values.size, alpha)
    if rank > values.size:
        return math.inf
    return float(np.sort(values, kind="stable")[rank - 1])


def weighted_conformal_quantile(
    scores: ArrayLike,
    weights: ArrayLike,
    test_weight: float,
    alpha: float,
) -> float:
    """Compute the weighted conformal threshold for a single test point.

    Calibration score ``i`` carries mass ``w_i / (sum(w) + w_test)``; the test
    point places its mass ``w_test / (sum(w) + w_test)`` at ``+inf``.

    Args:
        scores (ArrayLike): Finite calibration scores.
        weights (ArrayLike): Nonnegative weights, one per score.
        test_weight (float): Nonnegative weight of the test point.
        alpha (float): Significance level in (0, 1).

    Returns:
        float: The smallest score whose cumulative mass reaches ``1 - alpha``,
            or ``inf`` when no finite score does.

    Raises:
        InputError: On length mismatch, negative weights or zero total mass.

    Examples:
        >>> weighted_conformal_quantile([1, 2, 3], [1, 1, 1], 0.0, 0.34)
        2.0
        >>> weighted_conformal_quantile([1.0], [0.0], 1.0, 0.5)
        inf
    """
    return float(weighted_conformal_quantiles(scores, weights, [test_weight], alpha)[0])


def weighted_conformal_quantiles(
    scores: ArrayLike,
    weights: ArrayLike,
    test_weights: ArrayLike,
    alpha: float,
) -> NDArray[np.float64]:
    """Vectorized :func:`weighted_conformal_quantile` over many test weights.

    The calibration scores are sorted once and shared by every test point.

    Args:
        scores (ArrayLike): Finite calibration scores.
        weights (ArrayLike): Nonnegative weights, one per score.
        test_weights (ArrayLike): Nonnegative weights of the test points.
        alpha (float): Significance level in (0, 1).

    Returns:
        NDArray[np.float64]: One threshold per test weight, possibly ``inf``.

    Raises:
        InputError: On length mismatch, negative weights or zero total mass.
    """
    values = as_score_vector(scores)
    alpha = validate_alpha(alpha)
    masses = np.asarray(weights, dtype=np.float64).ravel()
    if masses.size != values.size:
        msg = f"got {masses.size} weights for {values.size} scores"
        raise InputError(msg)
    test_masses = np.asarray(test_weights, dtype=np.float64).ravel()
    if (
        np.any(masses < 0)
        or np.any(test_masses < 0)
        or not np.all(np.isfinite(masses))
        or not np.all(np.isfinite(test_masses))
    ):
        msg = "weights must be finite and nonnegative"
        raise InputError(msg)
    calibration_mass = float(masses.sum())
    if calibration_mass <= 0 and np.any(test_masses <= 0):
        msg = "weights carry zero total mass"
        raise InputError(msg)
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    cumulative = np.cumsum(masses[order])
    totals = calibration_mass + test_masses
    positions = np.searchsorted(cumulative, _mass_target(totals, alpha), side="left")
    found = positions < values.size
    thresholds = np.full(test_masses.size, math.inf)
    thresholds[found] = ordered[positions[found]]
    return thresholds
