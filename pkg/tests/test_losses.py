# type: ignore  # noqa: PGH003

from functools import partial

import numpy as np
import pytest

from conformalkit.classification.predictors import (
    PredictorConfig,
    calculate_threshold,
    predict_with_logits,
)
from conformalkit.classification.scores import ScoreConfig, ScoreKindEnum
from conformalkit.core.errors import InputError
from conformalkit.regression.predictors import BinGrid
from conformalkit.training.losses import (
    contr_loss,
    cross_entropy_loss,
    quantile_loss,
    r2ccp_loss,
    weighted_sum,
)


def test_pinball_example():
    evaluation = quantile_loss([[0.0, 2.0]], [1.0], (0.05, 0.95))
    assert evaluation.value == pytest.approx(0.05)


def test_exact_predictions_have_zero_loss_and_gradient():
    evaluation = quantile_loss([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0])
    assert evaluation.value == 0.0
    np.testing.assert_array_equal(evaluation.grad, np.zeros((2, 2)))


@pytest.mark.parametrize("levels", [(0.9, 0.1), (0.0, 0.5), (0.5, 1.0), (0.5, 0.5)])
def test_invalid_quantile_levels(levels):
    with pytest.raises(InputError):
        quantile_loss([[0.0, 1.0]], [0.5], levels)


def test_quantile_loss_gradient(rng, central_difference, relative_error):
    targets = rng.normal(size=100)
    predictions = targets[:, np.newaxis] + rng.normal(size=(100, 2))
    analytic = quantile_loss(predictions, targets).grad
    numeric = central_difference(
        lambda p: quantile_loss(p, targets).value, predictions
    )
    assert relative_error(analytic, numeric) <= 1e-4


def test_r2ccp_one_hot_on_nearest_bin():
    grid = BinGrid.uniform(0.0, 5.0, 5)
    y = 1.3
    losses = []
    for k in range(5):
        logits = np.full((1, 5), -60.0)
        logits[0, k] = 60.0
        losses.append(r2ccp_loss(logits, [y], grid, p_exponent=2.0, tau=0.0).value)
    nearest = int(np.argmin(np.abs(grid.array() - y)))
    assert int(np.argmin(losses)) == nearest
    assert losses[nearest] == pytest.approx((y - grid.array()[nearest]) ** 2)


def test_r2ccp_uniform_mass():
    grid = BinGrid.uniform(0.0, 4.0, 4)
    evaluation = r2ccp_loss(np.zeros((1, 4)), [2.0], grid, p_exponent=1.0, tau=0.0)
    assert evaluation.value == pytest.approx(np.mean(np.abs(2.0 - grid.array())))


def test_r2ccp_loss_gradient(rng, central_difference, relative_error):
    grid = BinGrid.uniform(-3.0, 3.0, 12)
    logits = rng.normal(size=(100, 12))
    targets = rng.uniform(-3.0, 3.0, size=100)
    analytic = r2ccp_loss(logits, targets, grid, tau=0.2).grad
    numeric = central_difference(
        lambda z: r2ccp_loss(z, targets, grid, tau=0.2).value, logits
    )
    assert relative_error(analytic, numeric) <= 1e-4


def test_r2ccp_rejects_out_of_range_targets():
    with pytest.raises(InputError):
        r2ccp_loss(np.zeros((1, 3)), [10.0], BinGrid.uniform(0.0, 1.0, 3))


def test_contr_symmetric_logits_give_half_size():
    logits = np.zeros((8, 4))
    evaluation = contr_loss(logits, [0, 1, 2, 3, 0, 1, 2, 3], ScoreConfig(kind="thr"))
    assert evaluation.value == pytest.approx(2.0)


def test_contr_needs_four_items():
    with pytest.raises(InputError):
        contr_loss(np.zeros((3, 2)), [0, 1, 0], ScoreConfig())


def test_contr_cold_sigmoid_approaches_hard_size(rng):
    logits = rng.normal(scale=2.0, size=(200, 5))
    labels = rng.integers(5, size=200)
    score = ScoreConfig(kind="thr", randomized=False)
    soft = contr_loss(logits, labels, score, alpha=0.1, sigmoid_temp=1e-4).value
    calibrated = calculate_threshold(
        PredictorConfig(score=score), logits[:100], labels[:100], 0.1
    )
    hard = np.mean([s.size() for s in predict_with_logits(calibrated, logits[100:])])
    assert abs(soft - hard) <= 0.05


@pytest.mark.parametrize(
    "kind", [ScoreKindEnum.THR, ScoreKindEnum.APS, ScoreKindEnum.MARGIN]
)
def test_contr_loss_gradient(kind, rng, central_difference, relative_error):
    logits = rng.normal(size=(40, 4))
    labels = rng.integers(4, size=40)
    score = ScoreConfig(kind=kind)
    loss = partial(contr_loss, labels=labels, score=score, sigmoid_temp=0.5)
    analytic = loss(logits).grad
    numeric = central_difference(lambda z: loss(z).value, logits)
    assert relative_error(analytic, numeric) <= 1e-4


def test_cross_entropy_gradient(rng, central_difference, relative_error):
    logits = rng.normal(size=(20, 3))
    labels = rng.integers(3, size=20)
    analytic = cross_entropy_loss(logits, labels).grad
    numeric = central_difference(
        lambda z: cross_entropy_loss(z, labels).value, logits
    )
    assert relative_error(analytic, numeric) <= 1e-4


def test_weighted_sum_combines_values_and_gradients(rng):
    logits = rng.normal(size=(6, 3))
    labels = rng.integers(3, size=6)
    combined = weighted_sum((2.0, cross_entropy_loss), (0.5, cross_entropy_loss))(
        logits, labels
    )
    single = cross_entropy_loss(logits, labels)
    assert combined.value == pytest.approx(2.5 * single.value)
    np.testing.assert_allclose(combined.grad, 2.5 * single.grad)


def test_weighted_sum_needs_a_term():
    with pytest.raises(InputError):
        weighted_sum()


@pytest.mark.parametrize("kind", list(ScoreKindEnum))
@pytest.mark.parametrize("scale", [0.1, 3.0, 30.0])
def test_contr_value_stays_within_the_label_count(kind, scale, rng):
    logits = rng.normal(scale=scale, size=(24, 5))
    labels = rng.integers(5, size=24)
    value = contr_loss(logits, labels, ScoreConfig(kind=kind), sigmoid_temp=0.05).value
    assert 0.0 <= value <= 5.0
