# type: ignore  # noqa: PGH003

import math

import numpy as np
import pytest

from conformalkit.classification.predictors import (
    ClusterConfig,
    ConformalClassifier,
    PredictorConfig,
    calculate_threshold,
    calibrate_from_scores,
    mask_to_sets,
    predict_mask_from_scores,
    predict_with_logits,
    softmax_with_temperature,
)
from conformalkit.classification.scores import ScoreConfig
from conformalkit.core.errors import ConfigurationError, InputError, StateError
from conformalkit.core.models.types import ThresholdKindEnum
from conformalkit.synth.generators import (
    SyntheticClassificationConfig,
    generate_classification,
)


@pytest.fixture
def synthetic():
    logits, labels = generate_classification(
        SyntheticClassificationConfig(num_classes=5, n=600, seed=4)
    )
    return logits[:400], labels[:400], logits[400:], labels[400:]


def thr_config(kind="split", **kwargs):
    return PredictorConfig(kind=kind, score=ScoreConfig(kind="thr"), **kwargs)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_with_temperature([[0.0, 0.0]]), [[0.5, 0.5]])
    for c in (-30.0, 0.0, 700.0):
        np.testing.assert_allclose(
            softmax_with_temperature([[c, c + math.log(3.0)]]), [[0.25, 0.75]]
        )


def test_temperature_flattens_monotonically():
    gaps = [
        float(np.ptp(softmax_with_temperature([[1.0, 2.0]], t)))
        for t in (1.0, 10.0, 100.0)
    ]
    assert gaps[0] > gaps[1] > gaps[2] > 0, "Higher temperature must flatten"


def test_softmax_rejects_non_finite_logits():
    with pytest.raises(InputError):
        softmax_with_temperature([[0.0, math.inf]])


def test_constant_scores_give_that_threshold():
    logits = np.log(np.tile([0.9, 0.05, 0.05], (9, 1)))
    for alpha in (0.1, 0.5):
        calibrated = calculate_threshold(thr_config(), logits, [0] * 9, alpha)
        assert calibrated.threshold.kind is ThresholdKindEnum.SCALAR
        assert calibrated.threshold.values[0] == pytest.approx(0.1)


def test_threshold_prediction_example():
    mask = predict_mask_from_scores(
        calibrate_from_scores("split", [0.3], [0], 0.5, 3),
        np.array([[0.2, 0.85, 0.95]]),
        0.5,
    )
    assert mask_to_sets(mask)[0].members == frozenset({0})


def test_infinite_threshold_gives_full_universe(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    calibrated = calculate_threshold(
        thr_config(), cal_logits[:3], cal_labels[:3], 0.1
    )
    assert math.isinf(calibrated.threshold.values[0])
    sets = predict_with_logits(calibrated, test_logits)
    assert all(s.members == frozenset(range(5)) for s in sets)


def test_class_wise_absent_class_is_always_included(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    keep = cal_labels != 2
    calibrated = calculate_threshold(
        thr_config("class_wise"), cal_logits[keep], cal_labels[keep], 0.1
    )
    assert math.isinf(calibrated.threshold.values[2])
    assert all(s.contains(2) for s in predict_with_logits(calibrated, test_logits))


def test_single_cluster_matches_split(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    cluster = ClusterConfig(num_clusters=1, min_class_count=1)
    split = calculate_threshold(thr_config(), cal_logits, cal_labels, 0.1)
    clustered = calculate_threshold(
        thr_config("cluster", cluster=cluster), cal_logits, cal_labels, 0.1
    )
    np.testing.assert_array_equal(
        clustered.threshold.label_thresholds(), split.threshold.label_thresholds()
    )
    assert predict_with_logits(clustered, test_logits) == predict_with_logits(
        split, test_logits
    )


def test_cluster_falls_back_for_rare_classes(synthetic):
    cal_logits, cal_labels, _, _ = synthetic
    cluster = ClusterConfig(min_class_count=10_000)
    calibrated = calculate_threshold(
        thr_config("cluster", cluster=cluster), cal_logits, cal_labels, 0.1
    )
    split = calculate_threshold(thr_config(), cal_logits, cal_labels, 0.1)
    np.testing.assert_array_equal(
        calibrated.threshold.label_thresholds(), split.threshold.label_thresholds()
    )


def test_uniform_weights_match_split(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    weighted = calculate_threshold(
        thr_config("weighted"),
        cal_logits,
        cal_labels,
        0.1,
        np.ones(len(cal_labels)),
    )
    split = calculate_threshold(thr_config(), cal_logits, cal_labels, 0.1)
    assert predict_with_logits(
        weighted, test_logits, np.ones(len(test_logits))
    ) == predict_with_logits(split, test_logits)


def test_weight_fn_supplies_weights(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    config = thr_config("weighted", weight_fn=lambda _row: 1.0)
    calibrated = calculate_threshold(config, cal_logits, cal_labels, 0.1)
    split = calculate_threshold(thr_config(), cal_logits, cal_labels, 0.1)
    assert predict_with_logits(calibrated, test_logits) == predict_with_logits(
        split, test_logits
    )


def test_weighted_without_weights_is_a_configuration_error(synthetic):
    cal_logits, cal_labels, _, _ = synthetic
    with pytest.raises(ConfigurationError):
        calculate_threshold(thr_config("weighted"), cal_logits, cal_labels, 0.1)


def test_weighted_prediction_needs_test_weights(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    calibrated = calculate_threshold(
        thr_config("weighted"), cal_logits, cal_labels, 0.1, np.ones(len(cal_labels))
    )
    with pytest.raises(InputError):
        predict_with_logits(calibrated, test_logits)


def test_empty_calibration_set_is_rejected():
    with pytest.raises(InputError):
        calculate_threshold(thr_config(), np.zeros((0, 3)), [], 0.1)


def test_uncalibrated_predictor_is_a_state_error():
    with pytest.raises(StateError):
        predict_with_logits(thr_config(), [[0.0, 1.0]])


def test_artifact_survives_json(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    calibrated = calculate_threshold(
        thr_config("class_wise"), cal_logits[:30], cal_labels[:30], 0.1
    )
    restored = type(calibrated).model_validate_json(calibrated.model_dump_json())
    assert restored.model_dump() == calibrated.model_dump()
    assert predict_with_logits(restored, test_logits) == predict_with_logits(
        calibrated, test_logits
    )


def test_classifier_identity_model_matches_logit_path(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    classifier = ConformalClassifier(thr_config(), model=lambda row: row)
    classifier.calibrate(cal_logits, cal_labels, 0.1)
    direct = calculate_threshold(thr_config(), cal_logits, cal_labels, 0.1)
    assert classifier.calibrated.model_dump() == direct.model_dump()
    assert classifier.predict(test_logits) == predict_with_logits(direct, test_logits)


def test_classifier_constant_model_shares_one_set(synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    constant = np.array([2.0, 1.0, 0.0, -1.0, -2.0])
    classifier = ConformalClassifier(thr_config(), model=lambda _row: constant)
    classifier.calibrate(cal_logits, cal_labels, 0.2)
    sets = classifier.predict(test_logits)
    assert len({s.members for s in sets}) == 1


@pytest.mark.parametrize("kind", ["split", "class_wise", "cluster"])
def test_split_coverage_on_exchangeable_data(kind):
    logits, labels = generate_classification(
        SyntheticClassificationConfig(num_classes=5, n=4000, seed=21)
    )
    config = PredictorConfig(kind=kind, score=ScoreConfig(kind="aps", rng_seed=21))
    calibrated = calculate_threshold(config, logits[:2000], labels[:2000], 0.1)
    sets = predict_with_logits(calibrated, logits[2000:])
    coverage = np.mean([s.contains(y) for s, y in zip(sets, labels[2000:])])
    assert coverage >= 0.87, f"{kind} coverage {coverage} far below 0.9"


@pytest.mark.parametrize("score_kind", ["thr", "aps", "raps", "saps", "margin"])
def test_split_sets_shrink_as_alpha_grows(score_kind, synthetic):
    cal_logits, cal_labels, test_logits, _ = synthetic
    config = PredictorConfig(score=ScoreConfig(kind=score_kind, rng_seed=6))
    masks = [
        predict_mask_with_alpha(config, cal_logits, cal_labels, test_logits, alpha)
        for alpha in (0.05, 0.1, 0.3, 0.6, 0.9)
    ]
    for wider, narrower in zip(masks, masks[1:], strict=False):
        assert np.all(narrower <= wider), score_kind


def predict_mask_with_alpha(config, cal_logits, cal_labels, test_logits, alpha):
    calibrated = calculate_threshold(config, cal_logits, cal_labels, alpha)
    return np.array(
        [
            [s.contains(k) for k in range(5)]
            for s in predict_with_logits(calibrated, test_logits)
        ]
    )


@pytest.mark.parametrize("temperature", [0.1, 0.5, 2.0, 50.0])
def test_temperature_keeps_the_label_order(temperature, rng):
    logits = rng.normal(scale=3.0, size=(100, 6))
    probs = softmax_with_temperature(logits, temperature)
    np.testing.assert_array_equal(
        np.argsort(-probs, axis=1, kind="stable"),
        np.argsort(-logits, axis=1, kind="stable"),
    )
