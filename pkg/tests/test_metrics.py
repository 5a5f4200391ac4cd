# type: ignore  # noqa: PGH003

import math

import numpy as np
import pytest

from conformalkit.core.errors import InputError
from conformalkit.core.models.types import PredictionInterval, PredictionSet
from conformalkit.evaluation.metrics import (
    average_size,
    average_width,
    class_coverage,
    cov_gap,
    coverage_flags,
    coverage_rate,
    evaluate_classification,
    evaluate_regression,
)


def sets_of(*members):
    return [PredictionSet(members=frozenset(m)) for m in members]


def test_full_sets_always_cover():
    sets = sets_of({0, 1, 2}, {0, 1, 2}, {0, 1, 2})
    assert coverage_rate(sets, [0, 1, 2]) == 1.0
    assert average_size(sets) == 3.0


def test_empty_sets_never_cover():
    sets = sets_of(set(), set())
    assert coverage_rate(sets, [0, 1]) == 0.0
    assert average_size(sets) == 0.0


def test_partial_coverage():
    sets = sets_of({0}, {1}, {2}, {0})
    assert coverage_rate(sets, [0, 1, 2, 3]) == 0.75


def test_singletons_have_unit_size():
    assert average_size(sets_of({1}, {4}, {0})) == 1.0


def test_mask_and_sets_agree():
    mask = np.array([[True, False, True], [False, False, True]])
    sets = sets_of({0, 2}, {2})
    np.testing.assert_array_equal(
        coverage_flags(mask, [2, 0]), coverage_flags(sets, [2, 0])
    )
    assert average_size(mask) == average_size(sets) == 1.5


def test_interval_widths():
    intervals = [
        PredictionInterval(lower=[0.0], upper=[0.0]),
        PredictionInterval(lower=[0.0], upper=[4.0]),
    ]
    assert average_width(intervals) == 2.0
    assert coverage_rate(intervals, [0.0, 5.0]) == 0.5


def test_infinite_width_propagates():
    intervals = [
        PredictionInterval(lower=[0.0], upper=[1.0]),
        PredictionInterval(lower=[-math.inf], upper=[math.inf]),
    ]
    assert math.isinf(average_width(intervals))


def test_multi_dimensional_targets():
    interval = PredictionInterval(lower=[0.0, 0.0], upper=[1.0, 2.0])
    assert coverage_rate([interval, interval], [[0.5, 1.5], [0.5, 2.5]]) == 0.5
    assert average_width([interval]) == 3.0


def test_average_width_rejects_a_mask():
    with pytest.raises(InputError):
        average_width(np.ones((2, 3), dtype=bool))


def test_empty_and_mismatched_inputs_are_rejected():
    with pytest.raises(InputError):
        coverage_rate([], [])
    with pytest.raises(InputError):
        coverage_rate(sets_of({0}), [0, 1])


def test_cov_gap_example():
    # class 0 always covered, class 1 covered four times out of five
    sets = sets_of(*[{0}] * 5, *[{1}] * 4, {0})
    labels = [0] * 5 + [1] * 5
    np.testing.assert_allclose(class_coverage(sets, labels, 2), [1.0, 0.8])
    assert cov_gap(sets, labels, 0.1, 2) == pytest.approx(10.0)


def test_full_universe_cov_gap_is_alpha():
    mask = np.ones((6, 3), dtype=bool)
    assert cov_gap(mask, [0, 1, 2, 0, 1, 2], 0.1, 3) == pytest.approx(10.0)


def test_absent_classes_are_skipped():
    mask = np.ones((4, 5), dtype=bool)
    per_class = class_coverage(mask, [0, 0, 1, 1], 5)
    assert np.isnan(per_class[2:]).all()
    assert cov_gap(mask, [0, 0, 1, 1], 0.2, 5) == pytest.approx(20.0)


def test_cov_gap_without_valid_labels_fails():
    with pytest.raises(InputError):
        cov_gap(np.ones((2, 3), dtype=bool), [0, 5], 0.1, 3)


def test_reports():
    sets = sets_of({0}, {0, 1})
    report = evaluate_classification(sets, [0, 0], 0.1, 2)
    assert report.coverage_rate == 1.0
    assert report.average_size == 1.5
    assert report.average_width is None
    assert report.n_test == 2

    intervals = [PredictionInterval(lower=[-math.inf], upper=[math.inf])]
    regression = evaluate_regression(intervals, [3.0])
    assert math.isinf(regression.average_width)
    assert '"Infinity"' in regression.model_dump_json()
