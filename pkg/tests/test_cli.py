# type: ignore  # noqa: PGH003

import json
import math

import numpy as np
import pytest

from conformalkit.cli.bench import trial_seed
from conformalkit.cli.io import (
    read_intervals,
    read_matrix,
    read_prediction_sets,
    write_intervals,
    write_labels,
    write_matrix,
    write_prediction_sets,
)
from conformalkit.cli.main import build_parser, flag_overrides, main
from conformalkit.core.models.types import PredictionInterval, PredictionSet
from conformalkit.core.settings import load_settings
from conformalkit.synth.generators import ArmaConfig, generate_time_series
from conformalkit.training.mlp import Mlp
from conformalkit.utils.xdg.config import UserConfig


@pytest.fixture
def nine_rows(tmp_path):
    """Nine rows whose threshold score is 0.1 for the true class 0."""
    logits = tmp_path / "logits.csv"
    labels = tmp_path / "labels.csv"
    write_matrix(logits, np.log(np.tile([0.9, 0.05, 0.05], (9, 1))))
    write_labels(labels, [0] * 9)
    return logits, labels


def run(*argv):
    return main([str(arg) for arg in argv])


def test_calibrate_predict_eval(nine_rows, tmp_path, capsys):
    logits, labels = nine_rows
    out = tmp_path / "out"
    common = ("--alpha", 0.1, "--out", out)
    assert run("calibrate", "--logits", logits, "--labels", labels, *common) == 0
    artifact = json.loads((out / "threshold.json").read_text())
    threshold = artifact["classification"]["threshold"]["values"][0]
    assert threshold == pytest.approx(0.1)
    assert artifact["seed"] == 0

    artifact_path = out / "threshold.json"
    assert run("predict", "--logits", logits, "--artifact", artifact_path, *common) == 0
    sets = read_prediction_sets(out / "predictions.csv")
    assert [s.sorted_members() for s in sets] == [[0]] * 9

    predictions = out / "predictions.csv"
    assert (
        run(
            "eval",
            "--predictions",
            predictions,
            "--labels",
            labels,
            "--artifact",
            artifact_path,
            *common,
        )
        == 0
    )
    report = json.loads((out / "report.json").read_text())
    assert report["coverage_rate"] == 1.0
    assert report["average_size"] == 1.0
    assert (out / "report.csv").read_text().startswith("coverage_rate,")
    assert str(out / "report.json") in capsys.readouterr().out


def test_missing_input_file_exits_with_input_error(nine_rows, tmp_path, capsys):
    logits, _ = nine_rows
    missing = tmp_path / "missing.csv"
    code = run(
        "calibrate", "--logits", logits, "--labels", missing, "--out", tmp_path / "o"
    )
    assert code == 3
    assert str(missing) in capsys.readouterr().err


def test_missing_flag_is_an_input_error(nine_rows, tmp_path, capsys):
    logits, _ = nine_rows
    assert run("calibrate", "--logits", logits, "--out", tmp_path / "o") == 3
    assert "--labels" in capsys.readouterr().err


def test_malformed_csv_exits_with_parse_error(nine_rows, tmp_path, capsys):
    _, labels = nine_rows
    broken = tmp_path / "broken.csv"
    broken.write_text("0.1,0.2,0.7\n0.3,oops,0.2\n")
    code = run(
        "calibrate", "--logits", broken, "--labels", labels, "--out", tmp_path / "o"
    )
    assert code == 4
    assert f"{broken}:2" in capsys.readouterr().err


def test_invalid_alpha_exits_with_configuration_error(nine_rows, tmp_path):
    logits, labels = nine_rows
    code = run(
        "calibrate",
        "--logits",
        logits,
        "--labels",
        labels,
        "--alpha",
        1.5,
        "--out",
        tmp_path / "o",
    )
    assert code == 7


def test_num_classes_mismatch(nine_rows, tmp_path):
    logits, labels = nine_rows
    code = run(
        "calibrate",
        "--logits",
        logits,
        "--labels",
        labels,
        "--num-classes",
        4,
        "--out",
        tmp_path / "o",
    )
    assert code == 3


def test_predict_rejects_another_score(nine_rows, tmp_path, capsys):
    logits, labels = nine_rows
    out = tmp_path / "out"
    run("calibrate", "--logits", logits, "--labels", labels, "--out", out)
    code = run(
        "predict",
        "--logits",
        logits,
        "--artifact",
        out / "threshold.json",
        "--score",
        "aps",
        "--out",
        out,
    )
    assert code == 3
    assert "calibrated with score thr" in capsys.readouterr().err


def test_predict_rejects_another_task(nine_rows, tmp_path):
    logits, labels = nine_rows
    out = tmp_path / "out"
    run("calibrate", "--logits", logits, "--labels", labels, "--out", out)
    code = run(
        "predict",
        "--task",
        "regression",
        "--model-outputs",
        logits,
        "--artifact",
        out / "threshold.json",
        "--out",
        out,
    )
    assert code == 3


def test_regression_round_trip(tmp_path):
    points, targets = tmp_path / "points.csv", tmp_path / "targets.csv"
    write_matrix(points, np.arange(10.0))
    write_matrix(targets, np.arange(10.0) + 1.0)
    out = tmp_path / "out"
    common = ("--task", "regression", "--method", "split", "--out", out)
    outputs = ("--model-outputs", points)
    assert run("calibrate", *outputs, "--targets", targets, *common) == 0
    artifact = out / "threshold.json"
    assert run("predict", *outputs, "--artifact", artifact, *common) == 0
    intervals = read_intervals(out / "predictions.csv")
    assert (intervals[2].lower, intervals[2].upper) == ([1.0], [3.0])
    predictions = out / "predictions.csv"
    assert run("eval", "--predictions", predictions, "--targets", targets, *common) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["coverage_rate"] == 1.0
    assert report["average_width"] == 2.0


def test_small_regression_calibration_writes_infinite_bounds(tmp_path):
    points, targets = tmp_path / "points.csv", tmp_path / "targets.csv"
    write_matrix(points, [0.0, 0.0])
    write_matrix(targets, [1.0, 2.0])
    out = tmp_path / "out"
    common = ("--task", "regression", "--out", out)
    run("calibrate", "--model-outputs", points, "--targets", targets, *common)
    artifact = out / "threshold.json"
    assert '"Infinity"' in artifact.read_text()
    run("predict", "--model-outputs", points, "--artifact", artifact, *common)
    interval = read_intervals(out / "predictions.csv")[0]
    assert math.isinf(interval.width())


def test_gen_data_classification(tmp_path):
    out = tmp_path / "data"
    assert run("gen-data", "--num-classes", 3, "--seed", 2, "--out", out) == 0
    cal = np.loadtxt(out / "cal_logits.csv", delimiter=",")
    assert cal.shape == (2000, 3)
    assert (out / "test_labels.csv").is_file()


def test_gen_data_timeseries(tmp_path):
    out = tmp_path / "data"
    assert run("gen-data", "--kind", "timeseries", "--out", out) == 0
    features = np.loadtxt(out / "features.csv", delimiter=",")
    assert features.shape == (500, 6)


@pytest.fixture
def small_bench_config(tmp_path):
    config = tmp_path / "bench.toml"
    config.write_text(
        "[run]\ntrials = 2\n"
        "[bench_classification]\n"
        "alphas = [0.1, 0.3]\n"
        'scores = ["thr", "aps"]\n'
        "num_classes = 4\nn_cal = 300\nn_test = 200\n"
        "[predictor.cluster]\nmin_class_count = 10\n"
    )
    return config


def test_bench_classification_is_reproducible(small_bench_config, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    config = ("--config", small_bench_config)
    assert run("bench-classification", *config, "--out", first) == 0
    assert run("bench-classification", *config, "--workers", 2, "--out", second) == 0
    for name in ("classification_trials.csv", "classification_summary.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    lines = (first / "classification_trials.csv").read_text().splitlines()
    assert lines[0] == "score,predictor,alpha,trial,coverage,size,covgap"
    assert len(lines) == 1 + 2 * 3 * 2 * 2


def test_bench_classification_flags_narrow_the_sweep(small_bench_config, tmp_path):
    out = tmp_path / "out"
    code = run(
        "bench-classification",
        "--config",
        small_bench_config,
        "--score",
        "raps",
        "--predictor",
        "class_wise",
        "--alpha",
        0.2,
        "--out",
        out,
    )
    assert code == 0
    summary = (out / "classification_summary.csv").read_text().splitlines()
    assert summary[1].startswith("raps,class_wise,0.2,2,")


@pytest.fixture
def small_timeseries_config(tmp_path):
    config = tmp_path / "ts.toml"
    config.write_text(
        "[run]\ntrials = 2\n"
        "[bench_timeseries]\n"
        "n_train = 40\nn_cal = 30\nn_test = 20\nepochs = 2\nlayer_widths = [8]\n"
    )
    return config


def test_bench_timeseries_is_reproducible(small_timeseries_config, tmp_path):
    config = small_timeseries_config
    out = tmp_path / "out"
    code = run("bench-timeseries", "--config", config, "--gamma", 0.05, "--out", out)
    assert code == 0
    summary = json.loads((out / "timeseries_summary.json").read_text())
    assert summary["gamma"] == 0.05
    assert set(summary["methods"]) == {"cqr", "aci"}
    lines = (out / "timeseries_intervals.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 20
    again = tmp_path / "again"
    code = run("bench-timeseries", "--config", config, "--gamma", 0.05, "--out", again)
    assert code == 0
    for name in ("timeseries_intervals.csv", "timeseries_summary.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes(), name


def test_bench_timeseries_saves_the_quantile_networks(
    small_timeseries_config, tmp_path
):
    out = tmp_path / "out"
    config = ("--config", small_timeseries_config)
    assert run("bench-timeseries", *config, "--out", out) == 0
    assert sorted(p.name for p in (out / "models").iterdir()) == [
        "trial_0.npz",
        "trial_1.npz",
    ]
    model = Mlp.load(out / "models" / "trial_0.npz")
    assert (model.spec.input_dim, model.spec.output_dim) == (6, 2)

    series = generate_time_series(ArmaConfig(seed=trial_seed(0, 0), t_total=90))
    band = model(series.features[70:])
    rows = [
        line.split(",")
        for line in (out / "timeseries_intervals.csv").read_text().splitlines()[1:]
    ]
    cqr = np.array([[float(r[3]), float(r[4])] for r in rows[:20]])
    assert all(r[0] == "0" and r[2] == "cqr" for r in rows[:20])
    np.testing.assert_allclose(cqr.mean(axis=1), band.mean(axis=1), atol=1e-9)


def test_flag_overrides_route_benchmark_flags():
    args = build_parser().parse_args(
        ["bench-timeseries", "--alpha", "0.2", "--seed", "3", "--trials", "4"]
    )
    assert flag_overrides(args) == {
        "bench_timeseries": {"alpha": 0.2},
        "run": {"seed": 3, "trials": 4},
    }


def test_output_defaults_to_the_user_data_dir(nine_rows, tmp_path):
    logits, labels = nine_rows
    assert run("calibrate", "--logits", logits, "--labels", labels) == 0
    expected = tmp_path / "xdg-data" / "conformalkit" / "runs" / "calibrate"
    assert (expected / "threshold.json").is_file()


def rewrite(path, read, write):
    copy = path.with_name(f"copy-{path.name}")
    write(copy, read(path))
    return copy.read_bytes()


def test_matrix_csv_is_stable_under_rewrite(tmp_path, rng):
    path = tmp_path / "matrix.csv"
    values = rng.normal(size=(20, 3)) * 10.0 ** rng.integers(-300, 300, size=(20, 3))
    values[0] = [np.inf, -np.inf, 0.1]
    write_matrix(path, values)
    assert rewrite(path, read_matrix, write_matrix) == path.read_bytes()
    np.testing.assert_array_equal(read_matrix(path), values)


def test_prediction_set_csv_is_stable_under_rewrite(tmp_path, rng):
    path = tmp_path / "sets.csv"
    sets = [
        PredictionSet(members=frozenset(np.flatnonzero(rng.random(6) < 0.4).tolist()))
        for _ in range(30)
    ]
    sets[3] = PredictionSet(members=frozenset())
    write_prediction_sets(path, sets)
    assert rewrite(path, read_prediction_sets, write_prediction_sets) == (
        path.read_bytes()
    )
    assert read_prediction_sets(path) == sets


def test_interval_csv_is_stable_under_rewrite(tmp_path, rng):
    path = tmp_path / "intervals.csv"
    centers = rng.normal(size=(10, 2))
    intervals = [PredictionInterval.from_bounds(c - 0.3, c + 0.7) for c in centers]
    intervals[1] = PredictionInterval.from_bounds([-np.inf, 0.0], [np.inf, 1.0])
    intervals[2] = PredictionInterval.model_construct(
        lower=[0.0], upper=[0.0], empty=True
    )
    write_intervals(path, intervals)
    assert rewrite(path, read_intervals, write_intervals) == path.read_bytes()
    assert read_intervals(path)[2].empty


def test_config_init_writes_a_loadable_user_file(tmp_path, capsys):
    assert run("config-init", "--alpha", 0.2, "--seed", 7) == 0
    user_file = tmp_path / "xdg-config" / "conformalkit" / "settings.toml"
    assert str(user_file) in capsys.readouterr().out
    settings = load_settings(user_config=UserConfig(user_file.parent))
    assert (settings.run.alpha, settings.run.seed) == (0.2, 7)
    assert settings.bench_timeseries.n_test == 300

    assert run("config-init", "--alpha", 0.3) == 7
    assert load_settings(user_config=UserConfig(user_file.parent)).run.alpha == 0.2
    assert run("config-init", "--alpha", 0.3, "--force") == 0
    assert load_settings(user_config=UserConfig(user_file.parent)).run.alpha == 0.3
