from collections import defaultdict
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from conformalkit.classification.predictors import (
    PredictorKindEnum,
    calibrate_from_scores,
    predict_mask_from_scores,
    softmax_with_temperature,
)
from conformalkit.classification.scores import (
    CALIBRATION_STREAM,
    PREDICTION_STREAM,
    ScoreKindEnum,
    score_batch,
    score_matrix,
)
from conformalkit.cli.io import read_labels, read_matrix, write_json, write_rows
from conformalkit.core.errors import InputError
from conformalkit.core.models.settings import ConformalKitSettings
from conformalkit.evaluation.metrics import average_size, cov_gap, coverage_rate
from conformalkit.regression.predictors import (
    AciState,
    QuantileBand,
    aci_run,
    cqr_calibrate,
    cqr_predict,
)
from conformalkit.synth.generators import (
    ArmaConfig,
    SyntheticClassificationConfig,
    generate_classification,
    generate_time_series,
)
from conformalkit.training.losses import quantile_loss
from conformalkit.training.mlp import Mlp, MlpSpec
from conformalkit.training.trainer import TrainConfig, train
from conformalkit.utils.log import log_operation, logger

CLASSIFICATION_FIELDS = (
    "score",
    "predictor",
    "alpha",
    "trial",
    "coverage",
    "size",
    "covgap",
)
CLASSIFICATION_SUMMARY_FIELDS = (
    "score",
    "predictor",
    "alpha",
    "trials",
    "coverage",
    "size",
    "covgap",
)
TIMESERIES_FIELDS = ("trial", "t", "method", "lo", "hi", "y", "covered")
TIMESERIES_SUMMARY_FIELDS = ("trial", "method", "coverage", "width")

Row = dict[str, Any]


def trial_seed(seed: int, trial: int) -> int:
    """Derive an independent, reproducible seed for one trial.

    Examples:
        >>> trial_seed(0, 0) == trial_seed(0, 0) != trial_seed(0, 1)
        True
    """
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def run_trials(
    run_trial: Callable[[int], list[Row]], trials: int, workers: int
) -> list[list[Row]]:
    """Run trials, concurrently when ``workers > 1``, returned in trial order."""
    if workers <= 1:
        return [run_trial(trial) for trial in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run_trial, range(trials)))


@dataclass(frozen=True)
class _LabeledData:
    """Calibration and test logits with labels for one trial."""

    cal_logits: NDArray[np.float64]
    cal_labels: NDArray[np.int64]
    test_logits: NDArray[np.float64]
    test_labels: NDArray[np.int64]


def _classification_data(
    settings: ConformalKitSettings,
    seed: int,
    user_data: tuple[NDArray[np.float64], NDArray[np.int64]] | None,
) -> _LabeledData:
    bench = settings.bench_classification
    if user_data is not None:
        logits, labels = user_data
        order = np.random.default_rng(seed).permutation(labels.size)
        cut = max(1, min(labels.size - 1, round(bench.cal_fraction * labels.size)))
        cal, test = order[:cut], order[cut:]
        return _LabeledData(logits[cal], labels[cal], logits[test], labels[test])
    logits, labels = generate_classification(
        SyntheticClassificationConfig(
            num_classes=bench.num_classes,
            n=bench.n_cal + bench.n_test,
            class_separation=bench.class_separation,
            seed=seed,
            class_priors=bench.priors(),
            separation_jitter=bench.separation_jitter,
        )
    )
    cut = bench.n_cal
    return _LabeledData(logits[:cut], labels[:cut], logits[cut:], labels[cut:])


def _load_user_classification(
    settings: ConformalKitSettings,
) -> tuple[NDArray[np.float64], NDArray[np.int64]] | None:
    paths = settings.bench_classification.user_inputs()
    if paths is None:
        return None
    logits, labels = read_matrix(paths[0]), read_labels(paths[1])
    if logits.shape[0] != labels.size:
        msg = f"got {labels.size} labels for {logits.shape[0]} logit rows"
        raise InputError(msg)
    minimum_rows = 2
    if labels.size < minimum_rows:
        msg = "the benchmark needs at least two labeled rows"
        raise InputError(msg)
    return logits, labels


def classification_trial(
    settings: ConformalKitSettings,
    trial: int,
    user_data: tuple[NDArray[np.float64], NDArray[np.int64]] | None = None,
) -> list[Row]:
    """Sweep scores x predictors x alphas on one trial's data.

    Scores are computed once per score kind; every predictor and alpha reuses
    them.
    """
    bench = settings.bench_classification
    seed = trial_seed(settings.run.seed, trial)
    data = _classification_data(settings, seed, user_data)
    num_classes = data.cal_logits.shape[1]
    temperature = settings.predictor.temperature
    cal_probs = softmax_with_temperature(data.cal_logits, temperature)
    test_probs = softmax_with_temperature(data.test_logits, temperature)
    cluster = settings.cluster_config().model_copy(update={"kmeans_seed": seed})
    rows: list[Row] = []
    for kind in bench.scores:
        score = settings.score_config(ScoreKindEnum(kind)).model_copy(
            update={"rng_seed": seed}
        )
        cal_scores = score_batch(
            score, cal_probs, data.cal_labels, stream=CALIBRATION_STREAM
        )
        test_scores = score_matrix(score, test_probs, stream=PREDICTION_STREAM)
        for predictor in bench.predictors:
            for alpha in bench.alphas:
                threshold = calibrate_from_scores(
                    PredictorKindEnum(predictor),
                    cal_scores,
                    data.cal_labels,
                    alpha,
                    num_classes,
                    cluster=cluster,
                )
                mask = predict_mask_from_scores(threshold, test_scores, alpha)
                rows.append(
                    {
                        "score": str(kind),
                        "predictor": str(predictor),
                        "alpha": float(alpha),
                        "trial": trial,
                        "coverage": coverage_rate(mask, data.test_labels),
                        "size": average_size(mask),
                        "covgap": cov_gap(mask, data.test_labels, alpha, num_classes),
                    }
                )
    return rows


def _mean_rows(
    rows: Iterable[Row], keys: tuple[str, ...], metrics: tuple[str, ...]
) -> list[Row]:
    groups: dict[tuple[Any, ...], list[Row]] = defaultdict(list)
    for row in rows:
        groups[tuple(row[key] for key in keys)].append(row)
    return [
        {
            **dict(zip(keys, group_key, strict=True)),
            "trials": len(members),
            **{m: float(np.mean([row[m] for row in members])) for m in metrics},
        }
        for group_key, members in groups.items()
    ]


@log_operation
def bench_classification(settings: ConformalKitSettings, out_dir: Path) -> list[Path]:
    """Run the classification sweep and write per-trial and summary CSVs.

    Returns:
        list[Path]: The written files.
    """
    user_data = _load_user_classification(settings)
    per_trial = run_trials(
        lambda trial: classification_trial(settings, trial, user_data),
        settings.run.trials,
        settings.run.workers,
    )
    rows = [row for trial_rows in per_trial for row in trial_rows]
    summary = _mean_rows(
        rows, ("score", "predictor", "alpha"), ("coverage", "size", "covgap")
    )
    trials_path = out_dir / "classification_trials.csv"
    summary_path = out_dir / "classification_summary.csv"
    write_rows(trials_path, CLASSIFICATION_FIELDS, rows)
    write_rows(summary_path, CLASSIFICATION_SUMMARY_FIELDS, summary)
    logger.info("wrote %d rows to %s", len(rows), trials_path)
    return [trials_path, summary_path]


class MethodSummary(BaseModel):
    """Mean coverage and width of one method across trials."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    coverage: float
    width: float


class TimeseriesSummary(BaseModel):
    """JSON summary of the time-series benchmark."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    alpha: float
    gamma: float
    trials: int
    methods: dict[str, MethodSummary]


def _rescale_outputs(network: Mlp, center: float, scale: float) -> Mlp:
    """Fold a target standardization into the output layer."""
    rescaled = network.copy()
    rescaled.parameters[-2] *= scale
    rescaled.parameters[-1] *= scale
    rescaled.parameters[-1] += center
    return rescaled


def timeseries_trial(
    settings: ConformalKitSettings, trial: int, model_dir: Path | None = None
) -> list[Row]:
    """Train, calibrate and run CQR and ACI over one generated series.

    The quantile network is fit on the first ``n_train`` points, CQR is
    calibrated on the next ``n_cal`` and both methods run sequentially over
    the final ``n_test`` points.

    Args:
        settings (ConformalKitSettings): The benchmark settings.
        trial (int): Trial index, selects the seed.
        model_dir (Path, optional): When set, the trained network is saved
            there as ``trial_<trial>.npz``, predicting targets on their
            original scale. Defaults to None.

    Returns:
        list[Row]: One row per (method, t).
    """
    bench = settings.bench_timeseries
    seed = trial_seed(settings.run.seed, trial)
    series = generate_time_series(
        ArmaConfig(
            phi=bench.phi,
            theta=bench.theta,
            innovation_std=bench.innovation_std,
            seed=seed,
            t_total=bench.n_train + bench.n_cal + bench.n_test,
            burn_in=bench.burn_in,
        )
    )
    features, targets = series.features, series.targets
    train_end, cal_end = bench.n_train, bench.n_train + bench.n_cal
    center, scale = 0.0, 1.0
    if bench.standardize:
        center = float(targets[:train_end].mean())
        scale = float(targets[:train_end].std()) or 1.0

    network = Mlp(
        MlpSpec(
            input_dim=features.shape[1],
            layer_widths=bench.layer_widths,
            output_dim=2,
            seed=seed,
        )
    )
    quantiles = (bench.alpha / 2, 1 - bench.alpha / 2)
    result = train(
        network,
        features[:train_end],
        (targets[:train_end] - center) / scale,
        lambda outputs, batch: quantile_loss(outputs, batch, quantiles),
        TrainConfig(
            lr=bench.lr, epochs=bench.epochs, batch_size=bench.batch_size, seed=seed
        ),
    )

    model = _rescale_outputs(result.model, center, scale)
    if model_dir is not None:
        model.save(model_dir / f"trial_{trial}.npz")

    def band(start: int, stop: int | None) -> QuantileBand:
        outputs = model(features[start:stop])
        return QuantileBand(lower=outputs[:, :1], upper=outputs[:, 1:])

    threshold = cqr_calibrate(
        band(train_end, cal_end), targets[train_end:cal_end], bench.alpha
    )
    test_band = band(cal_end, None)
    test_targets = targets[cal_end:]
    cqr_intervals = cqr_predict(threshold, test_band)
    aci = aci_run(
        AciState.start(bench.alpha, bench.gamma),
        threshold.score_matrix(),
        test_band,
        test_targets,
    )
    rows: list[Row] = []
    for method, intervals in (("cqr", cqr_intervals), ("aci", aci.intervals)):
        for t, (interval, y) in enumerate(zip(intervals, test_targets, strict=True)):
            rows.append(
                {
                    "trial": trial,
                    "t": t,
                    "method": method,
                    "lo": interval.lower[0],
                    "hi": interval.upper[0],
                    "y": float(y),
                    "covered": int(interval.contains(y)),
                }
            )
    return rows


@log_operation
def bench_timeseries(settings: ConformalKitSettings, out_dir: Path) -> list[Path]:
    """Run the time-series benchmark and write per-t, per-trial and JSON outputs.

    The trained quantile network of every trial goes to ``models/``.

    Returns:
        list[Path]: The written files.
    """
    bench = settings.bench_timeseries
    model_dir = out_dir / "models"
    model_dir.mkdir(exist_ok=True)
    per_trial = run_trials(
        lambda trial: timeseries_trial(settings, trial, model_dir),
        settings.run.trials,
        settings.run.workers,
    )
    rows = [row for trial_rows in per_trial for row in trial_rows]
    for row in rows:
        row["width"] = row["hi"] - row["lo"]
    trial_summary = _mean_rows(rows, ("trial", "method"), ("covered", "width"))
    for row in trial_summary:
        row["coverage"] = row.pop("covered")
    methods = {
        method: MethodSummary(
            coverage=float(np.mean([r["coverage"] for r in members])),
            width=float(np.mean([r["width"] for r in members])),
        )
        for method in ("cqr", "aci")
        if (members := [r for r in trial_summary if r["method"] == method])
    }
    series_path = out_dir / "timeseries_intervals.csv"
    summary_path = out_dir / "timeseries_summary.csv"
    json_path = out_dir / "timeseries_summary.json"
    write_rows(series_path, TIMESERIES_FIELDS, rows)
    write_rows(summary_path, TIMESERIES_SUMMARY_FIELDS, trial_summary)
    write_json(
        json_path,
        TimeseriesSummary(
            alpha=bench.alpha,
            gamma=bench.gamma,
            trials=settings.run.trials,
            methods=methods,
        ),
    )
    for method, summary in methods.items():
        logger.info(
            "%s coverage %.3f width %.3f", method, summary.coverage, summary.width
        )
    models = [model_dir / f"trial_{trial}.npz" for trial in range(settings.run.trials)]
    return [series_path, summary_path, json_path, *models]
