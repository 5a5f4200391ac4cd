import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from conformalkit._version import __version__
from conformalkit.classification.predictors import (
    PredictorKindEnum,
    calculate_threshold,
    predict_with_logits,
)
from conformalkit.classification.scores import ScoreKindEnum
from conformalkit.cli.bench import bench_classification, bench_timeseries
from conformalkit.cli.io import (
    TaskEnum,
    ThresholdArtifact,
    read_artifact,
    read_intervals,
    read_labels,
    read_matrix,
    read_prediction_sets,
    read_vector,
    write_intervals,
    write_json,
    write_labels,
    write_matrix,
    write_prediction_sets,
    write_rows,
)
from conformalkit.core.errors import (
    ConfigurationError,
    ConformalKitError,
    ExitCodeEnum,
    InputError,
)
from conformalkit.core.models.settings import ConformalKitSettings, GenDataKindEnum
from conformalkit.core.settings import load_settings
from conformalkit.evaluation.metrics import (
    EvaluationReport,
    evaluate_classification,
    evaluate_regression,
)
from conformalkit.regression.predictors import (
    QuantileBand,
    RegressionMethodEnum,
    cqr_calibrate,
    cqr_predict,
    split_calibrate,
    split_predict,
)
from conformalkit.synth.generators import (
    ArmaConfig,
    SyntheticClassificationConfig,
    generate_classification,
    generate_time_series,
    geometric_priors,
)
from conformalkit.utils.log import configure_logging, log_context, logger
from conformalkit.utils.xdg.config import UserConfig
from conformalkit.utils.xdg.data import UserData

REPORT_FIELDS = ("coverage_rate", "average_size", "average_width", "cov_gap", "n_test")

# flag destination -> settings path
_FLAG_SETTINGS: dict[str, tuple[str, str]] = {
    "alpha": ("run", "alpha"),
    "seed": ("run", "seed"),
    "trials": ("run", "trials"),
    "workers": ("run", "workers"),
    "out": ("run", "out"),
    "score": ("score", "kind"),
    "predictor": ("predictor", "kind"),
    "method": ("regression", "method"),
    "logits": ("inputs", "logits"),
    "labels": ("inputs", "labels"),
    "artifact": ("inputs", "artifact"),
    "predictions": ("inputs", "predictions"),
    "targets": ("inputs", "targets"),
    "weights": ("inputs", "weights"),
    "num_classes": ("inputs", "num_classes"),
}


def build_parser() -> argparse.ArgumentParser:
    """Build the command-line parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or TOML settings file")
    common.add_argument("--alpha", type=float, help="significance level in (0, 1)")
    common.add_argument("--seed", type=int, help="root of all randomness")
    common.add_argument("--out", help="output directory")

    task = argparse.ArgumentParser(add_help=False)
    task.add_argument(
        "--task",
        type=TaskEnum,
        choices=list(TaskEnum),
        default=TaskEnum.CLASSIFICATION,
    )
    task.add_argument("--score", choices=list(ScoreKindEnum))
    task.add_argument("--predictor", choices=list(PredictorKindEnum))
    task.add_argument("--method", choices=list(RegressionMethodEnum))
    task.add_argument(
        "--logits",
        "--model-outputs",
        dest="logits",
        help="logits (classification) or point / lo,hi predictions (regression)",
    )
    task.add_argument("--labels", help="true labels (classification)")
    task.add_argument("--targets", help="true targets (regression)")
    task.add_argument("--artifact", help="threshold artifact written by calibrate")
    task.add_argument("--predictions", help="prediction file written by predict")
    task.add_argument("--weights", help="per-row weights (weighted predictor)")
    task.add_argument("--num-classes", type=int, help="size of the label universe")

    bench = argparse.ArgumentParser(add_help=False)
    bench.add_argument("--trials", type=int, help="number of trials")
    bench.add_argument("--workers", type=int, help="trials run concurrently")

    parser = argparse.ArgumentParser(
        prog="conformalkit",
        description="Conformal prediction sets and intervals from model outputs.",
    )
    parser.add_argument("--version", action="version", version=__version__.public())
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "calibrate", parents=[common, task], help="write a threshold artifact"
    )
    commands.add_parser("predict", parents=[common, task], help="write prediction sets")
    commands.add_parser("eval", parents=[common, task], help="evaluate predictions")
    bench_cls = commands.add_parser(
        "bench-classification",
        parents=[common, bench],
        help="score x predictor x alpha sweep",
    )
    bench_cls.add_argument("--score", choices=list(ScoreKindEnum))
    bench_cls.add_argument("--predictor", choices=list(PredictorKindEnum))
    bench_cls.add_argument("--logits", help="optional user logits")
    bench_cls.add_argument("--labels", help="optional user labels")
    bench_ts = commands.add_parser(
        "bench-timeseries", parents=[common, bench], help="CQR vs ACI on ARMA noise"
    )
    bench_ts.add_argument("--gamma", type=float, help="ACI step size")
    gen = commands.add_parser(
        "gen-data", parents=[common], help="write a synthetic dataset"
    )
    gen.add_argument("--kind", choices=list(GenDataKindEnum))
    gen.add_argument("--num-classes", type=int, help="number of classes")
    init = commands.add_parser(
        "config-init",
        parents=[common],
        help="write the effective settings to the user settings file",
    )
    init.add_argument(
        "--force", action="store_true", help="replace an existing settings file"
    )
    return parser


def _set(
    overrides: dict[str, Any], section: str, key: str, value: object
) -> None:
    overrides.setdefault(section, {})[key] = value


def flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Translate the given flags into nested settings overrides.

    Benchmark commands route the shared flags to their own sections.
    """
    given = {
        name: value
        for name, value in vars(args).items()
        if value is not None and name not in {"command", "config", "task", "force"}
    }
    overrides: dict[str, Any] = {}
    match args.command:
        case "bench-classification":
            if "alpha" in given:
                _set(overrides, "bench_classification", "alphas", [given.pop("alpha")])
            if "score" in given:
                _set(overrides, "bench_classification", "scores", [given.pop("score")])
            if "predictor" in given:
                kind = given.pop("predictor")
                _set(overrides, "bench_classification", "predictors", [kind])
            for name in ("logits", "labels"):
                if name in given:
                    _set(overrides, "bench_classification", name, given.pop(name))
        case "bench-timeseries":
            for name in ("alpha", "gamma"):
                if name in given:
                    _set(overrides, "bench_timeseries", name, given.pop(name))
        case "gen-data":
            for name in ("kind", "num_classes"):
                if name in given:
                    _set(overrides, "gen_data", name, given.pop(name))
    for name, value in given.items():
        section, key = _FLAG_SETTINGS[name]
        _set(overrides, section, key, value)
    return overrides


def output_dir(settings: ConformalKitSettings, command: str) -> Path:
    """Create and return the output directory of a command."""
    out = (
        Path(settings.run.out).expanduser()
        if settings.run.out
        else UserData().runs_dir / command
    )
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(settings: ConformalKitSettings, name: str) -> Path:
    path = settings.inputs.path(name)
    if path is None:
        msg = f"missing required input --{name.replace('_', '-')}"
        raise InputError(msg)
    return path


def _optional_vector(settings: ConformalKitSettings, name: str) -> np.ndarray | None:
    path = settings.inputs.path(name)
    return None if path is None else read_vector(path)


def _regression_band(
    settings: ConformalKitSettings, method: RegressionMethodEnum
) -> QuantileBand:
    outputs = read_matrix(_require(settings, "logits"))
    if method is RegressionMethodEnum.CQR:
        return QuantileBand.from_pairs(outputs)
    return QuantileBand.from_points(outputs)


def cmd_calibrate(
    settings: ConformalKitSettings, task: TaskEnum, out_dir: Path
) -> Path:
    """Calibrate from model outputs and write ``threshold.json``.

    Raises:
        InputError: On missing inputs or a label-universe mismatch.
    """
    alpha = settings.run.alpha
    if task is TaskEnum.REGRESSION:
        method = settings.regression.method
        band = _regression_band(settings, method)
        targets = read_matrix(_require(settings, "targets"))
        threshold = (
            cqr_calibrate(band, targets, alpha)
            if method is RegressionMethodEnum.CQR
            else split_calibrate(band.lower, targets, alpha)
        )
        artifact = ThresholdArtifact(
            task=task, seed=settings.run.seed, regression=threshold
        )
    else:
        logits = read_matrix(_require(settings, "logits"))
        labels = read_labels(_require(settings, "labels"))
        expected = settings.inputs.num_classes
        if expected and logits.shape[1] != expected:
            msg = f"logits have {logits.shape[1]} classes, expected {expected}"
            raise InputError(msg)
        predictor = calculate_threshold(
            settings.predictor_config(),
            logits,
            labels,
            alpha,
            _optional_vector(settings, "weights"),
        )
        artifact = ThresholdArtifact(
            task=task, seed=settings.run.seed, classification=predictor
        )
    path = out_dir / "threshold.json"
    write_json(path, artifact)
    return path


def cmd_predict(
    settings: ConformalKitSettings,
    task: TaskEnum,
    out_dir: Path,
    requested_score: ScoreKindEnum | None = None,
) -> Path:
    """Apply a threshold artifact and write ``predictions.csv``.

    Raises:
        InputError: If the artifact does not match the task, the requested
            score or the shape of the model outputs.
    """
    artifact = read_artifact(_require(settings, "artifact"))
    if artifact.task is not task:
        msg = f"artifact was calibrated for {artifact.task}, not {task}"
        raise InputError(msg)
    path = out_dir / "predictions.csv"
    if artifact.regression is not None:
        band = _regression_band(settings, artifact.regression.method)
        intervals = (
            cqr_predict(artifact.regression, band)
            if artifact.regression.method is RegressionMethodEnum.CQR
            else split_predict(artifact.regression, band.lower)
        )
        write_intervals(path, intervals)
        return path
    predictor = artifact.classification
    if predictor is None:
        msg = "artifact carries no classification threshold"
        raise InputError(msg)
    calibrated_score = predictor.config.score.kind
    if requested_score is not None and requested_score is not calibrated_score:
        msg = (
            f"artifact was calibrated with score {calibrated_score}, "
            f"not {requested_score}"
        )
        raise InputError(msg)
    sets = predict_with_logits(
        predictor,
        read_matrix(_require(settings, "logits")),
        _optional_vector(settings, "weights"),
    )
    write_prediction_sets(path, sets)
    return path


def cmd_eval(settings: ConformalKitSettings, task: TaskEnum, out_dir: Path) -> Path:
    """Evaluate a predictions file and write ``report.json`` and ``report.csv``.

    Alpha and the label universe come from ``--artifact`` when given, else from
    ``--alpha`` and ``--num-classes`` (inferred from the data when unset).
    """
    predictions = _require(settings, "predictions")
    artifact_path = settings.inputs.path("artifact")
    artifact = read_artifact(artifact_path) if artifact_path else None
    report: EvaluationReport
    if task is TaskEnum.REGRESSION:
        report = evaluate_regression(
            read_intervals(predictions), read_matrix(_require(settings, "targets"))
        )
    else:
        sets = read_prediction_sets(predictions)
        labels = read_labels(_require(settings, "labels"))
        alpha = settings.run.alpha
        num_classes = settings.inputs.num_classes
        if artifact is not None and artifact.classification is not None:
            alpha = artifact.classification.alpha
            num_classes = artifact.classification.num_classes
        if not num_classes:
            members = [max(s.members, default=0) for s in sets]
            largest = max([int(labels.max()), *members])
            num_classes = largest + 1
        report = evaluate_classification(sets, labels, alpha, num_classes)
    json_path = out_dir / "report.json"
    write_json(json_path, report)
    write_rows(out_dir / "report.csv", REPORT_FIELDS, [report.model_dump()])
    return json_path


def cmd_gen_data(settings: ConformalKitSettings, out_dir: Path) -> list[Path]:
    """Write a synthetic classification or time-series dataset as CSV files."""
    gen = settings.gen_data
    if gen.kind is GenDataKindEnum.TIMESERIES:
        series = generate_time_series(
            ArmaConfig(seed=settings.run.seed, t_total=gen.t_total)
        )
        paths = [out_dir / "features.csv", out_dir / "targets.csv"]
        write_matrix(paths[0], series.features)
        write_matrix(paths[1], series.targets)
        return paths
    priors = (
        None
        if gen.prior_ratio == 1.0
        else geometric_priors(gen.num_classes, gen.prior_ratio)
    )
    logits, labels = generate_classification(
        SyntheticClassificationConfig(
            num_classes=gen.num_classes,
            n=gen.n_cal + gen.n_test,
            class_separation=gen.class_separation,
            seed=settings.run.seed,
            class_priors=priors,
            separation_jitter=gen.separation_jitter,
        )
    )
    paths = []
    splits = (("cal", slice(0, gen.n_cal)), ("test", slice(gen.n_cal, None)))
    for name, rows in splits:
        logits_path = out_dir / f"{name}_logits.csv"
        labels_path = out_dir / f"{name}_labels.csv"
        write_matrix(logits_path, logits[rows])
        write_labels(labels_path, labels[rows])
        paths += [logits_path, labels_path]
    return paths


def cmd_config_init(
    settings: ConformalKitSettings,
    *,
    force: bool,
    user_config: UserConfig | None = None,
) -> Path:
    """Write the effective settings as the user settings file.

    Raises:
        ConfigurationError: If the file exists and ``force`` is not set.
    """
    config = user_config or UserConfig()
    if config.user_config_file.is_file() and not force:
        msg = f"{config.user_config_file} exists; pass --force to replace it"
        raise ConfigurationError(msg)
    config.save_user_config_file(settings.model_dump(mode="json"))
    logger.info("wrote user settings to %s", config.user_config_file)
    return config.user_config_file


def run_command(
    args: argparse.Namespace, settings: ConformalKitSettings
) -> list[Path]:
    """Dispatch a parsed command and return the files it wrote."""
    if args.command == "config-init":
        return [cmd_config_init(settings, force=args.force)]
    out_dir = output_dir(settings, args.command)
    match args.command:
        case "calibrate":
            return [cmd_calibrate(settings, args.task, out_dir)]
        case "predict":
            requested = None if args.score is None else ScoreKindEnum(args.score)
            return [cmd_predict(settings, args.task, out_dir, requested)]
        case "eval":
            return [cmd_eval(settings, args.task, out_dir)]
        case "bench-classification":
            return bench_classification(settings, out_dir)
        case "bench-timeseries":
            return bench_timeseries(settings, out_dir)
        case "gen-data":
            return cmd_gen_data(settings, out_dir)
    msg = f"unknown command {args.command!r}"
    raise ConfigurationError(msg)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the process exit code.

    Args:
        argv (Sequence[str], optional): Arguments without the program name.
            Defaults to ``sys.argv[1:]``.

    Returns:
        int: 0 on success, else the exit code of the raised error.
    """
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, overrides=flag_overrides(args))
        log_file = UserData().log_file if settings.logging.log_to_file else None
        try:
            configure_logging(settings.logging.level, log_file)
        except ValueError as error:
            raise ConfigurationError(str(error)) from error
        with log_context(args.command):
            written = run_command(args, settings)
    except ConformalKitError as error:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"conformalkit: error: {error}", file=sys.stderr)  # noqa: T201
        return int(error.exit_code)
    for path in written:
        print(path)  # noqa: T201
    return int(ExitCodeEnum.SUCCESS)
