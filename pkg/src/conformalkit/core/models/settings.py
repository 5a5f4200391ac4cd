from enum import StrEnum
from pathlib import Path
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, field_validator

from conformalkit.classification.predictors import (
    ClusterConfig,
    PredictorConfig,
    PredictorKindEnum,
)
from conformalkit.classification.scores import ScoreConfig, ScoreKindEnum
from conformalkit.core.models.types import Alpha
from conformalkit.regression.predictors import RegressionMethodEnum
from conformalkit.synth.generators import geometric_priors

PositiveInt = Annotated[int, Field(ge=1)]


def _optional_path(value: str) -> Path | None:
    return Path(value).expanduser() if value else None


class LoggingSettings(BaseModel):
    """Logging section.

    Attributes:
        level (str): Level name; ``CONFORMAL_KIT_LOG`` overrides it.
        log_to_file (bool): Also log to the user data directory.
    """

    level: str = "WARNING"
    log_to_file: bool = False


class ScoreSettings(BaseModel):
    """Score section; the seed comes from ``run.seed``."""

    kind: ScoreKindEnum = ScoreKindEnum.THR
    raps_penalty: float = Field(default=1.0, ge=0.0)
    raps_kreg: int = Field(default=0, ge=0)
    saps_weight: float = Field(default=0.25, gt=0.0)
    randomized: bool = True


class ClusterSettings(BaseModel):
    """Clustered-calibration section; ``num_clusters = 0`` means automatic."""

    num_clusters: int = Field(default=0, ge=0)
    quantile_levels: list[float] = Field(
        default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9]
    )
    min_class_count: int = Field(default=20, ge=1)
    kmeans_iters: int = Field(default=100, ge=1)


class PredictorSettings(BaseModel):
    """Predictor section."""

    kind: PredictorKindEnum = PredictorKindEnum.SPLIT
    temperature: float = Field(default=1.0, gt=0.0)
    cluster: ClusterSettings = Field(default_factory=ClusterSettings)


class RunSettings(BaseModel):
    """Settings shared by every command.

    Attributes:
        alpha (float): Significance level.
        seed (int): Root of all randomness.
        trials (int): Benchmark trial count.
        workers (int): Benchmark trials run concurrently.
        out (str): Output directory; empty selects the user data directory.
    """

    alpha: Alpha = 0.1
    seed: int = Field(default=0, ge=0)
    trials: PositiveInt = 5
    workers: PositiveInt = 1
    out: str = ""


class InputSettings(BaseModel):
    """Input files of calibrate, predict and eval; empty strings are unset."""

    logits: str = ""
    labels: str = ""
    artifact: str = ""
    predictions: str = ""
    targets: str = ""
    weights: str = ""
    num_classes: int = Field(default=0, ge=0)

    def path(self, name: str) -> Path | None:
        """Return the named input as a path, or None when unset."""
        return _optional_path(getattr(self, name))


class RegressionSettings(BaseModel):
    """Regression section."""

    method: RegressionMethodEnum = RegressionMethodEnum.SPLIT


class BenchClassificationSettings(BaseModel):
    """Classification benchmark: score x predictor x alpha sweep over trials."""

    alphas: list[Alpha] = Field(
        default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)], min_length=1
    )
    scores: list[ScoreKindEnum] = Field(default_factory=lambda: list(ScoreKindEnum))
    predictors: list[PredictorKindEnum] = Field(
        default_factory=lambda: [
            PredictorKindEnum.SPLIT,
            PredictorKindEnum.CLASS_WISE,
            PredictorKindEnum.CLUSTER,
        ]
    )
    num_classes: int = Field(default=10, ge=2)
    n_cal: PositiveInt = 2000
    n_test: PositiveInt = 2000
    class_separation: float = 2.0
    prior_ratio: float = Field(default=1.0, gt=0.0)
    separation_jitter: float = Field(default=0.0, ge=0.0, le=1.0)
    logits: str = ""
    labels: str = ""
    cal_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)

    @field_validator("predictors")
    @classmethod
    def _no_weighted(cls, kinds: list[PredictorKindEnum]) -> list[PredictorKindEnum]:
        if PredictorKindEnum.WEIGHTED in kinds:
            msg = "the benchmark has no weights; use split, class_wise or cluster"
            raise ValueError(msg)
        return kinds

    def priors(self) -> list[float] | None:
        """Geometric class priors, or None when the ratio is 1 (uniform)."""
        if self.prior_ratio == 1.0:
            return None
        return geometric_priors(self.num_classes, self.prior_ratio)

    def user_inputs(self) -> tuple[Path, Path] | None:
        """Return the user logits and labels paths when both are set."""
        logits, labels = _optional_path(self.logits), _optional_path(self.labels)
        return (logits, labels) if logits and labels else None


class BenchTimeseriesSettings(BaseModel):
    """Time-series benchmark: train / calibrate / test split and ACI step."""

    alpha: Alpha = 0.1
    gamma: float = Field(default=0.03, ge=0.0)
    phi: float = 0.8
    theta: float = 0.8
    innovation_std: float = Field(default=1.0, ge=0.0)
    burn_in: int = Field(default=0, ge=0)
    n_train: PositiveInt = 100
    n_cal: PositiveInt = 100
    n_test: PositiveInt = 300
    layer_widths: list[PositiveInt] = Field(default_factory=lambda: [64, 64])
    lr: float = Field(default=0.01, ge=0.0)
    epochs: PositiveInt = 100
    batch_size: PositiveInt = 10
    standardize: bool = True


class GenDataKindEnum(StrEnum):
    """Datasets produced by ``gen-data``."""

    CLASSIFICATION = "classification"
    TIMESERIES = "timeseries"


class GenDataSettings(BaseModel):
    """Synthetic dataset export."""

    kind: GenDataKindEnum = GenDataKindEnum.CLASSIFICATION
    num_classes: int = Field(default=10, ge=2)
    n_cal: PositiveInt = 2000
    n_test: PositiveInt = 2000
    class_separation: float = 2.0
    prior_ratio: float = Field(default=1.0, gt=0.0)
    separation_jitter: float = Field(default=0.0, ge=0.0, le=1.0)
    t_total: PositiveInt = 500


class ConformalKitSettings(BaseModel):
    """Layered settings of every command.

    Attributes:
        logging (LoggingSettings): Log level and file logging.
        score (ScoreSettings): Classification score.
        predictor (PredictorSettings): Classification predictor.
        run (RunSettings): Alpha, seed, trials, workers and output directory.
        inputs (InputSettings): Input files.
        regression (RegressionSettings): Regression method.
        bench_classification (BenchClassificationSettings): Classification sweep.
        bench_timeseries (BenchTimeseriesSettings): Time-series benchmark.
        gen_data (GenDataSettings): Synthetic dataset export.
    """

    model_config = ConfigDict(frozen=True)

    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    score: ScoreSettings = Field(default_factory=ScoreSettings)
    predictor: PredictorSettings = Field(default_factory=PredictorSettings)
    run: RunSettings = Field(default_factory=RunSettings)
    inputs: InputSettings = Field(default_factory=InputSettings)
    regression: RegressionSettings = Field(default_factory=RegressionSettings)
    bench_classification: BenchClassificationSettings = Field(
        default_factory=BenchClassificationSettings
    )
    bench_timeseries: BenchTimeseriesSettings = Field(
        default_factory=BenchTimeseriesSettings
    )
    gen_data: GenDataSettings = Field(default_factory=GenDataSettings)

    def score_config(self, kind: ScoreKindEnum | None = None) -> ScoreConfig:
        """Build the score configuration, seeded by ``run.seed``."""
        return ScoreConfig(
            kind=kind or self.score.kind,
            raps_penalty=self.score.raps_penalty,
            raps_kreg=self.score.raps_kreg,
            saps_weight=self.score.saps_weight,
            randomized=self.score.randomized,
            rng_seed=self.run.seed,
        )

    def cluster_config(self) -> ClusterConfig:
        """Build the clustered-calibration configuration, seeded by ``run.seed``."""
        cluster = self.predictor.cluster
        return ClusterConfig(
            num_clusters=cluster.num_clusters or None,
            quantile_levels=cluster.quantile_levels,
            min_class_count=cluster.min_class_count,
            kmeans_iters=cluster.kmeans_iters,
            kmeans_seed=self.run.seed,
        )

    def predictor_config(self) -> PredictorConfig:
        """Build the classification predictor configuration."""
        return PredictorConfig(
            kind=self.predictor.kind,
            score=self.score_config(),
            temperature=self.predictor.temperature,
            cluster=self.cluster_config(),
        )
