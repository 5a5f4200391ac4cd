from dataclasses import dataclass
from typing import Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from conformalkit.core.errors import InputError

NUM_FEATURES = 6


class ArmaConfig(BaseModel):
    """Settings of the ARMA(1, 1)-noise regression series.

    Attributes:
        phi (float): Autoregressive coefficient.
        theta (float): Moving-average coefficient.
        innovation_std (float): Standard deviation of the white noise.
        seed (int): Seed of features and noise.
        t_total (int): Series length.
        burn_in (int): Noise steps simulated and discarded before the series.
    """

    model_config = ConfigDict(frozen=True)

    phi: float = Field(default=0.8, allow_inf_nan=False)
    theta: float = Field(default=0.8, allow_inf_nan=False)
    innovation_std: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)
    seed: int = Field(default=0, ge=0)
    t_total: int = Field(default=500, ge=1)
    burn_in: int = Field(default=0, ge=0)


@dataclass(frozen=True)
class TimeSeriesBatch:
    """A generated series.

    Attributes:
        features (NDArray[np.float64]): t_total x 6 uniform features.
        targets (NDArray[np.float64]): t_total responses.
        noise (NDArray[np.float64]): The ARMA noise added to the responses.
    """

    features: NDArray[np.float64]
    targets: NDArray[np.float64]
    noise: NDArray[np.float64]


def regression_signal(features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Noise-free response; the sixth feature is uninformative."""
    x = features
    return (
        10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20.0 * (x[:, 2] - 0.5) ** 2
        + 10.0 * x[:, 3]
        + 5.0 * x[:, 4]
        + 0.0 * x[:, 5]
    )


def arma_noise(
    phi: float, theta: float, innovations: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Run ``e_0 = xi_0``, ``e_{t+1} = phi e_t + xi_{t+1} + theta xi_t``.

    Examples:
        >>> arma_noise(0.5, 0.5, np.array([1.0, 0.0, 0.0])).tolist()
        [1.0, 1.0, 0.5]
    """
    noise = np.empty_like(innovations)
    if innovations.size:
        noise[0] = innovations[0]
    for t in range(1, innovations.size):
        noise[t] = phi * noise[t - 1] + innovations[t] + theta * innovations[t - 1]
    return noise


def generate_time_series(config: ArmaConfig | None = None) -> TimeSeriesBatch:
    """Draw a reproducible series with autocorrelated noise.

    Features are i.i.d. uniform on ``[0, 1]^6``; the noise is ARMA(1, 1)
    started at ``e_0 = xi_0`` and advanced ``burn_in`` steps before the first
    kept point.

    Args:
        config (ArmaConfig, optional): Generator settings. Defaults to None.

    Returns:
        TimeSeriesBatch: Features, targets and the noise component.
    """
    config = config or ArmaConfig()
    rng = np.random.default_rng(config.seed)
    features = rng.random((config.t_total, NUM_FEATURES))
    length = config.burn_in + config.t_total
    innovations = rng.normal(0.0, config.innovation_std, length)
    noise = arma_noise(config.phi, config.theta, innovations)[config.burn_in :]
    return TimeSeriesBatch(
        features=features, targets=regression_signal(features) + noise, noise=noise
    )


def geometric_priors(num_classes: int, ratio: float) -> list[float]:
    """Class probabilities proportional to ``ratio ** k``.

    Examples:
        >>> geometric_priors(2, 1.0)
        [0.5, 0.5]
    """
    if num_classes < 1 or ratio <= 0:
        msg = "geometric_priors needs num_classes >= 1 and ratio > 0"
        raise InputError(msg)
    weights = ratio ** np.arange(num_classes, dtype=np.float64)
    return (weights / weights.sum()).tolist()


class SyntheticClassificationConfig(BaseModel):
    """Settings of the synthetic logit generator.

    Attributes:
        num_classes (int): Number of classes, at least 2.
        n (int): Number of items.
        class_separation (float): Logit boost of the true class.
        seed (int): Seed of labels and noise.
        class_priors (list[float], optional): Label distribution; uniform when
            unset.
        separation_jitter (float): Spread the boost linearly over the classes,
            from ``(1 - jitter)`` times the separation for class 0 to
            ``(1 + jitter)`` times for the last class.
    """

    model_config = ConfigDict(frozen=True)

    num_classes: int = Field(default=10, ge=2)
    n: int = Field(default=1000, ge=1)
    class_separation: float = Field(default=2.0, allow_inf_nan=False)
    seed: int = Field(default=0, ge=0)
    class_priors: list[float] | None = None
    separation_jitter: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_priors(self) -> Self:
        priors = self.class_priors
        if priors is not None and (
            len(priors) != self.num_classes
            or min(priors) < 0
            or abs(sum(priors) - 1.0) > 1e-9  # noqa: PLR2004
        ):
            msg = "class_priors must be a distribution over num_classes classes"
            raise ValueError(msg)
        return self

    def separations(self) -> NDArray[np.float64]:
        """Per-class logit boost."""
        k = np.arange(self.num_classes, dtype=np.float64)
        spread = 2.0 * k / (self.num_classes - 1) - 1.0
        return self.class_separation * (1.0 + self.separation_jitter * spread)


def generate_classification(
    config: SyntheticClassificationConfig,
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Draw logits ``boost * one_hot(label) + N(0, I)`` with their labels.

    Args:
        config (SyntheticClassificationConfig): Generator settings.

    Returns:
        tuple[NDArray[np.float64], NDArray[np.int64]]: n x K logits and n labels.

    Examples:
        >>> logits, labels = generate_classification(
        ...     SyntheticClassificationConfig(num_classes=3, n=4)
        ... )
        >>> logits.shape, labels.shape
        ((4, 3), (4,))
    """
    rng = np.random.default_rng(config.seed)
    if config.class_priors is None:
        labels = rng.integers(config.num_classes, size=config.n)
    else:
        labels = rng.choice(config.num_classes, size=config.n, p=config.class_priors)
    logits = rng.standard_normal((config.n, config.num_classes))
    logits[np.arange(config.n), labels] += config.separations()[labels]
    return logits, labels.astype(np.int64)
