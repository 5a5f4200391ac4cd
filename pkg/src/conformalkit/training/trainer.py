import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from conformalkit.core.errors import InputError, TrainingError
from conformalkit.training.losses import LossFunction
from conformalkit.training.mlp import Mlp
from conformalkit.utils.log import log_operation, logger


class TrainConfig(BaseModel):
    """Optimization settings.

    Attributes:
        lr (float): Adam learning rate; zero leaves parameters untouched.
        epochs (int): Number of passes over the data.
        batch_size (int): Mini-batch size; the last batch may be smaller.
        optimizer (Literal["adam"]): The optimizer.
        adam_betas (tuple[float, float]): Moment decay rates.
        adam_eps (float): Denominator offset.
        seed (int): Seed of the batch shuffling.
        shuffle (bool): Reshuffle the items every epoch.
    """

    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=0.01, ge=0.0, allow_inf_nan=False)
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=32, ge=1)
    optimizer: Literal["adam"] = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0, ge=0)
    shuffle: bool = True


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(
        self, parameters: list[NDArray[np.float64]], config: TrainConfig
    ) -> None:
        """Initialize zero moments for every parameter array.

        Args:
            parameters (list[NDArray[np.float64]]): Arrays to optimize.
            config (TrainConfig): Learning rate, betas and epsilon.
        """
        self.parameters = parameters
        self.lr = config.lr
        self.beta1, self.beta2 = config.adam_betas
        self.eps = config.adam_eps
        self.step_count = 0
        self.first = [np.zeros_like(p) for p in parameters]
        self.second = [np.zeros_like(p) for p in parameters]

    def step(self, grads: list[NDArray[np.float64]]) -> None:
        """Apply one bias-corrected update."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for param, grad, first, second in zip(
            self.parameters, grads, self.first, self.second, strict=True
        ):
            first *= self.beta1
            first += (1.0 - self.beta1) * grad
            second *= self.beta2
            second += (1.0 - self.beta2) * grad**2
            param -= self.lr * (first / correction1) / (
                np.sqrt(second / correction2) + self.eps
            )


@dataclass(frozen=True)
class TrainResult:
    """Outcome of a training run.

    Attributes:
        model (Mlp): The trained network, independent of the input network.
        loss_curve (list[float]): Item-weighted mean batch loss of every epoch.
    """

    model: Mlp
    loss_curve: list[float] = field(default_factory=list)


@log_operation
def train(
    model: Mlp,
    inputs: ArrayLike,
    targets: ArrayLike,
    loss: LossFunction,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Fit a network with mini-batch Adam.

    Deterministic for a given model seed and ``config.seed``.

    Args:
        model (Mlp): The initial network; left unchanged.
        inputs (ArrayLike): n x input_dim features.
        targets (ArrayLike): n targets (values or class indices).
        loss (LossFunction): Maps (batch outputs, batch targets) to a loss.
        config (TrainConfig, optional): Optimization settings. Defaults to None.

    Returns:
        TrainResult: The trained copy and the per-epoch loss curve.

    Raises:
        InputError: If inputs and targets differ in length or are empty.
        TrainingError: If a batch loss is not finite.
    """
    config = config or TrainConfig()
    features = np.asarray(inputs, dtype=np.float64)
    observed = np.asarray(targets)
    n = features.shape[0]
    if n == 0 or observed.shape[0] != n:
        msg = f"got {observed.shape[0]} targets for {n} inputs"
        raise InputError(msg)
    trained = model.copy()
    optimizer = Adam(trained.parameters, config)
    rng = np.random.default_rng(config.seed)
    loss_curve: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            outputs, cache = trained.forward(features[batch])
            evaluation = loss(outputs, observed[batch])
            if not math.isfinite(evaluation.value) or not np.all(
                np.isfinite(evaluation.grad)
            ):
                raise TrainingError(epoch, evaluation.value)
            optimizer.step(trained.backward(cache, evaluation.grad))
            total += evaluation.value * batch.size
        loss_curve.append(total / n)
        logger.debug("epoch %d loss %.6f", epoch, loss_curve[-1])
    return TrainResult(model=trained, loss_curve=loss_curve)
