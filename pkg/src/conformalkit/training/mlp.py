from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from conformalkit.core.errors import InputError, ParseError

LayerWidth = Annotated[int, Field(ge=1)]


class MlpSpec(BaseModel):
    """Architecture of a fully connected network.

    Attributes:
        input_dim (int): Number of input features.
        layer_widths (list[int]): Hidden layer widths, each at least 1.
        activation (Literal["relu"]): Hidden activation.
        output_dim (int): Number of outputs (2 for a quantile pair, K for bins).
        seed (int): Seed of the parameter initialization.
    """

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(default=1, ge=1)
    layer_widths: list[LayerWidth] = Field(default_factory=lambda: [64, 64])
    activation: Literal["relu"] = "relu"
    output_dim: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)

    def layer_dims(self) -> list[tuple[int, int]]:
        """Return ``(fan_in, fan_out)`` of every affine layer."""
        widths = [self.input_dim, *self.layer_widths, self.output_dim]
        return list(zip(widths[:-1], widths[1:], strict=True))


@dataclass
class ForwardCache:
    """Intermediate values kept by :meth:`Mlp.forward` for the backward pass."""

    inputs: list[NDArray[np.float64]] = field(default_factory=list)
    pre_activations: list[NDArray[np.float64]] = field(default_factory=list)


def init_parameters(spec: MlpSpec) -> list[NDArray[np.float64]]:
    """Draw ``[W_0, b_0, W_1, b_1, ...]`` uniformly in ``+-1/sqrt(fan_in)``."""
    rng = np.random.default_rng(spec.seed)
    parameters: list[NDArray[np.float64]] = []
    for fan_in, fan_out in spec.layer_dims():
        bound = 1.0 / np.sqrt(fan_in)
        parameters.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        parameters.append(rng.uniform(-bound, bound, size=fan_out))
    return parameters


class Mlp:
    """A ReLU multilayer perceptron with a hand-written backward pass.

    Attributes:
        spec (MlpSpec): The architecture.
        parameters (list[NDArray[np.float64]]): Weights and biases, alternating.
    """

    def __init__(
        self, spec: MlpSpec, parameters: list[NDArray[np.float64]] | None = None
    ) -> None:
        """Initialize the network, drawing fresh parameters when none are given.

        Args:
            spec (MlpSpec): The architecture.
            parameters (list[NDArray[np.float64]], optional): Existing parameters.
                Defaults to None.

        Raises:
            InputError: If the parameter shapes do not match the architecture.
        """
        self.spec = spec
        self.parameters = init_parameters(spec) if parameters is None else parameters
        expected = [s for dims in spec.layer_dims() for s in (dims, (dims[1],))]
        if [p.shape for p in self.parameters] != expected:
            msg = "parameter shapes do not match the architecture"
            raise InputError(msg)

    def copy(self) -> "Mlp":
        """Return an independent copy."""
        return Mlp(self.spec, [p.copy() for p in self.parameters])

    def _check_inputs(self, inputs: ArrayLike) -> NDArray[np.float64]:
        matrix = np.asarray(inputs, dtype=np.float64)
        if matrix.ndim == 1:
            matrix = matrix[:, np.newaxis]
        if matrix.ndim != 2 or matrix.shape[1] != self.spec.input_dim:  # noqa: PLR2004
            msg = f"expected n x {self.spec.input_dim} inputs, got shape {matrix.shape}"
            raise InputError(msg)
        return matrix

    def forward(self, inputs: ArrayLike) -> tuple[NDArray[np.float64], ForwardCache]:
        """Run the network and keep what the backward pass needs.

        Args:
            inputs (ArrayLike): n x input_dim features (or n values when
                input_dim is 1).

        Returns:
            tuple[NDArray[np.float64], ForwardCache]: n x output_dim outputs and
                the cache.
        """
        hidden = self._check_inputs(inputs)
        cache = ForwardCache()
        num_layers = len(self.parameters) // 2
        for layer in range(num_layers):
            weights, bias = self.parameters[2 * layer], self.parameters[2 * layer + 1]
            cache.inputs.append(hidden)
            pre = hidden @ weights + bias
            cache.pre_activations.append(pre)
            hidden = np.maximum(pre, 0.0) if layer < num_layers - 1 else pre
        return hidden, cache

    def __call__(self, inputs: ArrayLike) -> NDArray[np.float64]:
        """Return the outputs of :meth:`forward`."""
        return self.forward(inputs)[0]

    def backward(
        self, cache: ForwardCache, grad_outputs: NDArray[np.float64]
    ) -> list[NDArray[np.float64]]:
        """Backpropagate ``d loss / d outputs`` to every parameter.

        Args:
            cache (ForwardCache): The cache of the matching forward pass.
            grad_outputs (NDArray[np.float64]): n x output_dim gradient.

        Returns:
            list[NDArray[np.float64]]: Gradients aligned with :attr:`parameters`.
        """
        grads: list[NDArray[np.float64]] = [np.empty(0)] * len(self.parameters)
        upstream = np.asarray(grad_outputs, dtype=np.float64).reshape(
            cache.pre_activations[-1].shape
        )
        for layer in reversed(range(len(self.parameters) // 2)):
            grads[2 * layer] = cache.inputs[layer].T @ upstream
            grads[2 * layer + 1] = upstream.sum(axis=0)
            if layer > 0:
                upstream = (upstream @ self.parameters[2 * layer].T) * (
                    cache.pre_activations[layer - 1] > 0
                )
        return grads

    def save(self, path: Path) -> None:
        """Write the architecture and parameters to an ``.npz`` file."""
        arrays = {f"param_{i}": p for i, p in enumerate(self.parameters)}
        with path.open("wb") as file:
            np.savez(file, spec=np.array(self.spec.model_dump_json()), **arrays)

    @classmethod
    def load(cls, path: Path) -> "Mlp":
        """Read a network written by :meth:`save`.

        Raises:
            InputError: If the file does not exist.
            ParseError: If the file is not a valid model file.
        """
        if not path.is_file():
            msg = f"model file not found: {path}"
            raise InputError(msg)
        try:
            with np.load(path, allow_pickle=False) as data:
                spec = MlpSpec.model_validate_json(str(data["spec"]))
                count = 2 * len(spec.layer_dims())
                parameters = [
                    np.asarray(data[f"param_{i}"], dtype=np.float64)
                    for i in range(count)
                ]
        except (OSError, ValueError, KeyError, ValidationError) as error:
            raise ParseError(path, f"invalid model file: {error}") from error
        return cls(spec, parameters)
