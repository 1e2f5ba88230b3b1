# Copyright Amazon.com Inc. or its affiliates. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License"). You
# may not use this file except in compliance with the License. A copy of
# the License is located at
#
#     http://aws.amazon.com/apache2.0/
#
# or in the "license" file accompanying this file. This file is
# distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF
# ANY KIND, either express or implied. See the License for the specific
# language governing permissions and limitations under the License.

from copy import deepcopy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctxdet.exceptions import DimensionMismatchError, StaleTapeError

INIT_STD = 0.01


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class DenseLayer:
    """An affine map `weight @ x + bias` followed by an activation and optional dropout."""

    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY
    dropout: float = 0.0

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionMismatchError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate {self.dropout} outside [0, 1)")

    @property
    def input_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class DenseNet:
    """
    A feed-forward chain of dense layers. The generation counter increases on every parameter
    load so tapes recorded before an update are rejected by backward.
    """

    layers: List[DenseLayer]
    generation: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionMismatchError("a network needs at least one layer")
        for previous, layer in zip(self.layers, self.layers[1:]):
            if previous.output_dim != layer.input_dim:
                raise DimensionMismatchError(
                    f"layer output {previous.output_dim} does not feed input {layer.input_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def parameters(self) -> Dict[str, np.ndarray]:
        """Named parameter arrays, in layer order.

        Returns:
            Dict[str, ndarray]: Keys `<layer>.weight` and `<layer>.bias`; the arrays are the
            live parameters, not copies.
        """
        params = {}
        for index, layer in enumerate(self.layers):
            params[f"{index}.weight"] = layer.weight
            params[f"{index}.bias"] = layer.bias
        return params

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        """Replaces the parameters and invalidates outstanding tapes.

        Args:
            params (Dict[str, ndarray]): Arrays keyed like `parameters()`.
        """
        for index, layer in enumerate(self.layers):
            weight = np.array(params[f"{index}.weight"], dtype=np.float64)
            bias = np.array(params[f"{index}.bias"], dtype=np.float64)
            if weight.shape != layer.weight.shape or bias.shape != layer.bias.shape:
                raise DimensionMismatchError(f"parameter shapes of layer {index} changed")
            layer.weight = weight
            layer.bias = bias
        self.generation += 1

    def touch(self) -> None:
        """Marks the parameters as changed after an in-place edit."""
        self.generation += 1

    def copy(self) -> "DenseNet":
        return DenseNet(deepcopy(self.layers))

    def architecture(self) -> List[Dict[str, object]]:
        return [
            {
                "input_dim": layer.input_dim,
                "output_dim": layer.output_dim,
                "activation": layer.activation.value,
                "dropout": layer.dropout,
            }
            for layer in self.layers
        ]


def init_dense_net(
    dims: Sequence[int],
    activations: Sequence[Activation],
    rng: np.random.Generator,
    dropout: Optional[Sequence[float]] = None,
    std: float = INIT_STD,
) -> DenseNet:
    """Builds a network with zero-mean Gaussian weights and zero biases.

    Args:
        dims (Sequence[int]): Layer widths, input first; `len(dims) - 1` layers are created.
        activations (Sequence[Activation]): One activation per layer.
        rng (np.random.Generator): Random stream for the weights.
        dropout (Optional[Sequence[float]]): Dropout rate per layer. Default: no dropout.
        std (float): Standard deviation of the weights. Default: 0.01.

    Returns:
        DenseNet: The initialised network.
    """
    if len(activations) != len(dims) - 1:
        raise DimensionMismatchError("need one activation per layer")
    rates = list(dropout) if dropout is not None else [0.0] * len(activations)
    layers = [
        DenseLayer(
            weight=rng.normal(0.0, std, size=(n_out, n_in)),
            bias=np.zeros(n_out),
            activation=activation,
            dropout=rate,
        )
        for n_in, n_out, activation, rate in zip(dims[:-1], dims[1:], activations, rates)
    ]
    return DenseNet(layers)


@dataclass
class Tape:
    """Activations retained by forward for the matching backward call."""

    net_id: int
    generation: int
    squeeze: bool
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    masks: List[Optional[np.ndarray]]


def forward(
    net: DenseNet,
    inputs: np.ndarray,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, Tape]:
    """Evaluates the network on a vector or on a batch of row vectors.

    Dropout is inverted (kept units are scaled by 1 / (1 - rate)) and only applied in train
    mode, so evaluation needs no rescaling.

    Args:
        net (DenseNet): The network.
        inputs (ndarray): Shape (D,) or (N, D).
        mode (Mode): Train or eval. Default: eval.
        rng (Optional[np.random.Generator]): Random stream for dropout masks; required in train
            mode when a layer has dropout.

    Returns:
        Tuple[ndarray, Tape]: The output (shape (K,) or (N, K)) and the tape for backward.

    Raises:
        DimensionMismatchError: If the input width differs from the network input.
    """
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatchError(f"input shape {x.shape} for network input {net.input_dim}")
    tape = Tape(id(net), net.generation, squeeze, [], [], [])
    for layer in net.layers:
        tape.inputs.append(x)
        z = x @ layer.weight.T + layer.bias
        tape.pre_activations.append(z)
        out = np.maximum(z, 0.0) if layer.activation == Activation.RELU else z
        mask = None
        if mode == Mode.TRAIN and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout needs a random generator")
            mask = (rng.uniform(size=out.shape) >= layer.dropout) / (1.0 - layer.dropout)
            out = out * mask
        tape.masks.append(mask)
        x = out
    return (x[0] if squeeze else x), tape


def backward(
    net: DenseNet, tape: Tape, output_gradient: np.ndarray
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Reverse-mode gradients of the composition recorded on the tape.

    Args:
        net (DenseNet): The network the tape was recorded on.
        tape (Tape): Tape from forward.
        output_gradient (ndarray): Gradient of the loss with respect to the output, same
            shape as the forward output.

    Returns:
        Tuple[Dict[str, ndarray], ndarray]: Parameter gradients keyed like
        `net.parameters()` (summed over the batch) and the input gradient.

    Raises:
        StaleTapeError: If the tape belongs to another network or predates a parameter update.
    """
    if tape.net_id != id(net) or tape.generation != net.generation:
        raise StaleTapeError("tape does not match the current network parameters")
    g = np.asarray(output_gradient, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    grads = {}
    for index in reversed(range(len(net.layers))):
        layer = net.layers[index]
        if tape.masks[index] is not None:
            g = g * tape.masks[index]
        if layer.activation == Activation.RELU:
            g = g * (tape.pre_activations[index] > 0.0)
        grads[f"{index}.weight"] = g.T @ tape.inputs[index]
        grads[f"{index}.bias"] = g.sum(axis=0)
        g = g @ layer.weight
    ordered = {key: grads[key] for key in net.parameters()}
    return ordered, (g[0] if tape.squeeze else g)


def relu_signature(tape: Tape) -> bytes:
    """bytes: Packed relu on/off pattern of a tape, used to detect kinks in gradient checks."""
    return b"".join(np.packbits(z > 0.0).tobytes() for z in tape.pre_activations)


@dataclass
class InputNormalizer:
    """Per-dimension standardisation fitted on training inputs."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, inputs: np.ndarray) -> "InputNormalizer":
        """Fits mean and standard deviation; constant dimensions get unit deviation.

        Args:
            inputs (ndarray): Training rows, shape (N, D).

        Returns:
            InputNormalizer: The fitted normalizer.
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        std = inputs.std(axis=0)
        return cls(inputs.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "InputNormalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatchError(
                f"input width {inputs.shape[-1]} for normalizer width {self.mean.shape[0]}"
            )
        return (inputs - self.mean) / self.std
