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

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ctxdet.exceptions import ConfigError, DimensionMismatchError, NonFiniteError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SgdConfig:
    """
    Stochastic gradient descent with momentum and weight decay. The batch composition is
    `batch_size` examples drawn from `scenes_per_batch` scenes where the trainer groups by
    scene. The learning rate is divided by `lr_drop_factor` once `lr_drop_after` epochs are done.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 64
    scenes_per_batch: int = 4
    epochs: int = 10
    lr_drop_after: Optional[int] = None
    lr_drop_factor: float = 10.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate >= 0.0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0.0:
            raise ConfigError("weight_decay must be non-negative")
        if self.batch_size < 1 or self.scenes_per_batch < 1 or self.epochs < 0:
            raise ConfigError("batch_size, scenes_per_batch must be positive, epochs >= 0")
        if self.lr_drop_factor <= 0.0:
            raise ConfigError("lr_drop_factor must be positive")

    @classmethod
    def from_dict(cls, values: Dict[str, Any], base: Optional["SgdConfig"] = None) -> "SgdConfig":
        """Builds a config from a mapping on top of a base config.

        Args:
            values (Dict[str, Any]): Field overrides.
            base (Optional[SgdConfig]): Config supplying the remaining fields. Default: the
                class defaults.

        Returns:
            SgdConfig: The validated config.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        if not isinstance(values, dict):
            raise ConfigError("sgd: section must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"sgd: unknown keys {sorted(unknown)}")
        try:
            return replace(base or cls(), **values)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"sgd: {error}") from error

    def learning_rate_at(self, epoch: int) -> float:
        """The scheduled learning rate for a zero-based epoch.

        Args:
            epoch (int): Completed passes over the training data.

        Returns:
            float: The learning rate.
        """
        if self.lr_drop_after is not None and epoch >= self.lr_drop_after:
            return self.learning_rate / self.lr_drop_factor
        return self.learning_rate


FINETUNE_LOCAL_SGD = SgdConfig(learning_rate=0.01, momentum=0.9, weight_decay=0.0005)
FINETUNE_GLOBAL_SGD = SgdConfig(learning_rate=0.0001, momentum=0.9, weight_decay=0.0005)
FINETUNE_PAIRWISE_SGD = SgdConfig(
    learning_rate=0.00001, momentum=0.9, weight_decay=0.000005, lr_drop_after=4
)


@dataclass
class SgdState:
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def sgd_step(
    params: Dict[str, np.ndarray],
    gradients: Dict[str, np.ndarray],
    state: SgdState,
    config: SgdConfig,
    learning_rate: Optional[float] = None,
) -> Tuple[Dict[str, np.ndarray], SgdState]:
    """One momentum update: v <- m v - lr (g + wd p); p <- p + v.

    Args:
        params (Dict[str, ndarray]): Current parameters; not modified.
        gradients (Dict[str, ndarray]): Gradients with the same keys and shapes.
        state (SgdState): Velocities from the previous step; not modified.
        config (SgdConfig): Hyperparameters.
        learning_rate (Optional[float]): Scheduled learning rate overriding
            `config.learning_rate`.

    Returns:
        Tuple[Dict[str, ndarray], SgdState]: New parameters and state.

    Raises:
        NonFiniteError: If a gradient entry is NaN or infinite.
        DimensionMismatchError: If shapes differ.
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    new_params = {}
    new_velocity = {}
    for name, param in params.items():
        grad = gradients[name]
        if grad.shape != param.shape:
            raise DimensionMismatchError(f"gradient {name} has shape {grad.shape}")
        if not np.all(np.isfinite(grad)):
            bad = np.argwhere(~np.isfinite(grad))[0].tolist()
            raise NonFiniteError(f"non-finite gradient in '{name}' at {bad}")
        velocity = state.velocity.get(name)
        if velocity is None:
            velocity = np.zeros_like(param)
        velocity = config.momentum * velocity - lr * (grad + config.weight_decay * param)
        new_velocity[name] = velocity
        new_params[name] = param + velocity
    return new_params, SgdState(new_velocity, state.step + 1)
