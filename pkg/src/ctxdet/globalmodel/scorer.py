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
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctxdet.dataio.features import FeatureProvider, RecordFeatureProvider
from ctxdet.dataio.scenes import PathLike, SceneRecord
from ctxdet.exceptions import ConfigError, DimensionMismatchError, ModelFormatError, NonFiniteError
from ctxdet.geom.boxes import iou_matrix
from ctxdet.geom.grid import NUM_CELLS, CanvasTransform, GridSpec, build_grid, match_array_to_cells
from ctxdet.nets.dense import (
    Activation,
    DenseNet,
    InputNormalizer,
    Mode,
    backward,
    forward,
    init_dense_net,
)
from ctxdet.nets.losses import two_class_log_loss
from ctxdet.nets.optim import SgdConfig, SgdState, sgd_step
from ctxdet.nets.serialization import (
    load_model,
    net_from_arrays,
    net_to_arrays,
    normalizer_from_arrays,
    normalizer_to_arrays,
    save_model,
)

logger = logging.getLogger(__name__)

CELL_IOU = 0.3
MODEL_KIND = "global"


def label_cells(scene: SceneRecord, grid: Optional[GridSpec] = None) -> np.ndarray:
    """Cell targets: 1 where some ground-truth box overlaps the cell by more than 0.3 IoU.

    Ground truth (difficult heads included) is mapped to the canvas first.

    Args:
        scene (SceneRecord): The scene.
        grid (Optional[GridSpec]): The grid. Default: the standard 284-cell grid.

    Returns:
        ndarray: Binary label per cell, shape (284,).
    """
    grid = grid or build_grid()
    if not scene.ground_truth:
        return np.zeros(NUM_CELLS, dtype=np.int64)
    transform = CanvasTransform.for_image(scene.width, scene.height, grid.canvas)
    truth = transform.apply_array(scene.truth_boxes())
    return (iou_matrix(grid.cell_array, truth).max(axis=1) > CELL_IOU).astype(np.int64)


def check_global_scores(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (NUM_CELLS,):
        raise DimensionMismatchError(f"global scores need {NUM_CELLS} cells, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteError("non-finite global score")
    return scores


def candidate_cell_scores(
    scene: SceneRecord, scores: np.ndarray, grid: Optional[GridSpec] = None
) -> np.ndarray:
    """Score of each candidate's best-matching cell.

    Args:
        scene (SceneRecord): The scene.
        scores (ndarray): The scene's 284 cell scores.
        grid (Optional[GridSpec]): The grid. Default: the standard grid.

    Returns:
        ndarray: One cell score per candidate.
    """
    grid = grid or build_grid()
    scores = check_global_scores(scores)
    transform = CanvasTransform.for_image(scene.width, scene.height, grid.canvas)
    return scores[match_array_to_cells(scene.candidate_boxes(), grid, transform)]


@dataclass(frozen=True)
class GlobalConfig:
    hidden: int = 64
    dropout: float = 0.5
    sgd: SgdConfig = field(
        default_factory=lambda: SgdConfig(learning_rate=0.01, batch_size=32, epochs=30)
    )
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1:
            raise ConfigError("global: hidden must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("global: dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "GlobalConfig":
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"global: unknown keys {sorted(unknown)}")
        converted = dict(values)
        base = cls()
        if "sgd" in converted:
            converted["sgd"] = SgdConfig.from_dict(converted["sgd"], base.sgd)
        try:
            return replace(base, **converted)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"global: {error}") from error


@dataclass
class GlobalScorer:
    """Maps a scene descriptor to a background and a head output for each grid cell."""

    normalizer: InputNormalizer
    net: DenseNet

    def __post_init__(self) -> None:
        if self.net.output_dim != 2 * NUM_CELLS:
            raise DimensionMismatchError(f"global net needs {2 * NUM_CELLS} outputs")

    def cell_scores(
        self, scene: SceneRecord, provider: Optional[FeatureProvider] = None
    ) -> np.ndarray:
        """Head minus background output per cell.

        Args:
            scene (SceneRecord): Scene with a scene descriptor.
            provider (Optional[FeatureProvider]): Scene features. Default: record descriptor.

        Returns:
            ndarray: Score per cell, shape (284,).
        """
        provider = provider or RecordFeatureProvider()
        inputs = self.normalizer.apply(provider.scene_features(scene))
        output, _ = forward(self.net, inputs, Mode.EVAL)
        cells = output.reshape(NUM_CELLS, 2)
        return cells[:, 1] - cells[:, 0]


def train_global(
    scenes: Sequence[SceneRecord],
    config: GlobalConfig,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[GlobalScorer, List[float]]:
    """Trains the grid scorer with the per-cell two-output log-loss.

    The loss of a scene is summed over the cells and averaged over the scenes of a batch.

    Args:
        scenes (Sequence[SceneRecord]): Training scenes with scene descriptors.
        config (GlobalConfig): Architecture and optimizer settings.
        provider (Optional[FeatureProvider]): Scene features. Default: record descriptors.

    Returns:
        Tuple[GlobalScorer, List[float]]: The scorer and the loss of every step.

    Raises:
        NonFiniteError: If a loss becomes NaN or infinite.
    """
    if not scenes:
        raise ConfigError("global: no training scenes")
    provider = provider or RecordFeatureProvider()
    grid = build_grid()
    inputs = np.stack([provider.scene_features(scene) for scene in scenes])
    targets = np.stack([label_cells(scene, grid) for scene in scenes])
    init_seed, order_seed, dropout_seed = np.random.SeedSequence(config.rng_seed).spawn(3)
    normalizer = InputNormalizer.fit(inputs)
    inputs = normalizer.apply(inputs)
    net = init_dense_net(
        [inputs.shape[1], config.hidden, 2 * NUM_CELLS],
        [Activation.RELU, Activation.IDENTITY],
        np.random.default_rng(init_seed),
        dropout=[config.dropout, 0.0],
    )
    order_rng = np.random.default_rng(order_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    state = SgdState()
    trace = []
    logger.info(
        "training global model on %d scenes, %.2f%% positive cells",
        len(scenes),
        100.0 * targets.mean(),
    )
    for epoch in range(config.sgd.epochs):
        learning_rate = config.sgd.learning_rate_at(epoch)
        order = order_rng.permutation(len(scenes))
        epoch_losses = []
        for start in range(0, len(order), config.sgd.batch_size):
            batch = order[start : start + config.sgd.batch_size]
            output, tape = forward(net, inputs[batch], Mode.TRAIN, dropout_rng)
            loss, gradient = two_class_log_loss(
                output.reshape(len(batch), NUM_CELLS, 2), targets[batch]
            )
            loss /= len(batch)
            if not math.isfinite(loss):
                raise NonFiniteError(f"global loss became {loss} in epoch {epoch}")
            grads, _ = backward(net, tape, gradient.reshape(len(batch), -1) / len(batch))
            params, state = sgd_step(net.parameters(), grads, state, config.sgd, learning_rate)
            net.load_parameters(params)
            trace.append(loss)
            epoch_losses.append(loss)
        mean_loss = float(np.mean(epoch_losses))
        logger.info("global epoch %d: mean loss %.4f, lr %g", epoch, mean_loss, learning_rate)
    return GlobalScorer(normalizer, net), trace


def save_global_model(path: PathLike, scorer: GlobalScorer, config: GlobalConfig) -> None:
    net_meta, arrays = net_to_arrays(scorer.net, "net")
    arrays.update(normalizer_to_arrays(scorer.normalizer, "normalizer"))
    header = {
        "kind": MODEL_KIND,
        "net": net_meta,
        "config": {"hidden": config.hidden, "dropout": config.dropout, "rng_seed": config.rng_seed},
    }
    save_model(path, header, arrays)


def load_global_model(path: PathLike) -> GlobalScorer:
    """Loads a scorer written by save_global_model.

    Args:
        path (PathLike): Model file.

    Returns:
        GlobalScorer: The restored scorer.

    Raises:
        ModelFormatError: If the file holds another kind of model.
    """
    header, arrays = load_model(path)
    if header.get("kind") != MODEL_KIND:
        raise ModelFormatError(f"{path} does not hold a global model")
    return GlobalScorer(
        normalizer_from_arrays(arrays, "normalizer"), net_from_arrays(header["net"], arrays, "net")
    )
