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
from ctxdet.exceptions import ConfigError, ModelFormatError, NonFiniteError
from ctxdet.geom.boxes import iou_matrix
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

IGNORED = -1
MODEL_KIND = "local"


@dataclass(frozen=True)
class LocalConfig:
    hidden: int = 64
    dropout: float = 0.5
    positive_iou: float = 0.6
    negative_iou: float = 0.5
    sgd: SgdConfig = field(default_factory=lambda: SgdConfig(learning_rate=0.01, epochs=10))
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1:
            raise ConfigError("local: hidden must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("local: dropout must lie in [0, 1)")
        if not 0.0 <= self.negative_iou <= self.positive_iou <= 1.0:
            raise ConfigError("local: need 0 <= negative_iou <= positive_iou <= 1")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "LocalConfig":
        """Builds a config from a mapping; an `sgd` entry overrides optimizer fields.

        Args:
            values (Dict[str, Any]): Field values.

        Returns:
            LocalConfig: The validated config.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"local: unknown keys {sorted(unknown)}")
        converted = dict(values)
        base = cls()
        if "sgd" in converted:
            converted["sgd"] = SgdConfig.from_dict(converted["sgd"], base.sgd)
        try:
            return replace(base, **converted)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"local: {error}") from error


@dataclass
class LocalModel:
    """Normalizer plus a dense network with a background and a head output per candidate."""

    normalizer: InputNormalizer
    net: DenseNet

    def outputs(self, descriptors: np.ndarray) -> np.ndarray:
        output, _ = forward(self.net, self.normalizer.apply(descriptors), Mode.EVAL)
        return output.reshape(-1, 2)

    def scores(self, descriptors: np.ndarray) -> np.ndarray:
        """ndarray: Head output minus background output per descriptor row."""
        descriptors = np.asarray(descriptors, dtype=np.float64)
        if not len(descriptors):
            return np.zeros(0)
        output = self.outputs(descriptors)
        return output[:, 1] - output[:, 0]


def label_candidates(
    scene: SceneRecord, positive_iou: float = 0.6, negative_iou: float = 0.5
) -> np.ndarray:
    """Training labels of the candidates from their best overlap with ground truth.

    Args:
        scene (SceneRecord): The scene.
        positive_iou (float): Overlap above which a candidate is a head. Default: 0.6.
        negative_iou (float): Overlap below which a candidate is background. Default: 0.5.

    Returns:
        ndarray: 1, 0 or IGNORED (-1) per candidate.
    """
    count = len(scene.candidates)
    if not scene.ground_truth:
        return np.zeros(count, dtype=np.int64)
    best = iou_matrix(scene.candidate_boxes(), scene.truth_boxes()).max(axis=1)
    labels = np.full(count, IGNORED, dtype=np.int64)
    labels[best > positive_iou] = 1
    labels[best < negative_iou] = 0
    return labels


def sample_balanced_batches(
    labels: np.ndarray, batch_size: int, rng: np.random.Generator
) -> List[np.ndarray]:
    """One epoch of class-balanced batches.

    Every negative appears once per epoch; each batch is topped up with half a batch of
    positives, drawn in shuffled passes over the positives (with repetition when they are
    scarcer than the batches need).

    Args:
        labels (ndarray): 1, 0 or IGNORED per example.
        batch_size (int): Examples per batch.
        rng (np.random.Generator): Random stream for shuffling.

    Returns:
        List[ndarray]: Example indices per batch.
    """
    labels = np.asarray(labels)
    positives = np.flatnonzero(labels == 1)
    negatives = rng.permutation(np.flatnonzero(labels == 0))
    if not len(negatives):
        order = rng.permutation(positives)
        return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    per_positive = math.ceil(batch_size / 2) if len(positives) else 0
    per_negative = batch_size - per_positive
    pool = np.zeros(0, dtype=np.int64)
    batches = []
    for start in range(0, len(negatives), per_negative):
        chosen = []
        while len(chosen) < per_positive:
            if not len(pool):
                pool = rng.permutation(positives)
            take = min(per_positive - len(chosen), len(pool))
            chosen.extend(pool[:take])
            pool = pool[take:]
        batch = np.concatenate([negatives[start : start + per_negative], chosen])
        batches.append(batch.astype(np.int64))
    return batches


def _training_set(
    scenes: Sequence[SceneRecord], config: LocalConfig, provider: FeatureProvider
) -> Tuple[np.ndarray, np.ndarray]:
    rows, targets = [], []
    for scene in scenes:
        if not scene.candidates:
            continue
        labels = label_candidates(scene, config.positive_iou, config.negative_iou)
        keep = labels != IGNORED
        rows.append(provider.candidate_features(scene)[keep])
        targets.append(labels[keep])
    if not rows:
        raise ConfigError("local: no labelled candidates in the training scenes")
    return np.concatenate(rows), np.concatenate(targets)


def train_local(
    scenes: Sequence[SceneRecord],
    config: LocalConfig,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[LocalModel, List[float]]:
    """Trains the local model with the mean two-output log-loss.

    Args:
        scenes (Sequence[SceneRecord]): Training scenes.
        config (LocalConfig): Architecture and optimizer settings.
        provider (Optional[FeatureProvider]): Candidate features. Default: the descriptors
            stored in the records.

    Returns:
        Tuple[LocalModel, List[float]]: The model and the loss of every step.

    Raises:
        NonFiniteError: If a loss becomes NaN or infinite.
    """
    provider = provider or RecordFeatureProvider()
    inputs, targets = _training_set(scenes, config, provider)
    init_seed, batch_seed, dropout_seed = np.random.SeedSequence(config.rng_seed).spawn(3)
    normalizer = InputNormalizer.fit(inputs)
    inputs = normalizer.apply(inputs)
    net = init_dense_net(
        [inputs.shape[1], config.hidden, 2],
        [Activation.RELU, Activation.IDENTITY],
        np.random.default_rng(init_seed),
        dropout=[config.dropout, 0.0],
    )
    batch_rng = np.random.default_rng(batch_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    state = SgdState()
    trace = []
    logger.info(
        "training local model on %d candidates (%d heads)", len(targets), int(targets.sum())
    )
    for epoch in range(config.sgd.epochs):
        learning_rate = config.sgd.learning_rate_at(epoch)
        epoch_losses = []
        for batch in sample_balanced_batches(targets, config.sgd.batch_size, batch_rng):
            output, tape = forward(net, inputs[batch], Mode.TRAIN, dropout_rng)
            loss, gradient = two_class_log_loss(output, targets[batch])
            loss /= len(batch)
            if not math.isfinite(loss):
                raise NonFiniteError(f"local loss became {loss} in epoch {epoch}")
            grads, _ = backward(net, tape, gradient / len(batch))
            params, state = sgd_step(net.parameters(), grads, state, config.sgd, learning_rate)
            net.load_parameters(params)
            trace.append(loss)
            epoch_losses.append(loss)
        logger.info(
            "local epoch %d: mean loss %.4f, lr %g",
            epoch,
            float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            learning_rate,
        )
    return LocalModel(normalizer, net), trace


def score_candidates(
    model: LocalModel, scene: SceneRecord, provider: Optional[FeatureProvider] = None
) -> np.ndarray:
    """Local score per candidate of a scene, in eval mode.

    Args:
        model (LocalModel): The trained model.
        scene (SceneRecord): The scene.
        provider (Optional[FeatureProvider]): Candidate features. Default: record descriptors.

    Returns:
        ndarray: Head minus background output per candidate.
    """
    if not scene.candidates:
        return np.zeros(0)
    provider = provider or RecordFeatureProvider()
    return model.scores(provider.candidate_features(scene))


def feature_extractor(model: LocalModel) -> Tuple[DenseNet, InputNormalizer]:
    """Copy of every layer but the output layer, with the input normalizer.

    Args:
        model (LocalModel): The trained local model.

    Returns:
        Tuple[DenseNet, InputNormalizer]: The feature extractor and its normalizer.
    """
    copy = model.net.copy()
    return DenseNet(copy.layers[:-1]), model.normalizer


def save_local_model(path: PathLike, model: LocalModel, config: LocalConfig) -> None:
    net_meta, arrays = net_to_arrays(model.net, "net")
    arrays.update(normalizer_to_arrays(model.normalizer, "normalizer"))
    header = {
        "kind": MODEL_KIND,
        "net": net_meta,
        "config": {
            "hidden": config.hidden,
            "dropout": config.dropout,
            "positive_iou": config.positive_iou,
            "negative_iou": config.negative_iou,
            "rng_seed": config.rng_seed,
        },
    }
    save_model(path, header, arrays)


def load_local_model(path: PathLike) -> LocalModel:
    """Loads a model written by save_local_model.

    Args:
        path (PathLike): Model file.

    Returns:
        LocalModel: The restored model.

    Raises:
        ModelFormatError: If the file holds another kind of model.
    """
    header, arrays = load_model(path)
    if header.get("kind") != MODEL_KIND:
        raise ModelFormatError(f"{path} does not hold a local model")
    return LocalModel(
        normalizer_from_arrays(arrays, "normalizer"), net_from_arrays(header["net"], arrays, "net")
    )
