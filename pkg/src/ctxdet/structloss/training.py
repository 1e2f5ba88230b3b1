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

import csv
import logging
import math
from copy import deepcopy
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from ctxdet.dataio.features import FeatureProvider
from ctxdet.dataio.scenes import PathLike, SceneRecord
from ctxdet.exceptions import ClusteringError, NonFiniteError
from ctxdet.graph.clustering import EdgeClusterModel, fit_kmeans
from ctxdet.graph.scene_graph import (
    NMS_THRESHOLD,
    SceneGraph,
    edge_feature_array,
    node_truth,
    oriented_pairs,
    select_candidates,
)
from ctxdet.inference.exhaustive import maximize
from ctxdet.inference.potentials import Potentials
from ctxdet.inference.scores import candidate_scores
from ctxdet.localmodel.local import LocalModel, score_candidates
from ctxdet.nets.dense import Mode, relu_signature
from ctxdet.nets.optim import SgdState, sgd_step
from ctxdet.structloss.losses import LossKind, LossSpec, hamming_augmented, structured_loss
from ctxdet.structloss.model import (
    PairwiseConfig,
    PairwiseModelParams,
    pairwise_backward,
    pairwise_forward,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairwiseExample:
    """A training scene with its selected nodes and their labels."""

    scene: SceneRecord
    nodes: Tuple[int, ...]
    truth: Tuple[int, ...]


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss: float
    learning_rate: float


def prepare_pairwise_examples(
    scenes: Sequence[SceneRecord],
    local_model: LocalModel,
    m: int = 16,
    truth_iou: float = 0.5,
    provider: Optional[FeatureProvider] = None,
) -> List[PairwiseExample]:
    """Selects the graph nodes of every scene with the frozen local model.

    Args:
        scenes (Sequence[SceneRecord]): Scenes.
        local_model (LocalModel): The trained local model.
        m (int): Nodes per scene after NMS. Default: 16.
        truth_iou (float): IoU at which a node counts as a head. Default: 0.5.
        provider (Optional[FeatureProvider]): Candidate features.

    Returns:
        List[PairwiseExample]: One example per scene, in input order.
    """
    examples = []
    for scene in scenes:
        scores = score_candidates(local_model, scene, provider)
        nodes = select_candidates(scene, scores, m)
        examples.append(PairwiseExample(scene, nodes, node_truth(scene, nodes, truth_iou)))
    logger.debug("prepared %d pairwise examples (NMS %.1f, m=%d)", len(examples), NMS_THRESHOLD, m)
    return examples


def fit_edge_clusters(examples: Sequence[PairwiseExample], k: int, seed: int) -> EdgeClusterModel:
    """k-means over the oriented-edge features of all example graphs.

    Args:
        examples (Sequence[PairwiseExample]): Training examples.
        k (int): Number of edge types.
        seed (int): Seed of the k-means++ draw.

    Returns:
        EdgeClusterModel: The fitted model.

    Raises:
        ClusteringError: If the graphs have fewer than k distinct edges.
    """
    rows = []
    for example in examples:
        if len(example.nodes) < 2:
            continue
        pairs = oriented_pairs(example.scene, example.nodes)
        nodes = np.asarray(example.nodes, dtype=np.int64)
        rows.append(edge_feature_array(example.scene.candidate_boxes(), nodes[pairs]))
    if not rows:
        raise ClusteringError("no edges to cluster")
    features = np.concatenate(rows)
    logger.info("clustering %d edges into %d types", len(features), k)
    return fit_kmeans(features, k, seed)


def _signature(graph: SceneGraph, pots: Potentials, truth: Sequence[int], spec: LossSpec) -> bytes:
    if spec.kind == LossKind.SSVM_HAMMING:
        augmented, _ = hamming_augmented(pots, truth, spec)
        return bytes(maximize(graph, augmented)[1])
    _, _, marginals = candidate_scores(graph, pots, spec.method)
    return marginals.labelings.tobytes()


def example_loss(
    example: PairwiseExample,
    params: PairwiseModelParams,
    spec: LossSpec,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Summed structured loss of one example and its parameter gradients.

    Args:
        example (PairwiseExample): The example.
        params (PairwiseModelParams): Model parameters.
        spec (LossSpec): The loss.
        mode (Mode): Train mode enables feature extractor dropout. Default: eval.
        rng (Optional[np.random.Generator]): Random stream for dropout.
        provider (Optional[FeatureProvider]): Candidate features.

    Returns:
        Tuple[float, Dict[str, ndarray]]: Loss and gradients keyed like `params.parameters()`.

    Raises:
        NonFiniteError: If the loss is NaN or infinite.
    """
    graph, pots, tapes = pairwise_forward(
        example.scene, params, example.nodes, example.truth, mode, rng, provider
    )
    loss, dpots = structured_loss(graph, pots, example.truth, spec)
    if not math.isfinite(loss):
        raise NonFiniteError(f"structured loss is {loss}", scene_id=example.scene.scene_id)
    grads, _ = pairwise_backward(params, tapes, dpots)
    return loss, grads


def pairwise_objective(
    examples: Sequence[PairwiseExample],
    params: PairwiseModelParams,
    spec: LossSpec,
    provider: Optional[FeatureProvider] = None,
) -> Callable[[], Tuple[float, Dict[str, np.ndarray], Hashable]]:
    """Mean loss per node over the examples, for gradient checking against live parameters.

    The returned callable re-reads the parameter arrays on every call and reports the argmax
    labelings and relu patterns as its smoothness signature.

    Args:
        examples (Sequence[PairwiseExample]): Examples.
        params (PairwiseModelParams): Live parameters.
        spec (LossSpec): The loss.
        provider (Optional[FeatureProvider]): Candidate features.

    Returns:
        Callable[[], Tuple[float, Dict[str, ndarray], Hashable]]: The objective.
    """
    count = max(1, sum(len(e.nodes) for e in examples))

    def objective() -> Tuple[float, Dict[str, np.ndarray], Hashable]:
        params.touch()
        total = 0.0
        grads = {name: np.zeros_like(value) for name, value in params.parameters().items()}
        signature = []
        for example in examples:
            graph, pots, tapes = pairwise_forward(
                example.scene, params, example.nodes, example.truth, Mode.EVAL, None, provider
            )
            loss, dpots = structured_loss(graph, pots, example.truth, spec)
            example_grads, _ = pairwise_backward(params, tapes, dpots)
            total += loss
            for name, value in example_grads.items():
                grads[name] += value
            signature.append(_signature(graph, pots, example.truth, spec))
            signature.append(relu_signature(tapes.extractor))
        return total / count, {k: v / count for k, v in grads.items()}, tuple(signature)

    return objective


def train_pairwise(
    examples: Sequence[PairwiseExample],
    params: PairwiseModelParams,
    config: PairwiseConfig,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[PairwiseModelParams, List[TraceRow]]:
    """Joint SGD training of the feature extractor, unary net and pairwise net.

    Each step takes `scenes_per_batch` examples, runs the forward pass, exact inference and
    the loss gradient per scene, backpropagates, and applies one momentum step to the mean
    gradient per node. The learning rate follows the epoch schedule of the config.

    Args:
        examples (Sequence[PairwiseExample]): Prepared training examples.
        params (PairwiseModelParams): Initial parameters; not modified.
        config (PairwiseConfig): Loss, optimizer and dropout settings.
        provider (Optional[FeatureProvider]): Candidate features.

    Returns:
        Tuple[PairwiseModelParams, List[TraceRow]]: Trained parameters and the loss trace.

    Raises:
        NonFiniteError: If a scene's loss or gradient is NaN or infinite.
    """
    params = deepcopy(params)
    usable = [e for e in examples if e.nodes]
    order_seed, dropout_seed = np.random.SeedSequence(config.rng_seed).spawn(2)
    order_rng = np.random.default_rng(order_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    mode = Mode.TRAIN if config.fe_dropout > 0.0 else Mode.EVAL
    state = SgdState()
    trace = []
    per_batch = config.sgd.scenes_per_batch
    logger.info("training pairwise model on %d scenes (%s)", len(usable), config.loss.kind.value)
    for epoch in range(config.sgd.epochs):
        learning_rate = config.sgd.learning_rate_at(epoch)
        order = order_rng.permutation(len(usable))
        epoch_losses = []
        for start in range(0, len(order), per_batch):
            batch = [usable[i] for i in order[start : start + per_batch]]
            count = sum(len(e.nodes) for e in batch)
            total = 0.0
            grads = {name: np.zeros_like(value) for name, value in params.parameters().items()}
            for example in batch:
                loss, example_grads = example_loss(
                    example, params, config.loss, mode, dropout_rng, provider
                )
                total += loss
                for name, value in example_grads.items():
                    grads[name] += value
            mean_loss = total / count
            mean_grads = {name: value / count for name, value in grads.items()}
            try:
                updated, state = sgd_step(
                    params.parameters(), mean_grads, state, config.sgd, learning_rate
                )
            except NonFiniteError as error:
                scene_ids = ", ".join(e.scene.scene_id for e in batch)
                raise NonFiniteError(f"{error} in batch of scenes {scene_ids}") from error
            params.load_parameters(updated)
            trace.append(TraceRow(len(trace), mean_loss, learning_rate))
            epoch_losses.append(mean_loss)
            logger.debug("pairwise step %d: loss %.5f", len(trace) - 1, mean_loss)
        logger.info(
            "pairwise epoch %d: mean loss %.4f, lr %g",
            epoch,
            float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            learning_rate,
        )
    return params, trace


def write_loss_trace(path: PathLike, trace: Sequence[TraceRow]) -> None:
    """Writes the loss trace as CSV with columns step, loss, learning_rate."""
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["step", "loss", "learning_rate"])
        for row in trace:
            writer.writerow([row.step, repr(row.loss), repr(row.learning_rate)])
