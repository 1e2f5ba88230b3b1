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

from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ctxdet.dataio.features import FeatureProvider, RecordFeatureProvider
from ctxdet.dataio.scenes import PathLike, SceneRecord
from ctxdet.exceptions import ConfigError, DimensionMismatchError, ModelFormatError
from ctxdet.graph.clustering import EdgeClusterModel
from ctxdet.graph.scene_graph import DEFAULT_NODES, MAX_NODES, SceneGraph, build_scene_graph
from ctxdet.inference.potentials import Potentials
from ctxdet.localmodel.local import LocalModel, feature_extractor
from ctxdet.nets.dense import (
    Activation,
    DenseLayer,
    DenseNet,
    InputNormalizer,
    Mode,
    Tape,
    backward,
    forward,
    init_dense_net,
)
from ctxdet.nets.optim import SgdConfig
from ctxdet.nets.serialization import (
    load_model,
    net_from_arrays,
    net_to_arrays,
    normalizer_from_arrays,
    normalizer_to_arrays,
    save_model,
)
from ctxdet.structloss.losses import LossSpec

MODEL_KIND = "pairwise"
_NETS = ("extractor", "unary", "pairwise")


def _default_pairwise_sgd() -> SgdConfig:
    return SgdConfig(
        learning_rate=0.01,
        momentum=0.9,
        weight_decay=0.000005,
        batch_size=64,
        scenes_per_batch=4,
        epochs=8,
        lr_drop_after=4,
    )


@dataclass(frozen=True)
class PairwiseConfig:
    nodes: int = DEFAULT_NODES
    clusters: int = 20
    truth_iou: float = 0.5
    fe_dropout: float = 0.0
    loss: LossSpec = field(default_factory=LossSpec)
    sgd: SgdConfig = field(default_factory=_default_pairwise_sgd)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.nodes <= MAX_NODES:
            raise ConfigError(f"pairwise: nodes must lie in [1, {MAX_NODES}]")
        if self.clusters < 1:
            raise ConfigError("pairwise: clusters must be positive")
        if not 0.0 <= self.fe_dropout < 1.0:
            raise ConfigError("pairwise: fe_dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "PairwiseConfig":
        """Builds a config from a mapping with optional `sgd` and `loss` sub-mappings.

        Args:
            values (Dict[str, Any]): Field values.

        Returns:
            PairwiseConfig: The validated config.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"pairwise: unknown keys {sorted(unknown)}")
        converted = dict(values)
        base = cls()
        if "sgd" in converted:
            converted["sgd"] = SgdConfig.from_dict(converted["sgd"], base.sgd)
        try:
            if "loss" in converted:
                converted["loss"] = LossSpec(**converted["loss"])
            return replace(base, **converted)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"pairwise: {error}") from error


@dataclass
class PairwiseModelParams:
    """The feature extractor, unary net, pairwise net and edge cluster model."""

    normalizer: InputNormalizer
    extractor: DenseNet
    unary: DenseNet
    pairwise: DenseNet
    clusters: EdgeClusterModel

    def __post_init__(self) -> None:
        width = self.extractor.output_dim
        if self.unary.input_dim != width or self.unary.output_dim != 1:
            raise DimensionMismatchError(f"unary net must map {width} features to 1 output")
        if self.pairwise.input_dim != 2 * width:
            raise DimensionMismatchError(f"pairwise net must read {2 * width} inputs")
        if self.pairwise.output_dim != self.clusters.num_clusters:
            raise DimensionMismatchError("pairwise net needs one output per edge cluster")

    @property
    def feature_dim(self) -> int:
        return self.extractor.output_dim

    def nets(self) -> Dict[str, DenseNet]:
        return {"extractor": self.extractor, "unary": self.unary, "pairwise": self.pairwise}

    def parameters(self) -> Dict[str, np.ndarray]:
        """Dict[str, ndarray]: Live parameter arrays keyed `<net>.<layer>.<weight|bias>`."""
        return {
            f"{prefix}.{name}": value
            for prefix, net in self.nets().items()
            for name, value in net.parameters().items()
        }

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for prefix, net in self.nets().items():
            net.load_parameters(
                {
                    key[len(prefix) + 1 :]: value
                    for key, value in params.items()
                    if key.startswith(prefix + ".")
                }
            )

    def touch(self) -> None:
        for net in self.nets().values():
            net.touch()


def init_pairwise_params(
    local_model: LocalModel,
    cluster_model: EdgeClusterModel,
    config: PairwiseConfig,
    rng: np.random.Generator,
) -> PairwiseModelParams:
    """Feature extractor copied from the local model; unary and pairwise nets Gaussian.

    Args:
        local_model (LocalModel): Trained local model.
        cluster_model (EdgeClusterModel): Edge typing model.
        config (PairwiseConfig): Pairwise settings; fe_dropout replaces the copied rates.
        rng (np.random.Generator): Random stream for the new weights.

    Returns:
        PairwiseModelParams: The initial parameters.
    """
    extractor, normalizer = feature_extractor(local_model)
    extractor = DenseNet(
        [
            DenseLayer(layer.weight, layer.bias, layer.activation, config.fe_dropout)
            for layer in extractor.layers
        ]
    )
    width = extractor.output_dim
    unary = init_dense_net([width, 1], [Activation.IDENTITY], rng)
    pairwise = init_dense_net([2 * width, cluster_model.num_clusters], [Activation.IDENTITY], rng)
    return PairwiseModelParams(normalizer, extractor, unary, pairwise, cluster_model)


@dataclass
class PairwiseTapes:
    extractor: Tape
    unary: Tape
    pairwise: Tape
    graph: SceneGraph


def pairwise_forward(
    scene: SceneRecord,
    params: PairwiseModelParams,
    nodes: Sequence[int],
    truth: Optional[Sequence[int]] = None,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[SceneGraph, Potentials, PairwiseTapes]:
    """Potentials of the scene graph over the given nodes.

    Each node's descriptor goes through the feature extractor; the unary net maps a feature
    to the unary potential and the pairwise net maps the concatenated features of an oriented
    edge to one potential per edge type, of which the edge's own type is used.

    Args:
        scene (SceneRecord): The scene.
        params (PairwiseModelParams): Model parameters.
        nodes (Sequence[int]): Candidate indices forming the graph.
        truth (Optional[Sequence[int]]): Node labels stored on the graph.
        mode (Mode): Train mode enables feature extractor dropout. Default: eval.
        rng (Optional[np.random.Generator]): Random stream for dropout.
        provider (Optional[FeatureProvider]): Candidate features. Default: record descriptors.

    Returns:
        Tuple[SceneGraph, Potentials, PairwiseTapes]: Graph, potentials and the tapes needed
        by pairwise_backward.
    """
    provider = provider or RecordFeatureProvider()
    descriptors = provider.candidate_features(scene)
    node_index = np.asarray(nodes, dtype=np.int64)
    if len(node_index) and descriptors.shape[1] != params.extractor.input_dim:
        raise DimensionMismatchError(
            f"scene '{scene.scene_id}' has descriptors of width {descriptors.shape[1]}"
        )
    inputs = params.normalizer.apply(
        descriptors[node_index].reshape(len(node_index), params.extractor.input_dim)
    )
    features, extractor_tape = forward(params.extractor, inputs, mode, rng)
    unary, unary_tape = forward(params.unary, features, Mode.EVAL)
    graph = build_scene_graph(scene, nodes, params.clusters, truth)
    edges = graph.edge_array
    pair_inputs = np.concatenate([features[edges[:, 0]], features[edges[:, 1]]], axis=1)
    pair_outputs, pairwise_tape = forward(params.pairwise, pair_inputs, Mode.EVAL)
    pots = Potentials(
        unary[:, 0], pair_outputs[np.arange(len(edges)), graph.cluster_array].reshape(-1)
    )
    return graph, pots, PairwiseTapes(extractor_tape, unary_tape, pairwise_tape, graph)


def pairwise_backward(
    params: PairwiseModelParams, tapes: PairwiseTapes, dloss_dpots: Potentials
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Parameter gradients from the gradient of the loss with respect to the potentials.

    A node's feature gradient collects its unary path and, for every incident edge, the half
    of the pairwise net's input gradient that belongs to the node's side of the edge.

    Args:
        params (PairwiseModelParams): Model parameters the tapes were recorded with.
        tapes (PairwiseTapes): Tapes from pairwise_forward.
        dloss_dpots (Potentials): Loss gradient per potential.

    Returns:
        Tuple[Dict[str, ndarray], ndarray]: Gradients keyed like `params.parameters()` and
        the gradient with respect to each node's feature vector.

    Raises:
        StaleTapeError: If the parameters changed since the forward pass.
    """
    graph = tapes.graph
    edges = graph.edge_array
    width = params.feature_dim
    unary_grads, feature_grad = backward(
        params.unary, tapes.unary, dloss_dpots.unary.reshape(-1, 1)
    )
    pair_output_grad = np.zeros((len(edges), params.pairwise.output_dim))
    pair_output_grad[np.arange(len(edges)), graph.cluster_array] = dloss_dpots.pairwise
    pairwise_grads, pair_input_grad = backward(params.pairwise, tapes.pairwise, pair_output_grad)
    feature_grad = np.array(feature_grad, dtype=np.float64).reshape(graph.size, width)
    np.add.at(feature_grad, edges[:, 0], pair_input_grad[:, :width])
    np.add.at(feature_grad, edges[:, 1], pair_input_grad[:, width:])
    extractor_grads, _ = backward(params.extractor, tapes.extractor, feature_grad)
    grads = {}
    for prefix, part in zip(_NETS, (extractor_grads, unary_grads, pairwise_grads)):
        grads.update({f"{prefix}.{name}": value for name, value in part.items()})
    return grads, feature_grad


def save_pairwise_model(
    path: PathLike, params: PairwiseModelParams, config: PairwiseConfig
) -> None:
    arrays = {}
    header: Dict[str, Any] = {"kind": MODEL_KIND}
    for prefix, net in params.nets().items():
        meta, net_arrays = net_to_arrays(net, prefix)
        header[prefix] = meta
        arrays.update(net_arrays)
    arrays.update(normalizer_to_arrays(params.normalizer, "normalizer"))
    arrays["clusters.centroids"] = params.clusters.centroids
    arrays["clusters.mean"] = params.clusters.mean
    arrays["clusters.std"] = params.clusters.std
    header["config"] = {
        "nodes": config.nodes,
        "clusters": config.clusters,
        "truth_iou": config.truth_iou,
        "fe_dropout": config.fe_dropout,
        "loss": config.loss.kind.value,
        "rng_seed": config.rng_seed,
    }
    save_model(path, header, arrays)


def load_pairwise_model(path: PathLike) -> Tuple[PairwiseModelParams, Dict[str, Any]]:
    """Loads a model written by save_pairwise_model.

    Args:
        path (PathLike): Model file.

    Returns:
        Tuple[PairwiseModelParams, Dict[str, Any]]: Parameters and the stored config summary.

    Raises:
        ModelFormatError: If the file holds another kind of model.
    """
    header, arrays = load_model(path)
    if header.get("kind") != MODEL_KIND:
        raise ModelFormatError(f"{path} does not hold a pairwise model")
    clusters = EdgeClusterModel(
        arrays["clusters.centroids"], arrays["clusters.mean"], arrays["clusters.std"]
    )
    nets = {prefix: net_from_arrays(header[prefix], arrays, prefix) for prefix in _NETS}
    params = PairwiseModelParams(
        normalizer_from_arrays(arrays, "normalizer"),
        nets["extractor"],
        nets["unary"],
        nets["pairwise"],
        clusters,
    )
    return params, header["config"]
