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

import numpy as np
import pytest
from utils_for_testing import make_scene

from ctxdet.exceptions import ConfigError, DimensionMismatchError, ModelFormatError, StaleTapeError
from ctxdet.graph.clustering import EdgeClusterModel
from ctxdet.inference.potentials import Potentials
from ctxdet.localmodel.local import LocalConfig, LocalModel, save_local_model
from ctxdet.nets.dense import Activation, InputNormalizer, Mode, forward, init_dense_net
from ctxdet.nets.gradcheck import check_gradients, resample_until_smooth
from ctxdet.structloss.losses import LossKind, LossSpec
from ctxdet.structloss.model import (
    PairwiseConfig,
    PairwiseModelParams,
    init_pairwise_params,
    load_pairwise_model,
    pairwise_backward,
    pairwise_forward,
    save_pairwise_model,
)
from ctxdet.structloss.training import PairwiseExample, pairwise_objective

WIDTH = 6


def _scene(rng, count=5):
    candidates = [(30.0 * i, 10.0 * (i % 2), 20.0, 20.0 + i) for i in range(count)]
    return make_scene(
        "graph",
        truths=[((0.0, 0.0, 20.0, 20.0), False), ((60.0, 0.0, 20.0, 22.0), False)],
        candidates=candidates,
        descriptors=rng.normal(size=(count, 4)),
        width=200.0,
        height=60.0,
    )


def _params(rng, fe_dropout=0.0, std=0.5):
    local = LocalModel(
        InputNormalizer.identity(4),
        init_dense_net([4, WIDTH, 2], [Activation.RELU, Activation.IDENTITY], rng, std=std),
    )
    clusters = EdgeClusterModel(rng.normal(size=(3, 3)), np.zeros(3), np.ones(3))
    params = init_pairwise_params(local, clusters, PairwiseConfig(fe_dropout=fe_dropout), rng)
    for net in (params.unary, params.pairwise):
        net.load_parameters(
            {k: v + rng.normal(0.0, std, v.shape) for k, v in net.parameters().items()}
        )
    return local, params


def test_init_copies_local_hidden_layers(rng) -> None:
    local, params = _params(rng, fe_dropout=0.25)
    assert len(params.extractor.layers) == 1
    np.testing.assert_array_equal(params.extractor.layers[0].weight, local.net.layers[0].weight)
    assert params.extractor.layers[0].dropout == 0.25
    assert params.extractor.layers[0].weight is not local.net.layers[0].weight
    assert (params.unary.input_dim, params.unary.output_dim) == (WIDTH, 1)
    assert (params.pairwise.input_dim, params.pairwise.output_dim) == (2 * WIDTH, 3)
    assert params.feature_dim == WIDTH


def test_params_check_dimensions(rng) -> None:
    _, params = _params(rng)
    wrong = init_dense_net([2 * WIDTH, 2], [Activation.IDENTITY], rng)
    with pytest.raises(DimensionMismatchError):
        PairwiseModelParams(
            params.normalizer, params.extractor, params.unary, wrong, params.clusters
        )


def test_forward_potentials(rng) -> None:
    scene = _scene(rng)
    _, params = _params(rng)
    graph, pots, _ = pairwise_forward(scene, params, (3, 0, 4), truth=(0, 1, 0))
    assert graph.nodes == (3, 0, 4)
    assert graph.truth == (0, 1, 0)
    features, _ = forward(params.extractor, scene.descriptors()[[3, 0, 4]])
    unary, _ = forward(params.unary, features)
    np.testing.assert_allclose(pots.unary, unary[:, 0])
    for (p, q), k, value in zip(graph.edges, graph.clusters, pots.pairwise):
        output, _ = forward(params.pairwise, np.concatenate([features[p], features[q]]))
        assert value == pytest.approx(output[k])


def test_forward_rejects_other_descriptor_width(rng) -> None:
    _, params = _params(rng)
    scene = make_scene("wide", candidates=[(0, 0, 10, 10)], descriptors=np.zeros((1, 5)))
    with pytest.raises(DimensionMismatchError):
        pairwise_forward(scene, params, (0,))


def test_backward_rejects_stale_tapes(rng) -> None:
    scene = _scene(rng)
    _, params = _params(rng)
    graph, _, tapes = pairwise_forward(scene, params, (0, 1, 2))
    params.touch()
    zero = Potentials(np.zeros(3), np.zeros(len(graph.edges)))
    with pytest.raises(StaleTapeError):
        pairwise_backward(params, tapes, zero)


@pytest.mark.parametrize("kind", list(LossKind))
def test_end_to_end_gradient(kind) -> None:
    spec = LossSpec(kind)

    def check(attempt):
        rng = np.random.default_rng(100 + attempt)
        scene = _scene(rng)
        _, params = _params(rng)
        example = PairwiseExample(scene, (0, 1, 2, 3, 4), (1, 0, 1, 0, 0))
        objective = pairwise_objective([example], params, spec)
        return check_gradients(params.parameters(), objective, tolerance=1e-4, max_entries=8)

    report = resample_until_smooth(check)
    assert report.passed, report


def test_train_mode_drops_features(rng) -> None:
    scene = _scene(rng)
    _, params = _params(rng, fe_dropout=0.5)
    _, eval_pots, _ = pairwise_forward(scene, params, (0, 1, 2, 3, 4))
    _, train_pots, tapes = pairwise_forward(
        scene, params, (0, 1, 2, 3, 4), mode=Mode.TRAIN, rng=np.random.default_rng(0)
    )
    assert tapes.extractor.masks[0] is not None
    assert not np.allclose(eval_pots.unary, train_pots.unary)


def test_model_file_restores_potentials(tmp_path, rng) -> None:
    scene = _scene(rng)
    _, params = _params(rng)
    config = PairwiseConfig(clusters=3, loss=LossSpec(LossKind.SSVM_HAMMING))
    path = tmp_path / "pairwise.model"
    save_pairwise_model(path, params, config)
    restored, summary = load_pairwise_model(path)
    assert summary["loss"] == "ssvm_hamming"
    assert summary["clusters"] == 3
    _, expected, _ = pairwise_forward(scene, params, (0, 2, 4))
    _, actual, _ = pairwise_forward(scene, restored, (0, 2, 4))
    np.testing.assert_array_equal(actual.unary, expected.unary)
    np.testing.assert_array_equal(actual.pairwise, expected.pairwise)


def test_loading_another_model_kind(tmp_path, rng) -> None:
    local, _ = _params(rng)
    path = tmp_path / "local.model"
    save_local_model(path, local, LocalConfig())
    with pytest.raises(ModelFormatError):
        load_pairwise_model(path)


def test_config_from_dict() -> None:
    config = PairwiseConfig.from_dict(
        {"nodes": 8, "loss": {"kind": "ssvm_hamming", "weight_negative": 2.0}, "sgd": {"epochs": 2}}
    )
    assert config.nodes == 8
    assert config.loss.kind == LossKind.SSVM_HAMMING
    assert config.loss.weight_negative == 2.0
    assert config.sgd.epochs == 2
    assert config.sgd.lr_drop_after == 4


@pytest.mark.parametrize(
    "values",
    [{"nodes": 21}, {"nodes": 0}, {"clusters": 0}, {"extra": 1}, {"loss": {"kind": "hinge"}}],
)
def test_invalid_config(values) -> None:
    with pytest.raises(ConfigError):
        PairwiseConfig.from_dict(values)
