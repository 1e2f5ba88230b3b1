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
import math

import numpy as np
import pytest

from ctxdet.exceptions import ClusteringError
from ctxdet.graph.scene_graph import node_truth
from ctxdet.nets.optim import SgdConfig
from ctxdet.structloss.losses import LossKind, LossSpec
from ctxdet.structloss.model import PairwiseConfig, init_pairwise_params
from ctxdet.structloss.training import (
    PairwiseExample,
    TraceRow,
    fit_edge_clusters,
    prepare_pairwise_examples,
    train_pairwise,
    write_loss_trace,
)


@pytest.fixture(scope="module")
def examples(synthetic_splits, trained_local):
    train, _, _ = synthetic_splits
    return prepare_pairwise_examples(train[:8], trained_local, m=6)


def test_examples_follow_selection(examples) -> None:
    assert len(examples) == 8
    for example in examples:
        assert len(example.nodes) <= 6
        assert len(set(example.nodes)) == len(example.nodes)
        assert example.truth == node_truth(example.scene, example.nodes, 0.5)


def test_edge_clusters(examples) -> None:
    model = fit_edge_clusters(examples, 4, seed=0)
    assert model.num_clusters == 4
    assert model.centroids.shape == (4, 3)


def test_edge_clusters_need_edges(examples) -> None:
    lonely = [PairwiseExample(e.scene, e.nodes[:1], e.truth[:1]) for e in examples]
    with pytest.raises(ClusteringError):
        fit_edge_clusters(lonely, 2, seed=0)


@pytest.mark.parametrize("kind", list(LossKind))
def test_training_steps(examples, trained_local, kind) -> None:
    config = PairwiseConfig(
        nodes=6,
        clusters=4,
        loss=LossSpec(kind),
        sgd=SgdConfig(learning_rate=0.01, scenes_per_batch=3, epochs=2, lr_drop_after=1),
    )
    clusters = fit_edge_clusters(examples, 4, seed=0)
    params = init_pairwise_params(trained_local, clusters, config, np.random.default_rng(0))
    before = {k: v.copy() for k, v in params.parameters().items()}
    trained, trace = train_pairwise(examples, params, config)
    usable = sum(1 for e in examples if e.nodes)
    assert len(trace) == 2 * math.ceil(usable / 3)
    assert [row.step for row in trace] == list(range(len(trace)))
    assert all(math.isfinite(row.loss) and row.loss >= 0.0 for row in trace)
    assert trace[0].learning_rate == 0.01
    assert trace[-1].learning_rate == pytest.approx(0.001)
    for name, value in params.parameters().items():
        np.testing.assert_array_equal(value, before[name])
    assert any(
        not np.array_equal(value, before[name]) for name, value in trained.parameters().items()
    )


def test_training_is_reproducible(examples, trained_local) -> None:
    config = PairwiseConfig(
        nodes=6, clusters=4, fe_dropout=0.3, sgd=SgdConfig(scenes_per_batch=4, epochs=1)
    )
    clusters = fit_edge_clusters(examples, 4, seed=0)
    runs = []
    for _ in range(2):
        params = init_pairwise_params(trained_local, clusters, config, np.random.default_rng(0))
        runs.append(train_pairwise(examples, params, config)[1])
    assert runs[0] == runs[1]


def test_write_loss_trace(tmp_path) -> None:
    path = tmp_path / "trace.csv"
    write_loss_trace(path, [TraceRow(0, 0.5, 0.01), TraceRow(1, 0.25, 0.001)])
    with open(path, newline="") as stream:
        rows = list(csv.reader(stream))
    assert rows == [["step", "loss", "learning_rate"], ["0", "0.5", "0.01"], ["1", "0.25", "0.001"]]
