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

import math

import numpy as np
import pytest
from utils_for_testing import make_scene

from ctxdet.exceptions import InferenceSizeError, NonFiniteError, SceneValidationError
from ctxdet.geom.boxes import BoundingBox
from ctxdet.graph.clustering import EdgeClusterModel
from ctxdet.graph.scene_graph import (
    SceneGraph,
    build_scene_graph,
    edge_features,
    node_truth,
    orient,
    oriented_pairs,
    phi,
    select_candidates,
)


def test_complete_graph() -> None:
    graph = SceneGraph.complete(4)
    assert graph.edges == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert graph.clusters == (0,) * 6
    assert graph.edge_array.shape == (6, 2)
    assert SceneGraph.complete(1).edge_array.shape == (0, 2)


@pytest.mark.parametrize(
    "edges, clusters, truth",
    [
        (((0, 0),), (0,), None),
        (((0, 1), (1, 0)), (0, 0), None),
        (((0, 3),), (0,), None),
        (((0, 1),), (2,), None),
        (((0, 1),), (0, 0), None),
        (((0, 1),), (0,), (1, 2, 0)),
    ],
)
def test_invalid_graphs(edges, clusters, truth) -> None:
    with pytest.raises(ValueError):
        SceneGraph((0, 1, 2), edges, clusters, num_clusters=2, truth=truth)


def test_graphs_need_not_be_complete() -> None:
    graph = SceneGraph((4, 7, 9), ((2, 0),), (1,), num_clusters=2)
    assert graph.size == 3


def _row_scene():
    return make_scene(
        candidates=[(0, 0, 10, 10), (1, 0, 10, 10), (30, 0, 10, 10), (60, 0, 10, 10)],
    )


def test_select_candidates_runs_nms_then_truncates() -> None:
    scene = _row_scene()
    assert select_candidates(scene, [0.9, 0.95, 0.1, 0.5]) == (1, 3, 2)
    assert select_candidates(scene, [0.9, 0.95, 0.1, 0.5], m=2) == (1, 3)


def test_select_candidates_errors() -> None:
    scene = _row_scene()
    with pytest.raises(InferenceSizeError):
        select_candidates(scene, [0.0] * 4, m=21)
    with pytest.raises(NonFiniteError):
        select_candidates(scene, [0.0, np.nan, 0.0, 0.0])
    with pytest.raises(SceneValidationError):
        select_candidates(scene, [0.0] * 3)


def test_edge_features() -> None:
    features = edge_features(BoundingBox(0, 0, 10, 10), BoundingBox(20, 0, 20, 20))
    np.testing.assert_allclose(features, [math.log(0.5), math.log(3.5), math.log(1.5)])
    np.testing.assert_allclose(phi(np.array([-2.0, 0.0])), [-math.log(3.0), 0.0])


def test_orientation_puts_left_box_first() -> None:
    boxes = np.array([[50.0, 0, 10, 10], [0.0, 0, 10, 10], [50.0, -5, 10, 10]])
    assert orient(boxes, 0, 1) == (1, 0)
    assert orient(boxes, 1, 0) == (1, 0)
    assert orient(boxes, 0, 2) == (2, 0)


def test_oriented_pairs_use_positions() -> None:
    scene = _row_scene()
    np.testing.assert_array_equal(oriented_pairs(scene, [2, 0]), [[1, 0]])
    np.testing.assert_array_equal(oriented_pairs(scene, [0, 2, 3]), [[0, 1], [0, 2], [1, 2]])


def test_build_scene_graph_keeps_node_order() -> None:
    scene = _row_scene()
    model = EdgeClusterModel(
        np.array([[0.0, -1.0, 0.0], [0.0, 1.0, 0.0]]), np.zeros(3), np.ones(3)
    )
    graph = build_scene_graph(scene, [3, 0], model, truth=[1, 0])
    assert graph.nodes == (3, 0)
    assert graph.edges == ((1, 0),)
    assert graph.clusters == (1,)
    assert graph.truth == (1, 0)
    assert graph.num_clusters == 2


def test_node_truth() -> None:
    scene = make_scene(
        truths=[((0, 0, 10, 10), True)],
        candidates=[(0, 0, 10, 10), (5, 0, 10, 10), (0, 0, 10, 20)],
    )
    assert node_truth(scene, [0, 1, 2]) == (1, 0, 1)
    assert node_truth(scene, [1], threshold=0.3) == (1,)
    assert node_truth(make_scene(candidates=[(0, 0, 10, 10)]), [0]) == (0,)
