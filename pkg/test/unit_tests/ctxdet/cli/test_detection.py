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

from ctxdet.cli.config import DetectConfig
from ctxdet.cli.detection import (
    DetectionMode,
    ModelBundle,
    detect_all,
    final_scores,
    scene_components,
    scored_detections,
)
from ctxdet.exceptions import MissingModelError
from ctxdet.geom.grid import NUM_CELLS
from ctxdet.globalmodel.calibrate import ComponentScores
from ctxdet.globalmodel.combine import CombineParams, filter_candidates
from ctxdet.globalmodel.scorer import GlobalScorer, candidate_cell_scores
from ctxdet.graph.scene_graph import select_candidates
from ctxdet.localmodel.local import score_candidates
from ctxdet.nets.dense import Activation, InputNormalizer, init_dense_net
from ctxdet.structloss.model import PairwiseConfig, init_pairwise_params
from ctxdet.structloss.training import fit_edge_clusters, prepare_pairwise_examples


@pytest.fixture(scope="module")
def models(synthetic_splits, trained_local):
    train, _, _ = synthetic_splits
    rng = np.random.default_rng(7)
    scene_inputs = np.stack([scene.scene_descriptor for scene in train])
    net = init_dense_net(
        [scene_inputs.shape[1], 8, 2 * NUM_CELLS], [Activation.RELU, Activation.IDENTITY], rng
    )
    scorer = GlobalScorer(InputNormalizer.fit(scene_inputs), net)
    examples = prepare_pairwise_examples(train[:6], trained_local, m=6)
    config = PairwiseConfig(nodes=6, clusters=3)
    clusters = fit_edge_clusters(examples, config.clusters, seed=0)
    pairwise = init_pairwise_params(trained_local, clusters, config, rng)
    return ModelBundle(trained_local, scorer, pairwise)


def test_missing_models(models) -> None:
    with pytest.raises(MissingModelError, match="local"):
        ModelBundle().require(DetectionMode.LOCAL)
    local_only = ModelBundle(models.local)
    local_only.require(DetectionMode.LOCAL)
    with pytest.raises(MissingModelError, match="pairwise"):
        local_only.require(DetectionMode.LOCAL_PAIRWISE)
    with pytest.raises(MissingModelError, match="global"):
        local_only.require(DetectionMode.LOCAL_GLOBAL)
    with pytest.raises(MissingModelError, match="global"):
        local_only.require(DetectionMode.LOCAL, filtering=True)
    models.require(DetectionMode.FULL, filtering=True)


def test_local_mode(synthetic_splits, models) -> None:
    scene = synthetic_splits[1][0]
    result = scene_components(scene, models, DetectionMode.LOCAL, DetectConfig())
    assert result.scene_id == scene.scene_id
    assert result.boxes == tuple(c.box for c in scene.candidates)
    np.testing.assert_array_equal(result.components.local, score_candidates(models.local, scene))
    assert result.components.pairwise is None
    assert result.components.global_cell is None
    assert result.cell_scores is None
    assert result.box_array().shape == (len(scene.candidates), 4)


def test_pairwise_scores_cover_graph_nodes(synthetic_splits, models) -> None:
    scene = synthetic_splits[1][0]
    config = DetectConfig(nodes=5)
    result = scene_components(scene, models, DetectionMode.LOCAL_PAIRWISE, config)
    nodes = select_candidates(scene, result.components.local, 5)
    finite = np.flatnonzero(np.isfinite(result.components.pairwise))
    assert set(finite) == set(nodes)
    scores = final_scores(result.components, CombineParams(alpha=0.5, beta=1.0))
    outside = np.setdiff1d(np.arange(len(scene.candidates)), finite)
    np.testing.assert_array_equal(scores[outside], result.components.local[outside])


def test_global_filtering(synthetic_splits, models) -> None:
    scene = synthetic_splits[1][0]
    config = DetectConfig(keep_fraction=0.5)
    result = scene_components(scene, models, DetectionMode.LOCAL, config)
    cells = models.global_scorer.cell_scores(scene)
    kept = filter_candidates(candidate_cell_scores(scene, cells), 0.5)
    assert len(result.boxes) == math.ceil(0.5 * len(scene.candidates))
    assert result.boxes == tuple(scene.candidates[i].box for i in kept)
    assert result.components.global_cell is None
    np.testing.assert_array_equal(result.cell_scores, cells)

    full = scene_components(scene, models, DetectionMode.FULL, config)
    assert full.boxes == result.boxes
    np.testing.assert_array_equal(
        full.components.global_cell, candidate_cell_scores(scene, cells)[list(kept)]
    )


def test_final_scores() -> None:
    components = ComponentScores(
        np.array([1.0, 2.0]), np.array([3.0, np.nan]), np.array([0.0, 4.0])
    )
    params = CombineParams(alpha=0.5, beta=1.0, gamma=0.5)
    np.testing.assert_allclose(final_scores(components, params), [1.5, 3.0])
    local_only = ComponentScores(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(final_scores(local_only, params), [1.0, 2.0])


def test_threads_keep_scene_order(synthetic_splits, models) -> None:
    scenes = synthetic_splits[2]
    serial = detect_all(scenes, models, DetectionMode.FULL, DetectConfig(nodes=4))
    threaded = detect_all(scenes, models, "full", DetectConfig(nodes=4), threads=3)
    assert [r.scene_id for r in threaded] == [s.scene_id for s in scenes]
    params = CombineParams(alpha=0.7, beta=0.5, gamma=0.8)
    assert scored_detections(serial, params) == scored_detections(threaded, params)


def test_detect_all_checks_models(synthetic_splits, models) -> None:
    with pytest.raises(MissingModelError):
        detect_all(synthetic_splits[2], ModelBundle(models.local), "full", DetectConfig())
