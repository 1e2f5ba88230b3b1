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
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctxdet.cli.config import DetectConfig
from ctxdet.dataio.features import FeatureProvider, RecordFeatureProvider
from ctxdet.dataio.scenes import Detection, SceneRecord
from ctxdet.exceptions import MissingModelError
from ctxdet.geom.boxes import BoundingBox
from ctxdet.globalmodel.calibrate import ComponentScores
from ctxdet.globalmodel.combine import (
    CombineParams,
    combine_local_pairwise,
    combine_with_global,
    filter_candidates,
)
from ctxdet.globalmodel.scorer import GlobalScorer, candidate_cell_scores
from ctxdet.graph.scene_graph import select_candidates
from ctxdet.inference.scores import candidate_scores
from ctxdet.localmodel.local import LocalModel, score_candidates
from ctxdet.structloss.model import PairwiseModelParams, pairwise_forward

logger = logging.getLogger(__name__)


class DetectionMode(str, Enum):
    LOCAL = "local"
    LOCAL_GLOBAL = "local+global"
    LOCAL_PAIRWISE = "local+pairwise"
    FULL = "full"

    @property
    def uses_pairwise(self) -> bool:
        return self in (DetectionMode.LOCAL_PAIRWISE, DetectionMode.FULL)

    @property
    def uses_global(self) -> bool:
        return self in (DetectionMode.LOCAL_GLOBAL, DetectionMode.FULL)


@dataclass(frozen=True)
class ModelBundle:
    """The trained models available to a detection run; any of them may be absent."""

    local: Optional[LocalModel] = None
    global_scorer: Optional[GlobalScorer] = None
    pairwise: Optional[PairwiseModelParams] = None

    def require(self, mode: DetectionMode, filtering: bool = False) -> None:
        """Checks that every model the mode needs is present.

        Args:
            mode (DetectionMode): The detection mode.
            filtering (bool): Whether global filtering is requested. Default: False.

        Raises:
            MissingModelError: Naming the first missing model.
        """
        if self.local is None:
            raise MissingModelError("every detection mode needs a local model (--local-model)")
        if mode.uses_pairwise and self.pairwise is None:
            raise MissingModelError(f"mode {mode.value} needs a pairwise model (--pairwise-model)")
        if (mode.uses_global or filtering) and self.global_scorer is None:
            raise MissingModelError(f"mode {mode.value} needs a global model (--global-model)")


@dataclass(frozen=True)
class SceneDetections:
    """
    The scored candidates of one scene. `boxes` holds the candidates left after global
    filtering; `components` aligns with it. `cell_scores` is None without a global model.
    """

    scene_id: str
    boxes: Tuple[BoundingBox, ...]
    components: ComponentScores
    cell_scores: Optional[np.ndarray] = None

    def box_array(self) -> np.ndarray:
        if not self.boxes:
            return np.zeros((0, 4))
        return np.array([[b.x, b.y, b.w, b.h] for b in self.boxes], dtype=np.float64)

    def detections(self, scores: np.ndarray) -> List[Detection]:
        return [(box, float(score)) for box, score in zip(self.boxes, scores)]


def scene_components(
    scene: SceneRecord,
    models: ModelBundle,
    mode: DetectionMode,
    config: DetectConfig,
    provider: Optional[FeatureProvider] = None,
) -> SceneDetections:
    """Runs every model the mode needs on one scene.

    The global model (when used) first scores the grid and, for keep fractions below one,
    filters the candidates by their matched cell scores. The local model scores the remaining
    candidates; the pairwise model scores the NMS survivors that form its graph and leaves NaN
    elsewhere.

    Args:
        scene (SceneRecord): The scene.
        models (ModelBundle): The trained models.
        mode (DetectionMode): Which models contribute.
        config (DetectConfig): Node count, inference method and keep fraction.
        provider (Optional[FeatureProvider]): Input features. Default: record descriptors.

    Returns:
        SceneDetections: Boxes and per-model scores.
    """
    provider = provider or RecordFeatureProvider()
    filtering = config.keep_fraction < 1.0
    cells = None
    global_cell = None
    if mode.uses_global or filtering:
        cells = models.global_scorer.cell_scores(scene, provider)
        global_cell = candidate_cell_scores(scene, cells)
        if filtering:
            kept = filter_candidates(global_cell, config.keep_fraction)
            scene = replace(scene, candidates=tuple(scene.candidates[i] for i in kept))
            global_cell = global_cell[list(kept)]
    local = score_candidates(models.local, scene, provider)
    pairwise = None
    if mode.uses_pairwise:
        pairwise = np.full(len(local), np.nan)
        if len(local):
            nodes = select_candidates(scene, local, config.nodes)
            graph, pots, _ = pairwise_forward(scene, models.pairwise, nodes, provider=provider)
            scores, _, _ = candidate_scores(graph, pots, config.method)
            pairwise[list(graph.nodes)] = scores
    return SceneDetections(
        scene.scene_id,
        tuple(c.box for c in scene.candidates),
        ComponentScores(local, pairwise, global_cell if mode.uses_global else None),
        cells,
    )


def final_scores(components: ComponentScores, params: CombineParams) -> np.ndarray:
    """Combines the available component scores into one score per candidate.

    Args:
        components (ComponentScores): Scores from the models the mode used.
        params (CombineParams): Combination weights.

    Returns:
        ndarray: The final detection scores.
    """
    scores = combine_local_pairwise(components.local, components.pairwise, params)
    if components.global_cell is not None:
        scores = combine_with_global(scores, components.global_cell, params)
    return np.asarray(scores, dtype=np.float64)


def detect_all(
    scenes: Sequence[SceneRecord],
    models: ModelBundle,
    mode: DetectionMode,
    config: DetectConfig,
    threads: int = 1,
    provider: Optional[FeatureProvider] = None,
) -> List[SceneDetections]:
    """scene_components over many scenes, in input order.

    Args:
        scenes (Sequence[SceneRecord]): The scenes.
        models (ModelBundle): The trained models.
        mode (DetectionMode): Which models contribute.
        config (DetectConfig): Detection settings.
        threads (int): Worker threads. Default: 1.
        provider (Optional[FeatureProvider]): Input features. Default: record descriptors.

    Returns:
        List[SceneDetections]: One entry per scene, in the order of `scenes`.
    """
    mode = DetectionMode(mode)
    models.require(mode, config.keep_fraction < 1.0)
    logger.info("detecting on %d scenes in mode %s", len(scenes), mode.value)

    def run(scene: SceneRecord) -> SceneDetections:
        return scene_components(scene, models, mode, config, provider)

    if threads <= 1:
        return [run(scene) for scene in scenes]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(run, scenes))


def scored_detections(
    results: Sequence[SceneDetections], params: CombineParams
) -> Dict[str, List[Detection]]:
    return {r.scene_id: r.detections(final_scores(r.components, params)) for r in results}
