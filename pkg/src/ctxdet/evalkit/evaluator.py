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
from typing import Dict, Sequence

import numpy as np

from ctxdet.dataio.scenes import SceneRecord
from ctxdet.evalkit.curves import ApInterpolation, PrCurve, curve_from_arrays
from ctxdet.evalkit.matching import MATCH_IOU, MatchOutcome, match_overlaps
from ctxdet.exceptions import EvaluationError
from ctxdet.geom.boxes import iou_matrix

logger = logging.getLogger(__name__)

_OUTCOME_CODES = {
    MatchOutcome.TRUE_POSITIVE: 1,
    MatchOutcome.FALSE_POSITIVE: 0,
    MatchOutcome.IGNORED: -1,
}


class DetectionEvaluator:
    """Repeated AP evaluation of a fixed set of detection boxes under changing scores.

    IoU tables are computed once. In a scene where no non-difficult ground truth overlaps
    more than one detection above the match threshold, outcomes do not depend on the score
    order and are fixed up front; the remaining scenes are re-matched on every call.

    Args:
        scenes (Sequence[SceneRecord]): Scenes with ground truth.
        boxes (Dict[str, ndarray]): Detection boxes per scene_id, shape (N, 4).
        interpolation (ApInterpolation): AP variant. Default: all points.
    """

    def __init__(
        self,
        scenes: Sequence[SceneRecord],
        boxes: Dict[str, np.ndarray],
        interpolation: ApInterpolation = ApInterpolation.ALL_POINTS,
    ) -> None:
        if not scenes:
            raise EvaluationError("no scenes to evaluate")
        self.interpolation = interpolation
        self.scene_ids = [scene.scene_id for scene in scenes]
        self.n_positives = sum(not g.difficult for s in scenes for g in s.ground_truth)
        self._slices = {}
        self._conflicts = []
        rows, scene_index, outcomes = [], [], []
        offset = 0
        for index, scene in enumerate(scenes):
            scene_boxes = np.asarray(boxes.get(scene.scene_id, np.zeros((0, 4))), dtype=np.float64)
            scene_boxes = scene_boxes.reshape(-1, 4)
            count = len(scene_boxes)
            self._slices[scene.scene_id] = slice(offset, offset + count)
            difficult = np.array([g.difficult for g in scene.ground_truth], dtype=bool)
            overlaps = iou_matrix(scene_boxes, scene.truth_boxes())
            fixed, _ = match_overlaps(overlaps, difficult, range(count))
            outcomes.extend(_OUTCOME_CODES[o] for o in fixed)
            contested = ((overlaps > MATCH_IOU) & ~difficult).sum(axis=0) > 1
            if count and contested.any():
                self._conflicts.append((slice(offset, offset + count), overlaps, difficult))
            rows.append(scene_boxes)
            scene_index.extend([index] * count)
            offset += count
        self._boxes = np.concatenate(rows) if rows else np.zeros((0, 4))
        self._scene_index = np.asarray(scene_index, dtype=np.int64)
        self._outcomes = np.asarray(outcomes, dtype=np.int64)
        logger.debug(
            "evaluator over %d detections, %d scenes need re-matching",
            len(self._boxes),
            len(self._conflicts),
        )

    def __len__(self) -> int:
        return len(self._boxes)

    def flatten(self, scores: Dict[str, np.ndarray]) -> np.ndarray:
        """Concatenates per-scene scores in evaluator order.

        Args:
            scores (Dict[str, ndarray]): Score per detection, per scene_id.

        Returns:
            ndarray: Flat score vector.
        """
        flat = np.empty(len(self._boxes))
        for scene_id, part in self._slices.items():
            if part.stop > part.start:
                flat[part] = scores[scene_id]
        return flat

    def curve(self, flat_scores: np.ndarray) -> PrCurve:
        """PR curve for a flat score vector (see flatten).

        Args:
            flat_scores (ndarray): One score per detection in evaluator order.

        Returns:
            PrCurve: The curve.
        """
        flat_scores = np.asarray(flat_scores, dtype=np.float64)
        outcomes = self._outcomes.copy()
        for part, overlaps, difficult in self._conflicts:
            local = flat_scores[part]
            boxes = self._boxes[part]
            order = np.lexsort((boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], -local))
            matched, _ = match_overlaps(overlaps, difficult, order)
            outcomes[part] = [_OUTCOME_CODES[o] for o in matched]
        boxes = self._boxes
        order = np.lexsort(
            (self._scene_index, boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0], -flat_scores)
        )
        order = order[outcomes[order] >= 0]
        return curve_from_arrays(
            flat_scores[order], outcomes[order] == 1, self.n_positives, self.interpolation
        )

    def average_precision(self, scores: Dict[str, np.ndarray]) -> float:
        """AP of the detections under the given scores.

        Args:
            scores (Dict[str, ndarray]): Score per detection, per scene_id.

        Returns:
            float: The average precision.
        """
        return self.curve(self.flatten(scores)).ap
