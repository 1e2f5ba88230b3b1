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
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ctxdet.dataio.scenes import Detection, SceneRecord
from ctxdet.evalkit.matching import MatchOutcome, match_detections
from ctxdet.exceptions import EvaluationError

logger = logging.getLogger(__name__)


class ApInterpolation(str, Enum):
    ALL_POINTS = "all_points"
    ELEVEN_POINT = "eleven_point"


@dataclass(frozen=True)
class PrCurve:
    """Cumulative counts, precision and recall down a global detection ranking."""

    scores: np.ndarray
    tp_cum: np.ndarray
    fp_cum: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    ap: float
    n_positives: int

    def __len__(self) -> int:
        return len(self.scores)


def voc_ap(
    recall: np.ndarray,
    precision: np.ndarray,
    interpolation: ApInterpolation = ApInterpolation.ALL_POINTS,
) -> float:
    """Average precision from a precision-recall curve.

    Args:
        recall (ndarray): Recall per rank, non-decreasing.
        precision (ndarray): Precision per rank.
        interpolation (ApInterpolation): Area under the precision envelope (all points) or
            the mean envelope value at recall 0, 0.1, ..., 1. Default: all points.

    Returns:
        float: The average precision in [0, 1].
    """
    recall = np.asarray(recall, dtype=np.float64)
    precision = np.asarray(precision, dtype=np.float64)
    if ApInterpolation(interpolation) == ApInterpolation.ELEVEN_POINT:
        total = 0.0
        for threshold in np.linspace(0.0, 1.0, 11):
            reached = recall >= threshold
            total += float(precision[reached].max()) if reached.any() else 0.0
        return total / 11.0
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def pr_curve(
    ranked: Sequence[Tuple[float, bool]],
    n_positives: int,
    interpolation: ApInterpolation = ApInterpolation.ALL_POINTS,
) -> PrCurve:
    """Precision-recall curve of a ranked list of non-ignored detections.

    Args:
        ranked (Sequence[Tuple[float, bool]]): (score, is true positive) in ranking order.
        n_positives (int): Number of non-difficult ground truths.
        interpolation (ApInterpolation): AP variant. Default: all points.

    Returns:
        PrCurve: The curve and its AP.

    Raises:
        EvaluationError: If n_positives is zero.
    """
    scores = np.array([s for s, _ in ranked], dtype=np.float64)
    hits = np.array([tp for _, tp in ranked], dtype=bool)
    return curve_from_arrays(scores, hits, n_positives, interpolation)


def curve_from_arrays(
    scores: np.ndarray,
    hits: np.ndarray,
    n_positives: int,
    interpolation: ApInterpolation = ApInterpolation.ALL_POINTS,
) -> PrCurve:
    """Array form of pr_curve.

    Args:
        scores (ndarray): Scores in ranking order.
        hits (ndarray): True-positive flag per rank.
        n_positives (int): Number of non-difficult ground truths.
        interpolation (ApInterpolation): AP variant. Default: all points.

    Returns:
        PrCurve: The curve and its AP.
    """
    if n_positives < 1:
        raise EvaluationError("no non-difficult ground truth to evaluate against")
    scores = np.asarray(scores, dtype=np.float64)
    hits = np.asarray(hits, dtype=bool)
    tp_cum = np.cumsum(hits).astype(np.int64)
    fp_cum = np.cumsum(~hits).astype(np.int64)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    recall = tp_cum / float(n_positives)
    ap = voc_ap(recall, precision, interpolation) if len(scores) else 0.0
    return PrCurve(scores, tp_cum, fp_cum, precision, recall, ap, n_positives)


def eq_pr_threshold(curve: PrCurve) -> float:
    """Score at the rank where precision and recall are closest, the higher score on ties.

    Args:
        curve (PrCurve): The curve.

    Returns:
        float: The operating threshold.

    Raises:
        EvaluationError: If the curve is empty.
    """
    if not len(curve):
        raise EvaluationError("cannot pick an operating point on an empty curve")
    gap = np.abs(curve.precision - curve.recall)
    return float(curve.scores[int(np.argmin(gap))])


def rank_scene_detections(
    scenes: Sequence[SceneRecord], detections: Dict[str, Sequence[Detection]]
) -> Tuple[List[Tuple[float, bool]], int]:
    """Matches every scene and merges the outcomes into one global ranking.

    Ties in score are broken by box order, then by the order of the scenes.

    Args:
        scenes (Sequence[SceneRecord]): Scenes with ground truth.
        detections (Dict[str, Sequence[Detection]]): Detections per scene_id; scenes without
            an entry have no detections.

    Returns:
        Tuple[List[Tuple[float, bool]], int]: Ranked (score, is true positive) pairs without
        ignored detections, and the number of non-difficult ground truths.
    """
    entries = []
    n_positives = 0
    for scene_index, scene in enumerate(scenes):
        n_positives += sum(not g.difficult for g in scene.ground_truth)
        scene_detections = list(detections.get(scene.scene_id, ()))
        result = match_detections(scene_detections, scene.ground_truth)
        for (box, score), outcome in zip(scene_detections, result.outcomes):
            if outcome != MatchOutcome.IGNORED:
                entries.append(
                    ((-score, box, scene_index), outcome == MatchOutcome.TRUE_POSITIVE)
                )
    entries.sort(key=lambda entry: entry[0])
    return [(-key[0], hit) for key, hit in entries], n_positives


def evaluate_detections(
    scenes: Sequence[SceneRecord],
    detections: Dict[str, Sequence[Detection]],
    interpolation: ApInterpolation = ApInterpolation.ALL_POINTS,
) -> PrCurve:
    """PR curve and AP of detections over a set of scenes.

    Args:
        scenes (Sequence[SceneRecord]): Scenes with ground truth.
        detections (Dict[str, Sequence[Detection]]): Detections per scene_id.
        interpolation (ApInterpolation): AP variant. Default: all points.

    Returns:
        PrCurve: The curve.
    """
    ranked, n_positives = rank_scene_detections(scenes, detections)
    curve = pr_curve(ranked, n_positives, interpolation)
    logger.debug("evaluated %d detections: AP %.4f", len(ranked), curve.ap)
    return curve
