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

from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from ctxdet.dataio.scenes import Detection, GroundTruth
from ctxdet.geom.boxes import BoundingBox, boxes_to_array, iou_matrix

MATCH_IOU = 0.5


class MatchOutcome(str, Enum):
    TRUE_POSITIVE = "tp"
    FALSE_POSITIVE = "fp"
    IGNORED = "ignored"


@dataclass(frozen=True)
class MatchResult:
    """Outcome per detection (in input order) and matched flag per ground truth."""

    outcomes: Tuple[MatchOutcome, ...]
    matched: Tuple[bool, ...]


def rank_key(detection: Detection) -> Tuple[float, BoundingBox]:
    """Sort key of the detection ranking: descending score, then box lexicographic order."""
    box, score = detection
    return -score, box


def match_overlaps(
    overlaps: np.ndarray, difficult: np.ndarray, order: Sequence[int]
) -> Tuple[List[MatchOutcome], np.ndarray]:
    """Greedy matching on a precomputed detection-by-ground-truth IoU matrix.

    Detections are visited in the given order. The candidates of a detection are the
    difficult ground truths and the non-difficult ones not matched yet; the detection takes
    the one with the highest IoU (first on ties). Above 0.5 it is ignored when that ground
    truth is difficult and a true positive otherwise; every other detection is a false
    positive.

    Args:
        overlaps (ndarray): IoU matrix of shape (detections, ground truths).
        difficult (ndarray): Difficult flag per ground truth.
        order (Sequence[int]): Detection indices by rank.

    Returns:
        Tuple[List[MatchOutcome], ndarray]: Outcome per detection index and matched flags.
    """
    outcomes = [MatchOutcome.FALSE_POSITIVE] * overlaps.shape[0]
    matched = np.zeros(overlaps.shape[1], dtype=bool)
    if not overlaps.shape[1]:
        return outcomes, matched
    for index in order:
        eligible = np.where(difficult | ~matched, overlaps[index], -np.inf)
        best = int(np.argmax(eligible))
        if eligible[best] > MATCH_IOU:
            if difficult[best]:
                outcomes[index] = MatchOutcome.IGNORED
            else:
                outcomes[index] = MatchOutcome.TRUE_POSITIVE
                matched[best] = True
    return outcomes, matched


def match_detections(
    detections: Sequence[Detection], ground_truth: Sequence[GroundTruth]
) -> MatchResult:
    """Matches one scene's detections to its ground truth.

    Args:
        detections (Sequence[Detection]): (box, score) pairs; ranked internally by rank_key.
        ground_truth (Sequence[GroundTruth]): Ground truth with difficult flags.

    Returns:
        MatchResult: Outcomes aligned with the input detections.
    """
    order = sorted(range(len(detections)), key=lambda i: rank_key(detections[i]))
    overlaps = iou_matrix(
        boxes_to_array([box for box, _ in detections]),
        boxes_to_array([g.box for g in ground_truth]),
    )
    difficult = np.array([g.difficult for g in ground_truth], dtype=bool)
    outcomes, matched = match_overlaps(overlaps, difficult, order)
    return MatchResult(tuple(outcomes), tuple(bool(m) for m in matched))
