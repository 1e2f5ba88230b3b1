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

import pytest

from ctxdet.dataio.scenes import GroundTruth
from ctxdet.evalkit.matching import MatchOutcome, match_detections, rank_key
from ctxdet.geom.boxes import BoundingBox

TP = MatchOutcome.TRUE_POSITIVE
FP = MatchOutcome.FALSE_POSITIVE
IGNORED = MatchOutcome.IGNORED


def _truth(x, difficult=False):
    return GroundTruth(BoundingBox(x, 0.0, 10.0, 10.0), difficult)


def _detection(x, score, h=10.0):
    return BoundingBox(x, 0.0, 10.0, h), score


def test_duplicates_are_false_positives() -> None:
    result = match_detections([_detection(0, 0.8), _detection(0, 0.9)], [_truth(0)])
    assert result.outcomes == (FP, TP)
    assert result.matched == (True,)


def test_difficult_truth_ignores_every_match() -> None:
    result = match_detections(
        [_detection(0, 0.9), _detection(1, 0.8), _detection(40, 0.7)], [_truth(0, True)]
    )
    assert result.outcomes == (IGNORED, IGNORED, FP)
    assert result.matched == (False,)


def test_match_needs_more_than_half_overlap() -> None:
    result = match_detections([_detection(0, 0.9, h=20.0)], [_truth(0)])
    assert result.outcomes == (FP,)


def test_matched_truth_is_no_longer_eligible() -> None:
    # the second detection overlaps the matched head best and the difficult one by 0.67
    truths = [_truth(0), _truth(2, True)]
    result = match_detections([_detection(0, 0.9), _detection(0, 0.8)], truths)
    assert result.outcomes == (TP, IGNORED)


def test_equal_scores_rank_by_box() -> None:
    result = match_detections([_detection(1, 0.5), _detection(0, 0.5)], [_truth(0)])
    assert result.outcomes == (FP, TP)
    assert rank_key(_detection(0, 0.5)) < rank_key(_detection(1, 0.5))
    assert rank_key(_detection(5, 0.9)) < rank_key(_detection(0, 0.5))


def test_no_ground_truth() -> None:
    assert match_detections([_detection(0, 0.1)], []).outcomes == (FP,)
    assert match_detections([], [_truth(0)]).matched == (False,)


@pytest.mark.parametrize("outcome, code", [(TP, "tp"), (FP, "fp"), (IGNORED, "ignored")])
def test_outcome_values(outcome, code) -> None:
    assert MatchOutcome(code) is outcome
