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
from typing import List, Sequence, Tuple

import numpy as np

from ctxdet.exceptions import InvalidBoxError

MIN_ASPECT = 2.0 / 3.0
MAX_ASPECT = 3.0 / 2.0


@dataclass(frozen=True, order=True)
class BoundingBox:
    """
    An axis-aligned box in continuous pixel coordinates with the origin at the top-left corner.
    Ordering is lexicographic on (x, y, w, h), which is the tie-break used wherever detections
    with equal scores have to be ranked.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box ({self.x}, {self.y}, {self.w}, {self.h}) has no area")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def size(self) -> float:
        """float: The mean side length (w + h) / 2 used by the edge layout features."""
        return (self.w + self.h) / 2.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stacks boxes into an (N, 4) array of x, y, w, h.

    Args:
        boxes (Sequence[BoundingBox]): The boxes to stack.

    Returns:
        ndarray: Array of shape (N, 4); shape (0, 4) for an empty input.
    """
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union overlap ratio of two boxes.

    Args:
        a (BoundingBox): First box.
        b (BoundingBox): Second box.

    Returns:
        float: Intersection area divided by union area, in [0, 1].
    """
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two sets of boxes given as (N, 4) and (M, 4) x, y, w, h arrays.

    Args:
        a (ndarray): Boxes of shape (N, 4).
        b (ndarray): Boxes of shape (M, 4).

    Returns:
        ndarray: IoU values of shape (N, M).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, 0][:, None], b[:, 0][None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, 1][:, None], b[:, 1][None, :])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return inter / union


def aspect_filter(box: BoundingBox) -> bool:
    """Whether a box has the square-like aspect ratio w/h in [2/3, 3/2] required of candidates.

    Args:
        box (BoundingBox): The box to test.

    Returns:
        bool: True if the ratio lies in the closed interval.
    """
    ratio = box.w / box.h
    return MIN_ASPECT <= ratio <= MAX_ASPECT


def nms(boxes: Sequence[Tuple[BoundingBox, float]], threshold: float) -> List[int]:
    """Greedy non-maximum suppression.

    Boxes are visited by descending score, earlier input index first on ties. A box is
    suppressed when its IoU with an already kept box is strictly greater than the threshold.

    Args:
        boxes (Sequence[Tuple[BoundingBox, float]]): Boxes paired with finite scores.
        threshold (float): Overlap ratio above which a box is suppressed.

    Returns:
        List[int]: Indices of kept boxes in descending score order.
    """
    if not boxes:
        return []
    coords = boxes_to_array([b for b, _ in boxes])
    scores = np.array([s for _, s in boxes], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    overlaps = iou_matrix(coords, coords)
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep = []
    for index in order:
        if suppressed[index]:
            continue
        keep.append(int(index))
        suppressed |= overlaps[index] > threshold
    return keep
