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
from functools import lru_cache
from typing import Tuple

import numpy as np

from ctxdet.geom.boxes import BoundingBox, iou_matrix

CANVAS = 224
CELL_SIDES = (224, 112, 56, 28)
NUM_CELLS = 284


@dataclass(frozen=True)
class GridSpec:
    """
    The multi-scale grid of square cells on the 224-pixel canvas. Cells are ordered coarse to
    fine (sides 224, 112, 56, 28) and row-major within a scale; every serialized score vector
    follows this order.
    """

    canvas: int
    cells: Tuple[BoundingBox, ...]
    scale_index: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.cells) != NUM_CELLS or len(self.scale_index) != NUM_CELLS:
            raise ValueError(f"grid must have {NUM_CELLS} cells, got {len(self.cells)}")

    @property
    def cell_array(self) -> np.ndarray:
        return _cell_array(self)

    def cells_of_scale(self, scale: int) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.scale_index) if s == scale)


@lru_cache(maxsize=None)
def _cell_array(grid: GridSpec) -> np.ndarray:
    array = np.array([[c.x, c.y, c.w, c.h] for c in grid.cells], dtype=np.float64)
    array.setflags(write=False)
    return array


@lru_cache(maxsize=1)
def build_grid() -> GridSpec:
    """Builds the 284-cell grid: sides 224, 112, 56, 28 with a stride of half the side.

    Returns:
        GridSpec: The grid with 1 + 9 + 49 + 225 cells.
    """
    cells = []
    scales = []
    for scale, side in enumerate(CELL_SIDES):
        stride = side // 2
        steps = (CANVAS - side) // stride + 1
        for row in range(steps):
            for col in range(steps):
                cells.append(
                    BoundingBox(float(col * stride), float(row * stride), float(side), float(side))
                )
                scales.append(scale)
    return GridSpec(canvas=CANVAS, cells=tuple(cells), scale_index=tuple(scales))


@dataclass(frozen=True)
class CanvasTransform:
    """Maps image coordinates onto the canvas: isotropic rescale of the long side to 224, then
    centred zero padding."""

    scale: float
    offset_x: float
    offset_y: float

    @classmethod
    def for_image(cls, width: float, height: float, canvas: int = CANVAS) -> "CanvasTransform":
        """Builds the transform for an image of the given size.

        Args:
            width (float): Image width in pixels.
            height (float): Image height in pixels.
            canvas (int): Canvas side in pixels. Default: 224.

        Returns:
            CanvasTransform: The rescale-and-pad transform.
        """
        scale = canvas / max(width, height)
        return cls(
            scale=scale,
            offset_x=(canvas - width * scale) / 2.0,
            offset_y=(canvas - height * scale) / 2.0,
        )

    def apply(self, box: BoundingBox) -> BoundingBox:
        return BoundingBox(
            box.x * self.scale + self.offset_x,
            box.y * self.scale + self.offset_y,
            box.w * self.scale,
            box.h * self.scale,
        )

    def apply_array(self, boxes: np.ndarray) -> np.ndarray:
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        out = boxes * self.scale
        out[:, 0] += self.offset_x
        out[:, 1] += self.offset_y
        return out


def match_to_cell(box: BoundingBox, grid: GridSpec, canvas_transform: CanvasTransform) -> int:
    """Index of the grid cell with maximum IoU against the box, smaller index on ties.

    Args:
        box (BoundingBox): Box in image coordinates.
        grid (GridSpec): The grid.
        canvas_transform (CanvasTransform): The image-to-canvas transform.

    Returns:
        int: The matched cell index.
    """
    return int(match_array_to_cells(box.as_array()[None, :], grid, canvas_transform)[0])


def match_array_to_cells(
    boxes: np.ndarray, grid: GridSpec, canvas_transform: CanvasTransform
) -> np.ndarray:
    """Vectorised match_to_cell over an (N, 4) box array.

    Args:
        boxes (ndarray): Boxes in image coordinates, shape (N, 4).
        grid (GridSpec): The grid.
        canvas_transform (CanvasTransform): The image-to-canvas transform.

    Returns:
        ndarray: Cell index per box, shape (N,).
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) == 0:
        return np.zeros(0, dtype=np.int64)
    overlaps = iou_matrix(canvas_transform.apply_array(boxes), grid.cell_array)
    # argmax returns the first maximum, i.e. the smaller cell index
    return np.argmax(overlaps, axis=1).astype(np.int64)
