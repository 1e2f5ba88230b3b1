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
import math
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ctxdet.dataio.scenes import Candidate, GroundTruth, SceneRecord
from ctxdet.exceptions import ConfigError
from ctxdet.geom.boxes import BoundingBox, iou, iou_matrix
from ctxdet.geom.grid import CANVAS, CanvasTransform, build_grid, match_array_to_cells

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")
JITTER_IOU_RANGE = (0.4, 0.95)
BACKGROUND_MAX_IOU = 0.3
CUE_POSITIVE_IOU = 0.5
INFORMATIVE_DIMS = 4


@dataclass(frozen=True)
class SynthConfig:
    """
    Parameters of the synthetic scene generator. Heads sit on a horizontal band whose height
    varies per scene, share a per-scene base size that shrinks towards the top of the image,
    and never overlap horizontally. The appearance cue of a candidate is drawn from one of two
    unit-width uniform distributions that overlap on an interval of length ambiguity_rate.

    With the default sizes every head overlaps some grid cell by more than the cell-labelling
    IoU after the canvas rescale, and background proposals outnumber head proposals about five
    to one.
    """

    n_scenes: int = 3000
    split: Tuple[int, int, int] = (4, 1, 1)
    width: float = 480.0
    height: float = 270.0
    heads_per_scene: Tuple[int, int] = (1, 4)
    head_size: Tuple[float, float] = (48.0, 104.0)
    descriptor_dim: int = 8
    ambiguity_rate: float = 0.3
    horizon_band: float = 0.45
    horizon_jitter: float = 0.2
    band_width: float = 0.06
    scale_gradient: float = 1.5
    size_jitter: float = 0.05
    jitter_per_head: int = 3
    background_per_scene: int = 50
    decoy_fraction: float = 0.5
    difficult_size: float = 52.0
    scene_noise: float = 0.02
    occupancy_grid: int = 16
    rng_seed: int = 0

    def __post_init__(self) -> None:
        checks = [
            (self.n_scenes >= 3, "n_scenes must be at least 3"),
            (len(self.split) == 3 and min(self.split) >= 1, "split needs three positive parts"),
            (self.width > 0 and self.height > 0, "width and height must be positive"),
            (0 <= self.heads_per_scene[0] <= self.heads_per_scene[1], "empty heads_per_scene"),
            (0 < self.head_size[0] <= self.head_size[1], "empty head_size range"),
            (self.descriptor_dim >= INFORMATIVE_DIMS, "descriptor_dim must be at least 4"),
            (0.0 <= self.ambiguity_rate < 1.0, "ambiguity_rate must lie in [0, 1)"),
            (0.0 < self.horizon_band < 1.0, "horizon_band must lie in (0, 1)"),
            (0.0 <= self.horizon_jitter < 0.5, "horizon_jitter must lie in [0, 0.5)"),
            (0.0 <= self.band_width < 0.5, "band_width must lie in [0, 0.5)"),
            (0.0 <= self.size_jitter < 1.0, "size_jitter must lie in [0, 1)"),
            (self.jitter_per_head >= 0, "jitter_per_head must be non-negative"),
            (self.background_per_scene >= 0, "background_per_scene must be non-negative"),
            (0.0 <= self.decoy_fraction <= 1.0, "decoy_fraction must lie in [0, 1]"),
            (self.scene_noise >= 0.0, "scene_noise must be non-negative"),
            (self.occupancy_grid >= 1, "occupancy_grid must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(f"synth: {message}")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "SynthConfig":
        """Builds a config from a mapping, rejecting unknown keys.

        Args:
            values (Dict[str, Any]): Field values; missing fields keep their defaults.

        Returns:
            SynthConfig: The validated config.

        Raises:
            ConfigError: On unknown keys or invalid values.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"synth: unknown keys {sorted(unknown)}")
        converted = dict(values)
        try:
            for key in ("split", "heads_per_scene", "head_size"):
                if key in converted:
                    converted[key] = tuple(converted[key])
            return cls(**converted)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"synth: {error}") from error

    def max_size_ratio(self) -> float:
        """float: Upper bound on the size ratio of two heads in one scene."""
        jitter = (1.0 + self.size_jitter) / (1.0 - self.size_jitter)
        return math.exp(self.scale_gradient * self.band_width) * jitter

    def split_sizes(self) -> Tuple[int, int, int]:
        total = sum(self.split)
        n_validation = self.n_scenes * self.split[1] // total
        n_test = self.n_scenes * self.split[2] // total
        return self.n_scenes - n_validation - n_test, n_validation, n_test

    def cue_interval(self, positive: bool) -> Tuple[float, float]:
        """The uniform support of the appearance cue for one class.

        Args:
            positive (bool): Whether the interval of the head class is wanted.

        Returns:
            Tuple[float, float]: Low and high ends; the two classes overlap on
            [-ambiguity_rate / 2, ambiguity_rate / 2].
        """
        half = self.ambiguity_rate / 2.0
        if positive:
            return -half, 1.0 - half
        return -1.0 + half, half


def generate_synthetic(
    config: SynthConfig,
) -> Tuple[List[SceneRecord], List[SceneRecord], List[SceneRecord]]:
    """Generates the train, validation and test splits.

    Args:
        config (SynthConfig): Generator parameters.

    Returns:
        Tuple[List[SceneRecord], List[SceneRecord], List[SceneRecord]]: The three splits,
        bit-identical for equal configs.
    """
    streams = np.random.SeedSequence(config.rng_seed).spawn(len(SPLIT_NAMES))
    splits = []
    for name, size, stream in zip(SPLIT_NAMES, config.split_sizes(), streams):
        rng = np.random.default_rng(stream)
        scenes = [_generate_scene(config, f"{name}-{index:05d}", rng) for index in range(size)]
        logger.info("generated %d %s scenes", len(scenes), name)
        splits.append(scenes)
    return splits[0], splits[1], splits[2]


class _SceneLayout:
    def __init__(self, config: SynthConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.rng = rng
        jitter = rng.uniform(-config.horizon_jitter, config.horizon_jitter)
        self.horizon = config.height * (config.horizon_band + jitter)
        self.base_size = rng.uniform(*config.head_size)

    def band_y(self) -> float:
        half = self.config.band_width / 2.0
        return self.horizon + self.rng.uniform(-half, half) * self.config.height

    def size_at(self, y_center: float) -> float:
        config = self.config
        slope = math.exp(config.scale_gradient * (y_center - self.horizon) / config.height)
        return self.base_size * slope


def _generate_scene(config: SynthConfig, scene_id: str, rng: np.random.Generator) -> SceneRecord:
    layout = _SceneLayout(config, rng)
    heads = _place_heads(config, layout, rng)
    truth = tuple(GroundTruth(box, box.h < config.difficult_size) for box in heads)
    boxes = []
    for head in heads:
        boxes.extend(_jitter_box(head, rng) for _ in range(config.jitter_per_head))
    for _ in range(config.background_per_scene):
        box = _background_box(config, layout, heads, rng)
        if box is not None:
            boxes.append(box)
    order = rng.permutation(len(boxes))
    boxes = [boxes[i] for i in order]
    candidates = tuple(
        Candidate(box, _descriptor(config, box, heads, rng)) for box in boxes
    )
    return SceneRecord(
        scene_id=scene_id,
        width=config.width,
        height=config.height,
        ground_truth=truth,
        candidates=candidates,
        scene_descriptor=scene_descriptor(config, heads, rng),
    )


def _place_heads(
    config: SynthConfig, layout: _SceneLayout, rng: np.random.Generator
) -> List[BoundingBox]:
    count = int(rng.integers(config.heads_per_scene[0], config.heads_per_scene[1] + 1))
    heads: List[BoundingBox] = []
    for _ in range(count):
        for _attempt in range(50):
            y_center = layout.band_y()
            size = layout.size_at(y_center) * rng.uniform(
                1.0 - config.size_jitter, 1.0 + config.size_jitter
            )
            x_center = rng.uniform(size / 2.0, config.width - size / 2.0)
            box = BoundingBox(x_center - size / 2.0, y_center - size / 2.0, size, size)
            if box.y < 0 or box.y + box.h > config.height:
                continue
            gap = 0.25 * size
            if all(
                box.x + box.w + gap <= other.x or other.x + other.w + gap <= box.x
                for other in heads
            ):
                heads.append(box)
                break
    return heads


def _jitter_box(head: BoundingBox, rng: np.random.Generator) -> BoundingBox:
    low, high = JITTER_IOU_RANGE
    target = rng.uniform(low + 1e-6, high - 1e-6)
    scale = math.exp(rng.uniform(-1.0, 1.0) * 0.25 * math.log(1.0 / target))
    aspect = rng.uniform(0.9, 1.1)
    w = head.w * scale * math.sqrt(aspect)
    h = head.h * scale / math.sqrt(aspect)
    cx, cy = head.center
    if iou(head, BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)) <= target:
        w, h = head.w, head.h
    angle = rng.uniform(0.0, 2.0 * math.pi)
    dx, dy = math.cos(angle), math.sin(angle)

    def shifted(distance: float) -> BoundingBox:
        return BoundingBox(cx + dx * distance - w / 2.0, cy + dy * distance - h / 2.0, w, h)

    lo, hi = 0.0, 2.0 * (max(w, h) + max(head.w, head.h))
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if iou(head, shifted(mid)) > target:
            lo = mid
        else:
            hi = mid
    return shifted(lo)


def _background_box(
    config: SynthConfig,
    layout: _SceneLayout,
    heads: List[BoundingBox],
    rng: np.random.Generator,
) -> Optional[BoundingBox]:
    truth = np.array([[b.x, b.y, b.w, b.h] for b in heads]).reshape(-1, 4)
    for _attempt in range(20):
        aspect = rng.uniform(0.8, 1.25)
        if heads and rng.uniform() < config.decoy_fraction:
            if rng.uniform() < 0.5:
                # on the band, wrong scale
                y_center = layout.band_y()
                factor = math.exp(rng.choice([-1.0, 1.0]) * rng.uniform(math.log(1.8), math.log(3)))
                size = layout.size_at(y_center) * factor
            else:
                # plausible scale, off the band
                offset = rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 5.0) * layout.base_size
                y_center = layout.horizon + offset
                size = layout.size_at(layout.horizon)
            x_center = rng.uniform(0.0, config.width)
        else:
            low = 0.5 * config.head_size[0]
            high = 2.0 * config.head_size[1]
            size = math.exp(rng.uniform(math.log(low), math.log(high)))
            x_center = rng.uniform(0.0, config.width)
            y_center = rng.uniform(0.0, config.height)
        w = size * math.sqrt(aspect)
        h = size / math.sqrt(aspect)
        box = BoundingBox(x_center - w / 2.0, y_center - h / 2.0, w, h)
        if len(truth) == 0 or iou_matrix(box.as_array(), truth).max() < BACKGROUND_MAX_IOU:
            return box
    return None


def _descriptor(
    config: SynthConfig, box: BoundingBox, heads: List[BoundingBox], rng: np.random.Generator
) -> np.ndarray:
    best = max((iou(box, head) for head in heads), default=0.0)
    low, high = config.cue_interval(best >= CUE_POSITIVE_IOU)
    cx, cy = box.center
    informative = [
        rng.uniform(low, high),
        cx / config.width,
        cy / config.height,
        math.log(box.size / config.height),
    ]
    noise = rng.standard_normal(config.descriptor_dim - INFORMATIVE_DIMS)
    return np.concatenate([np.array(informative), noise])


def scene_descriptor(
    config: SynthConfig, heads: List[BoundingBox], rng: np.random.Generator
) -> np.ndarray:
    """Coarse occupancy of the padded canvas plus per-scale head counts, with Gaussian noise.

    Args:
        config (SynthConfig): Generator parameters (grid resolution, noise level).
        heads (List[BoundingBox]): Ground-truth heads in image coordinates.
        rng (np.random.Generator): Random stream.

    Returns:
        ndarray: Vector of length occupancy_grid ** 2 + 4.
    """
    transform = CanvasTransform.for_image(config.width, config.height)
    blocks = config.occupancy_grid
    side = CANVAS / blocks
    occupancy = np.zeros((blocks, blocks))
    counts = np.zeros(4)
    if heads:
        canvas_boxes = transform.apply_array(np.array([h.as_array() for h in heads]))
        edges = np.arange(blocks) * side
        for x, y, w, h in canvas_boxes:
            ow = np.clip(np.minimum(edges + side, x + w) - np.maximum(edges, x), 0.0, None)
            oh = np.clip(np.minimum(edges + side, y + h) - np.maximum(edges, y), 0.0, None)
            occupancy += np.outer(oh, ow) / (side * side)
        grid = build_grid()
        cells = match_array_to_cells(np.array([h.as_array() for h in heads]), grid, transform)
        for cell in cells:
            counts[grid.scale_index[cell]] += 1.0
    features = np.concatenate([np.clip(occupancy, 0.0, 1.0).ravel(), counts / 5.0])
    return features + config.scene_noise * rng.standard_normal(features.shape[0])
