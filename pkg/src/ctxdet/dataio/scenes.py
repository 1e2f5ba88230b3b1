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

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ctxdet.exceptions import InvalidBoxError, SceneFormatError, SceneValidationError
from ctxdet.geom.boxes import BoundingBox, aspect_filter, boxes_to_array
from ctxdet.geom.grid import NUM_CELLS

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Detection = Tuple[BoundingBox, float]


@dataclass(frozen=True)
class GroundTruth:
    box: BoundingBox
    difficult: bool = False


@dataclass(frozen=True)
class Candidate:
    box: BoundingBox
    descriptor: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class SceneRecord:
    """
    One image: its size, ground-truth heads with difficult flags, candidate boxes with their
    descriptors and, optionally, the scene-level descriptor consumed by the global model.
    """

    scene_id: str
    width: float
    height: float
    ground_truth: Tuple[GroundTruth, ...] = ()
    candidates: Tuple[Candidate, ...] = ()
    scene_descriptor: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def descriptor_dim(self) -> Optional[int]:
        if not self.candidates:
            return None
        return int(self.candidates[0].descriptor.shape[0])

    def candidate_boxes(self) -> np.ndarray:
        return boxes_to_array([c.box for c in self.candidates])

    def truth_boxes(self, include_difficult: bool = True) -> np.ndarray:
        return boxes_to_array(
            [g.box for g in self.ground_truth if include_difficult or not g.difficult]
        )

    def descriptors(self) -> np.ndarray:
        if not self.candidates:
            return np.zeros((0, 0), dtype=np.float64)
        return np.stack([c.descriptor for c in self.candidates])


def validate_scene(scene: SceneRecord, descriptor_dim: Optional[int] = None) -> None:
    """Checks the record invariants.

    Args:
        scene (SceneRecord): The record to validate.
        descriptor_dim (Optional[int]): Dimension every candidate descriptor must have, or None
            to take it from the first candidate.

    Raises:
        SceneValidationError: If an invariant is violated.
    """
    if not scene.scene_id or any(char.isspace() for char in scene.scene_id):
        raise SceneValidationError(scene.scene_id, "scene_id must be non-empty without whitespace")
    if not (scene.width > 0 and scene.height > 0):
        raise SceneValidationError(scene.scene_id, "image size must be positive")
    expected = descriptor_dim if descriptor_dim is not None else scene.descriptor_dim
    for index, candidate in enumerate(scene.candidates):
        if not aspect_filter(candidate.box):
            raise SceneValidationError(
                scene.scene_id, f"candidate {index} fails the aspect filter"
            )
        if candidate.descriptor.ndim != 1 or candidate.descriptor.shape[0] != expected:
            raise SceneValidationError(
                scene.scene_id,
                f"candidate {index} descriptor has dimension {candidate.descriptor.shape}, "
                f"expected {expected}",
            )
        if not np.all(np.isfinite(candidate.descriptor)):
            raise SceneValidationError(scene.scene_id, f"candidate {index} descriptor not finite")


def _box_fields(box: BoundingBox) -> List[float]:
    return [box.x, box.y, box.w, box.h]


def scene_to_json(scene: SceneRecord) -> str:
    record = {
        "scene_id": scene.scene_id,
        "width": scene.width,
        "height": scene.height,
        "ground_truth": [_box_fields(g.box) + [bool(g.difficult)] for g in scene.ground_truth],
        "candidates": [
            _box_fields(c.box) + [float(v) for v in c.descriptor] for c in scene.candidates
        ],
    }
    if scene.scene_descriptor is not None:
        record["scene_descriptor"] = [float(v) for v in scene.scene_descriptor]
    return json.dumps(record, separators=(",", ":"))


def _make_box(scene_id: str, values: Sequence[float], what: str) -> BoundingBox:
    try:
        return BoundingBox(*(float(v) for v in values[:4]))
    except InvalidBoxError as error:
        raise SceneValidationError(scene_id, f"{what}: {error}") from error


def scene_from_json(text: str, line_number: int) -> SceneRecord:
    """Parses one line of the scenes format.

    Args:
        text (str): The JSON line.
        line_number (int): One-based line number for error reporting.

    Returns:
        SceneRecord: The parsed record, not yet validated.

    Raises:
        SceneFormatError: If the line is not a well-formed record.
        SceneValidationError: If a box has no area.
    """
    try:
        record = json.loads(text)
        scene_id = str(record["scene_id"])
        width = float(record["width"])
        height = float(record["height"])
        raw_truth = record["ground_truth"]
        raw_candidates = record["candidates"]
        raw_scene = record.get("scene_descriptor")
    except (ValueError, KeyError, TypeError) as error:
        raise SceneFormatError(line_number, f"malformed record ({error})") from error
    truth = []
    candidates = []
    try:
        for entry in raw_truth:
            if len(entry) != 5 or entry[4] not in (True, False):
                raise SceneFormatError(
                    line_number, "ground truth entries need x, y, w, h, difficult"
                )
            box = _make_box(scene_id, entry, "ground truth")
            truth.append(GroundTruth(box, bool(entry[4])))
        for entry in raw_candidates:
            if len(entry) < 5:
                raise SceneFormatError(line_number, "candidate entries need x, y, w, h, d1..dD")
            box = _make_box(scene_id, entry, "candidate")
            candidates.append(Candidate(box, np.asarray(entry[4:], dtype=np.float64)))
        scene_descriptor = None if raw_scene is None else np.asarray(raw_scene, dtype=np.float64)
    except (ValueError, KeyError, TypeError) as error:
        raise SceneFormatError(line_number, f"malformed entry ({error})") from error
    return SceneRecord(
        scene_id, width, height, tuple(truth), tuple(candidates), scene_descriptor
    )


def _text_lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    with open(path, "rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                yield line_number, raw.decode("utf-8")
            except UnicodeDecodeError as error:
                raise SceneFormatError(line_number, f"not UTF-8 text ({error.reason})") from error


def load_scenes(path: PathLike) -> List[SceneRecord]:
    """Reads a scenes file, one JSON record per line, and validates every record.

    Args:
        path (PathLike): The scenes file.

    Returns:
        List[SceneRecord]: Records in file order.

    Raises:
        SceneFormatError: On a malformed line, with its line number.
        SceneValidationError: On an invariant violation, naming the scene.
    """
    scenes = []
    seen = set()
    descriptor_dim = None
    for line_number, line in _text_lines(path):
        if not line.strip():
            continue
        scene = scene_from_json(line, line_number)
        if scene.scene_id in seen:
            raise SceneValidationError(scene.scene_id, "duplicate scene_id")
        seen.add(scene.scene_id)
        if descriptor_dim is None:
            descriptor_dim = scene.descriptor_dim
        validate_scene(scene, descriptor_dim)
        scenes.append(scene)
    logger.debug("loaded %d scenes from %s", len(scenes), path)
    return scenes


def save_scenes(path: PathLike, scenes: Iterable[SceneRecord]) -> None:
    """Writes scenes one JSON record per line (UTF-8, LF), floats at round-trip precision.

    Args:
        path (PathLike): Destination file.
        scenes (Iterable[SceneRecord]): Records to write, in order.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for scene in scenes:
            handle.write(scene_to_json(scene))
            handle.write("\n")


def _detection_sort_key(detection: Detection) -> Tuple[float, BoundingBox]:
    box, score = detection
    return -float(f"{score:.6f}"), box


def save_detections(path: PathLike, detections: Dict[str, Sequence[Detection]]) -> None:
    """Writes detections as `scene_id x y w h score` lines.

    Scenes are written in scene_id order, detections by descending score and box-lexicographic
    order on ties of the written six-decimal score. Coordinates keep round-trip precision.

    Args:
        path (PathLike): Destination file.
        detections (Dict[str, Sequence[Detection]]): Scored boxes per scene.

    Raises:
        ValueError: If a score is not finite.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for scene_id in sorted(detections):
            if not all(np.isfinite(score) for _, score in detections[scene_id]):
                raise ValueError(f"non-finite score in scene '{scene_id}'")
            for box, score in sorted(detections[scene_id], key=_detection_sort_key):
                handle.write(
                    f"{scene_id} {box.x!r} {box.y!r} {box.w!r} {box.h!r} {score:.6f}\n"
                )


def load_detections(path: PathLike) -> Dict[str, List[Detection]]:
    """Reads a detections file written by save_detections.

    Args:
        path (PathLike): The detections file.

    Returns:
        Dict[str, List[Detection]]: Scored boxes per scene, in file order.

    Raises:
        SceneFormatError: On a malformed line.
    """
    detections: Dict[str, List[Detection]] = {}
    for line_number, line in _text_lines(path):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise SceneFormatError(line_number, "expected scene_id x y w h score")
        try:
            box = BoundingBox(*(float(v) for v in fields[1:5]))
            score = float(fields[5])
        except ValueError as error:
            raise SceneFormatError(line_number, str(error)) from error
        detections.setdefault(fields[0], []).append((box, score))
    return detections


def save_global_scores(path: PathLike, scores: Dict[str, np.ndarray]) -> None:
    """Writes one line per scene: scene_id followed by 284 six-decimal cell scores.

    Args:
        path (PathLike): Destination file.
        scores (Dict[str, ndarray]): Cell scores per scene in grid order.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for scene_id in sorted(scores):
            values = np.asarray(scores[scene_id], dtype=np.float64)
            if values.shape != (NUM_CELLS,):
                raise ValueError(f"scene '{scene_id}' has {values.shape} cell scores")
            handle.write(scene_id + " " + " ".join(f"{v:.6f}" for v in values) + "\n")


def load_global_scores(path: PathLike) -> Dict[str, np.ndarray]:
    """Reads a global scores file.

    Args:
        path (PathLike): The global scores file.

    Returns:
        Dict[str, ndarray]: Cell scores per scene.

    Raises:
        SceneFormatError: If a line does not hold exactly 284 scores.
    """
    scores = {}
    for line_number, line in _text_lines(path):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != NUM_CELLS + 1:
            raise SceneFormatError(line_number, f"expected {NUM_CELLS} cell scores")
        try:
            scores[fields[0]] = np.array([float(v) for v in fields[1:]], dtype=np.float64)
        except ValueError as error:
            raise SceneFormatError(line_number, str(error)) from error
    return scores
