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

import numpy as np
import pytest
from utils_for_testing import make_scene

from ctxdet.dataio.scenes import (
    load_detections,
    load_global_scores,
    load_scenes,
    save_detections,
    save_global_scores,
    save_scenes,
    scene_from_json,
    scene_to_json,
    validate_scene,
)
from ctxdet.exceptions import SceneFormatError, SceneValidationError
from ctxdet.geom.boxes import BoundingBox


def _scene(scene_id="a", dim=3):
    return make_scene(
        scene_id,
        truths=[((10, 10, 20, 20), False), ((50, 10, 8, 8), True)],
        candidates=[(11, 10, 20, 20), (80, 40, 30, 30)],
        descriptors=np.arange(2 * dim, dtype=float).reshape(2, dim) / 7.0,
        scene_descriptor=np.array([0.25, 0.5]),
    )


def test_scene_file_keeps_records(tmp_path) -> None:
    path = tmp_path / "scenes.jsonl"
    save_scenes(path, [_scene("a"), _scene("b")])
    loaded = load_scenes(path)
    assert [s.scene_id for s in loaded] == ["a", "b"]
    scene = loaded[0]
    assert scene.ground_truth == _scene().ground_truth
    assert [c.box for c in scene.candidates] == [c.box for c in _scene().candidates]
    np.testing.assert_array_equal(scene.descriptors(), _scene().descriptors())
    np.testing.assert_array_equal(scene.scene_descriptor, [0.25, 0.5])
    assert scene.descriptor_dim == 3


def test_scene_without_scene_descriptor() -> None:
    scene = make_scene("x", candidates=[(0, 0, 10, 10)])
    assert "scene_descriptor" not in scene_to_json(scene)
    assert scene_from_json(scene_to_json(scene), 1).scene_descriptor is None


def test_malformed_line_reports_line_number(tmp_path) -> None:
    path = tmp_path / "scenes.jsonl"
    path.write_text(scene_to_json(_scene()) + "\n" + '{"scene_id": "b"}\n', encoding="utf-8")
    with pytest.raises(SceneFormatError) as error:
        load_scenes(path)
    assert error.value.line_number == 2


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        '{"scene_id": "s", "width": 1, "height": 1, "ground_truth": [[0, 0, 1, 1]],'
        ' "candidates": []}',
        '{"scene_id": "s", "width": 1, "height": 1, "ground_truth": [],'
        ' "candidates": [[0, 0, 1, 1]]}',
    ],
)
def test_scene_format_errors(line) -> None:
    with pytest.raises(SceneFormatError):
        scene_from_json(line, 7)


def _line(ground_truth: str, candidates: str) -> str:
    return (
        f'{{"scene_id": "s", "width": 10, "height": 10, "ground_truth": {ground_truth},'
        f' "candidates": {candidates}}}'
    )


@pytest.mark.parametrize(
    "line",
    [
        _line("[]", '[["x", 0, 2, 2, 0.1]]'),
        _line("[3]", "[]"),
        _line("[]", '[[0, 0, 2, 2, "q"]]'),
        _line('[[0, 0, 2, 2, "yes"]]', "[]"),
        _line("7", "[]"),
    ],
)
def test_malformed_entries_report_line_number(tmp_path, line) -> None:
    path = tmp_path / "scenes.jsonl"
    path.write_text(scene_to_json(_scene()) + "\n" + line + "\n", encoding="utf-8")
    with pytest.raises(SceneFormatError) as error:
        load_scenes(path)
    assert error.value.line_number == 2


def test_scene_descriptor_must_be_numeric() -> None:
    line = _line("[]", "[]")[:-1] + ', "scene_descriptor": ["a", 1]}'
    with pytest.raises(SceneFormatError):
        scene_from_json(line, 3)


def test_non_utf8_bytes_report_line_number(tmp_path) -> None:
    path = tmp_path / "scenes.jsonl"
    path.write_bytes(scene_to_json(_scene()).encode("utf-8") + b"\n" + b'{"scene_id": "\xff"}\n')
    with pytest.raises(SceneFormatError) as error:
        load_scenes(path)
    assert error.value.line_number == 2


def test_zero_area_box_names_scene() -> None:
    line = (
        '{"scene_id": "s9", "width": 10, "height": 10, "ground_truth": [[0, 0, 0, 4, false]],'
        ' "candidates": []}'
    )
    with pytest.raises(SceneValidationError) as error:
        scene_from_json(line, 1)
    assert error.value.scene_id == "s9"


def test_duplicate_scene_ids(tmp_path) -> None:
    path = tmp_path / "scenes.jsonl"
    save_scenes(path, [_scene("a"), _scene("a")])
    with pytest.raises(SceneValidationError, match="duplicate"):
        load_scenes(path)


def test_descriptor_width_must_agree_across_scenes(tmp_path) -> None:
    path = tmp_path / "scenes.jsonl"
    save_scenes(path, [_scene("a", dim=3), _scene("b", dim=4)])
    with pytest.raises(SceneValidationError) as error:
        load_scenes(path)
    assert error.value.scene_id == "b"


def test_candidates_must_pass_aspect_filter() -> None:
    scene = make_scene("tall", candidates=[(0, 0, 10, 40)])
    with pytest.raises(SceneValidationError, match="aspect"):
        validate_scene(scene)


@pytest.mark.parametrize("width, height", [(0, 10), (10, -1)])
def test_image_size_must_be_positive(width, height) -> None:
    with pytest.raises(SceneValidationError):
        validate_scene(make_scene("s", width=width, height=height))


@pytest.mark.parametrize("scene_id", ["", "two words", "tab\tid"])
def test_scene_id_must_not_contain_whitespace(scene_id) -> None:
    with pytest.raises(SceneValidationError, match="whitespace"):
        validate_scene(make_scene(scene_id))


def test_detections_are_ordered(tmp_path) -> None:
    path = tmp_path / "detections.txt"
    detections = {
        "b": [(BoundingBox(5.0, 5.0, 10.0, 10.0), 0.2)],
        "a": [
            (BoundingBox(3.0, 0.0, 10.0, 10.0), 0.5),
            (BoundingBox(1.0, 0.0, 10.0, 10.0), 0.5),
            (BoundingBox(0.0, 0.0, 10.0, 10.0), 0.9),
        ],
    }
    save_detections(path, detections)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == [
        "a 0.0 0.0 10.0 10.0 0.900000",
        "a 1.0 0.0 10.0 10.0 0.500000",
        "a 3.0 0.0 10.0 10.0 0.500000",
        "b 5.0 5.0 10.0 10.0 0.200000",
    ]
    loaded = load_detections(path)
    assert [box.x for box, _ in loaded["a"]] == [0.0, 1.0, 3.0]
    assert loaded["b"] == [(BoundingBox(5, 5, 10, 10), 0.2)]


def test_detection_ties_use_written_score(tmp_path) -> None:
    path = tmp_path / "detections.txt"
    detections = {
        "a": [
            (BoundingBox(3.0, 0.0, 10.0, 10.0), 0.5000004),
            (BoundingBox(1.0, 0.0, 10.0, 10.0), 0.5000001),
        ]
    }
    save_detections(path, detections)
    assert path.read_text(encoding="utf-8").splitlines() == [
        "a 1.0 0.0 10.0 10.0 0.500000",
        "a 3.0 0.0 10.0 10.0 0.500000",
    ]


def test_detections_reject_non_finite_scores(tmp_path) -> None:
    with pytest.raises(ValueError):
        save_detections(tmp_path / "d.txt", {"a": [(BoundingBox(0, 0, 1, 1), float("nan"))]})


def test_malformed_detection_line(tmp_path) -> None:
    path = tmp_path / "d.txt"
    path.write_text("a 0 0 1 1 0.5\na 0 0 1\n", encoding="utf-8")
    with pytest.raises(SceneFormatError) as error:
        load_detections(path)
    assert error.value.line_number == 2


def test_global_scores_file(tmp_path) -> None:
    path = tmp_path / "global.txt"
    scores = np.linspace(0.0, 1.0, 284)
    save_global_scores(path, {"s": scores})
    np.testing.assert_allclose(load_global_scores(path)["s"], scores, atol=5e-7)
    with pytest.raises(ValueError):
        save_global_scores(path, {"s": scores[:10]})
    path.write_text("s 0.1 0.2\n", encoding="utf-8")
    with pytest.raises(SceneFormatError):
        load_global_scores(path)


def test_non_numeric_global_score(tmp_path) -> None:
    path = tmp_path / "global.txt"
    path.write_text("s " + " ".join(["0.5"] * 283 + ["high"]) + "\n", encoding="utf-8")
    with pytest.raises(SceneFormatError) as error:
        load_global_scores(path)
    assert error.value.line_number == 1
