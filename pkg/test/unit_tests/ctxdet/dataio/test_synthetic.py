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

from dataclasses import replace

import numpy as np
import pytest
from utils_for_testing import small_synth

from ctxdet.dataio.scenes import scene_to_json, validate_scene
from ctxdet.dataio.synthetic import SynthConfig, generate_synthetic
from ctxdet.exceptions import ConfigError
from ctxdet.geom.boxes import iou, iou_matrix
from ctxdet.globalmodel.scorer import label_cells


def test_split_sizes(synthetic_splits) -> None:
    assert [len(split) for split in synthetic_splits] == [20, 5, 5]
    assert SynthConfig().split_sizes() == (2000, 500, 500)
    train, validation, test = synthetic_splits
    assert train[0].scene_id == "train-00000"
    assert validation[-1].scene_id == "validation-00004"
    assert test[2].scene_id == "test-00002"


def test_generation_is_deterministic() -> None:
    first = generate_synthetic(small_synth())
    second = generate_synthetic(small_synth())
    for a, b in zip(first, second):
        assert [scene_to_json(s) for s in a] == [scene_to_json(s) for s in b]


def test_seed_changes_scenes() -> None:
    first, _, _ = generate_synthetic(small_synth(rng_seed=1))
    second, _, _ = generate_synthetic(small_synth(rng_seed=2))
    assert [scene_to_json(s) for s in first] != [scene_to_json(s) for s in second]


def test_scenes_are_valid(synthetic_splits) -> None:
    for split in synthetic_splits:
        for scene in split:
            validate_scene(scene, 8)
            assert scene.scene_descriptor.shape == (16 * 16 + 4,)


def test_every_head_has_jittered_candidates(synthetic_splits) -> None:
    train, _, _ = synthetic_splits
    for scene in train:
        boxes = scene.candidate_boxes()
        for truth in scene.ground_truth:
            overlaps = iou_matrix(truth.box.as_array(), boxes)[0]
            assert np.sum(overlaps > 0.4) >= 3


def test_every_head_labels_a_grid_cell(synthetic_splits) -> None:
    for split in synthetic_splits:
        for scene in split:
            for truth in scene.ground_truth:
                assert label_cells(replace(scene, ground_truth=(truth,))).any()


def test_head_proposals_are_a_small_minority() -> None:
    train, _, _ = generate_synthetic(SynthConfig(n_scenes=30))
    for scene in train:
        if not scene.ground_truth:
            continue
        overlaps = iou_matrix(scene.candidate_boxes(), scene.truth_boxes()).max(axis=1)
        assert np.sum(overlaps >= 0.5) <= 0.25 * len(scene.candidates)


def test_appearance_cue_follows_overlap(synthetic_splits) -> None:
    config = small_synth(n_scenes=30)
    positive = config.cue_interval(True)
    negative = config.cue_interval(False)
    assert positive == pytest.approx((-0.15, 0.85))
    assert negative == pytest.approx((-0.85, 0.15))
    train, _, _ = synthetic_splits
    for scene in train:
        for candidate in scene.candidates:
            best = max((iou(candidate.box, g.box) for g in scene.ground_truth), default=0.0)
            low, high = positive if best >= 0.5 else negative
            assert low <= candidate.descriptor[0] <= high


def test_small_heads_are_difficult(synthetic_splits) -> None:
    for split in synthetic_splits:
        for scene in split:
            for truth in scene.ground_truth:
                assert truth.difficult == (truth.box.h < 52.0)


@pytest.mark.parametrize(
    "values",
    [
        {"n_scenes": 2},
        {"descriptor_dim": 3},
        {"ambiguity_rate": 1.0},
        {"split": (4, 0, 1)},
        {"background_per_scene": -1},
    ],
)
def test_invalid_config(values) -> None:
    with pytest.raises(ConfigError):
        SynthConfig(**values)


def test_from_dict() -> None:
    config = SynthConfig.from_dict({"n_scenes": 60, "split": [1, 1, 1]})
    assert config.split == (1, 1, 1)
    assert config.split_sizes() == (20, 20, 20)
    with pytest.raises(ConfigError, match="unknown"):
        SynthConfig.from_dict({"scenes": 5})
