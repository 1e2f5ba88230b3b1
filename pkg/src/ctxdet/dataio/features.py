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

from typing import Protocol

import numpy as np

from ctxdet.dataio.scenes import SceneRecord
from ctxdet.exceptions import DimensionMismatchError


class FeatureProvider(Protocol):
    """
    Source of the per-candidate and per-scene input vectors fed to the networks. It stands in
    for the convolutional feature extraction of an image-based detector.
    """

    def candidate_features(self, scene: SceneRecord) -> np.ndarray:
        """Per-candidate input rows.

        Args:
            scene (SceneRecord): The scene.

        Returns:
            ndarray: Array of shape (num_candidates, D).
        """

    def scene_features(self, scene: SceneRecord) -> np.ndarray:
        """Whole-scene input vector.

        Args:
            scene (SceneRecord): The scene.

        Returns:
            ndarray: Vector consumed by the global model.
        """


class RecordFeatureProvider:
    """Reads the descriptors stored in the scene records themselves."""

    def candidate_features(self, scene: SceneRecord) -> np.ndarray:
        return scene.descriptors()

    def scene_features(self, scene: SceneRecord) -> np.ndarray:
        if scene.scene_descriptor is None:
            raise DimensionMismatchError(f"scene '{scene.scene_id}' has no scene descriptor")
        return scene.scene_descriptor
