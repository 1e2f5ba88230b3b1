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

from typing import Optional


class CtxDetError(Exception):
    """Root of every error raised by the head detection toolkit."""

    exit_code = 2


class ConfigError(CtxDetError):
    """A configuration file or command-line value is invalid."""

    exit_code = 1


class InvalidBoxError(CtxDetError, ValueError):
    """A bounding box violates w > 0 and h > 0."""

    exit_code = 1


class DimensionMismatchError(CtxDetError, ValueError):
    """Array dimensions do not chain (network input, descriptor width, model/scene pairing)."""

    exit_code = 1


class SceneFormatError(CtxDetError):
    """A scenes or detections file line cannot be parsed."""

    exit_code = 1

    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SceneValidationError(CtxDetError):
    """A parsed scene record violates a record invariant."""

    exit_code = 1

    def __init__(self, scene_id: str, message: str) -> None:
        super().__init__(f"scene '{scene_id}': {message}")
        self.scene_id = scene_id


class MissingModelError(CtxDetError):
    """A command needs a model file that was not supplied."""

    exit_code = 1


class ModelFormatError(CtxDetError):
    """A model file is not a valid model container or does not fit the requested model."""

    exit_code = 1


class NonFiniteError(CtxDetError):
    """A loss or gradient became NaN or infinite; training halts."""

    def __init__(self, message: str, scene_id: Optional[str] = None) -> None:
        if scene_id is not None:
            message = f"{message} (scene '{scene_id}')"
        super().__init__(message)
        self.scene_id = scene_id


class StaleTapeError(CtxDetError):
    """A backward pass was requested with a tape recorded before the last parameter update."""


class NonSmoothPointError(CtxDetError):
    """A finite-difference probe crossed a relu kink or a max-marginal tie."""


class InferenceSizeError(CtxDetError, ValueError):
    """Exact inference was requested on more than 20 nodes."""


class ClusteringError(CtxDetError):
    """k-means was asked for more clusters than there are distinct points."""


class EvaluationError(CtxDetError):
    """Evaluation input is degenerate (no positives, empty curve, empty validation set)."""


class VerificationError(CtxDetError):
    """A verification suite reported at least one failing check."""
