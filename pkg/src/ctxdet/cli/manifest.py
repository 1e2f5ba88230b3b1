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

import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import yaml

from ctxdet._head_detection._version import __version__

MANIFEST_NAME = "manifest.yaml"


@dataclass
class RunManifest:
    """Everything needed to repeat a run: command line, resolved config, inputs and outputs."""

    command: str
    argv: List[str]
    config: Dict[str, Any]
    seed: Any = None
    config_path: Any = None
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    version: str = __version__
    environment: Dict[str, str] = field(
        default_factory=lambda: {
            "python": platform.python_version(),
            "numpy": np.__version__,
        }
    )

    def time(self, name: str) -> "_Timer":
        return _Timer(self, name)

    def write(self, directory: Path) -> Path:
        """Writes the manifest as YAML into the directory.

        Args:
            directory (Path): Output directory.

        Returns:
            Path: The manifest file.
        """
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / MANIFEST_NAME
        path.write_text(yaml.safe_dump(asdict(self), sort_keys=True), encoding="utf-8")
        return path


class _Timer:
    def __init__(self, manifest: RunManifest, name: str) -> None:
        self.manifest = manifest
        self.name = name
        self.start = 0.0

    def __enter__(self) -> "_Timer":
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc_info) -> None:
        self.manifest.timings[self.name] = round(time.perf_counter() - self.start, 3)


def new_manifest(command: str, config: Dict[str, Any], **kwargs: Any) -> RunManifest:
    return RunManifest(command=command, argv=list(sys.argv), config=config, **kwargs)
