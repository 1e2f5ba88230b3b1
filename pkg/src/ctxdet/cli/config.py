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

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from ctxdet.dataio.synthetic import SynthConfig
from ctxdet.exceptions import ConfigError
from ctxdet.globalmodel.combine import CombineParams
from ctxdet.globalmodel.scorer import GlobalConfig
from ctxdet.graph.scene_graph import DEFAULT_NODES, MAX_NODES
from ctxdet.inference.scores import InferenceMethod
from ctxdet.localmodel.local import LocalConfig
from ctxdet.structloss.model import PairwiseConfig

SECTIONS = ("synth", "local", "global", "pairwise", "combine", "calibrate", "detect", "verify")

# Section seed = --seed + offset, so one flag reseeds every stage without collisions.
SEED_OFFSETS = {"synth": 0, "local": 1, "global": 2, "pairwise": 3, "verify": 4}


def _from_mapping(cls: type, section: str, values: Dict[str, Any]) -> Any:
    unknown = set(values) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"{section}: {error}") from error


@dataclass(frozen=True)
class CalibrateConfig:
    alpha_step: float = 0.01
    beta_step: float = 0.1
    beta_limit: float = 10.0
    gamma_step: float = 0.01

    def __post_init__(self) -> None:
        steps = (self.alpha_step, self.beta_step, self.gamma_step)
        if min(steps) <= 0.0 or max(steps[0], steps[2]) > 1.0:
            raise ConfigError("calibrate: steps must lie in (0, 1]")
        if not 0.0 <= self.beta_limit <= 10.0:
            raise ConfigError("calibrate: beta_limit must lie in [0, 10]")


@dataclass(frozen=True)
class DetectConfig:
    nodes: int = DEFAULT_NODES
    method: InferenceMethod = InferenceMethod.EXHAUSTIVE
    keep_fraction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", InferenceMethod(self.method))
        if not 1 <= self.nodes <= MAX_NODES:
            raise ConfigError(f"detect: nodes must lie in [1, {MAX_NODES}]")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError("detect: keep_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class VerifyConfig:
    instances: int = 1000
    max_nodes: int = 16
    potential_range: float = 5.0
    loss_instances: int = 100
    loss_nodes: int = 8
    pipeline_scenes: int = 50
    pipeline_entries: int = 12
    tolerance: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.instances < 1 or self.loss_instances < 1 or self.pipeline_scenes < 1:
            raise ConfigError("verify: instance counts must be positive")
        if not 1 <= self.max_nodes <= MAX_NODES or not 2 <= self.loss_nodes <= MAX_NODES:
            raise ConfigError(f"verify: node counts must lie in [1, {MAX_NODES}]")
        if self.tolerance <= 0.0:
            raise ConfigError("verify: tolerance must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Every configurable section of a run, defaults where the YAML file is silent."""

    synth: SynthConfig = field(default_factory=SynthConfig)
    local: LocalConfig = field(default_factory=LocalConfig)
    global_: GlobalConfig = field(default_factory=GlobalConfig)
    pairwise: PairwiseConfig = field(default_factory=PairwiseConfig)
    combine: CombineParams = field(default_factory=CombineParams)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Reseeds every seeded section with seed plus the section offset.

        Args:
            seed (int): The base seed.

        Returns:
            RunConfig: The reseeded config.
        """
        return replace(
            self,
            synth=replace(self.synth, rng_seed=seed + SEED_OFFSETS["synth"]),
            local=replace(self.local, rng_seed=seed + SEED_OFFSETS["local"]),
            global_=replace(self.global_, rng_seed=seed + SEED_OFFSETS["global"]),
            pairwise=replace(self.pairwise, rng_seed=seed + SEED_OFFSETS["pairwise"]),
            verify=replace(self.verify, rng_seed=seed + SEED_OFFSETS["verify"]),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Dict[str, Any]: Plain YAML-serialisable form, keyed by section name."""
        values = {
            "synth": self.synth,
            "local": self.local,
            "global": self.global_,
            "pairwise": self.pairwise,
            "combine": self.combine,
            "calibrate": self.calibrate,
            "detect": self.detect,
            "verify": self.verify,
        }
        return {name: _plain(asdict(section)) for name, section in values.items()}


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if is_dataclass(value):
        return _plain(asdict(value))
    return value


def parse_run_config(document: Optional[Dict[str, Any]]) -> RunConfig:
    """Builds a RunConfig from a parsed YAML mapping.

    Args:
        document (Optional[Dict[str, Any]]): Mapping of section name to field values.

    Returns:
        RunConfig: The validated config.

    Raises:
        ConfigError: On unknown sections, unknown keys or invalid values.
    """
    document = document or {}
    if not isinstance(document, dict):
        raise ConfigError("the config file must hold a mapping of sections")
    unknown = set(document) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    sections = {name: document.get(name) or {} for name in SECTIONS}
    for name, values in sections.items():
        if not isinstance(values, dict):
            raise ConfigError(f"{name}: section must be a mapping")
    return RunConfig(
        synth=SynthConfig.from_dict(sections["synth"]),
        local=LocalConfig.from_dict(sections["local"]),
        global_=GlobalConfig.from_dict(sections["global"]),
        pairwise=PairwiseConfig.from_dict(sections["pairwise"]),
        combine=CombineParams.from_dict(sections["combine"]),
        calibrate=_from_mapping(CalibrateConfig, "calibrate", sections["calibrate"]),
        detect=_from_mapping(DetectConfig, "detect", sections["detect"]),
        verify=_from_mapping(VerifyConfig, "verify", sections["verify"]),
    )


def load_run_config(path: Optional[Path], seed: Optional[int] = None) -> RunConfig:
    """Reads the YAML config file (if any) and applies the seed override.

    Args:
        path (Optional[Path]): Config file; None gives all defaults.
        seed (Optional[int]): Base seed overriding every section seed.

    Returns:
        RunConfig: The run configuration.

    Raises:
        ConfigError: If the file is missing, not YAML, or invalid.
    """
    document = None
    if path is not None:
        try:
            document = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as error:
            raise ConfigError(f"cannot read config {path}: {error}") from error
        except yaml.YAMLError as error:
            raise ConfigError(f"config {path} is not valid YAML: {error}") from error
    config = parse_run_config(document)
    return config.with_seed(seed) if seed is not None else config


def load_combine_params(path: Path) -> CombineParams:
    """Reads combination weights from a YAML file with alpha, beta and gamma keys.

    Args:
        path (Path): The file written by the calibrate command.

    Returns:
        CombineParams: The weights.
    """
    try:
        document = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as error:
        raise ConfigError(f"cannot read combine parameters {path}: {error}") from error
    if not isinstance(document, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return CombineParams.from_dict(document.get("combine", document))
