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

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ctxdet.exceptions import ConfigError

Score = Union[float, np.ndarray]


@dataclass(frozen=True)
class CombineParams:
    """Weights of the score combinations: alpha and beta merge the local and pairwise scores,
    gamma merges the result with the global score."""

    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha {self.alpha} outside [0, 1]")
        if not -10.0 <= self.beta <= 10.0:
            raise ConfigError(f"beta {self.beta} outside [-10, 10]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1]")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "CombineParams":
        if not isinstance(values, dict):
            raise ConfigError("combine: expected a mapping of alpha, beta and gamma")
        unknown = set(values) - {"alpha", "beta", "gamma"}
        if unknown:
            raise ConfigError(f"combine: unknown keys {sorted(unknown)}")
        converted = {}
        for key, value in values.items():
            try:
                converted[key] = float(value)
            except (TypeError, ValueError) as error:
                raise ConfigError(f"combine: {key} must be a number, got {value!r}") from error
        return cls(**converted)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def combine_local_pairwise(s_l: Score, s_p: Optional[Score], params: CombineParams) -> Score:
    """alpha * s_l + (1 - alpha) * s_p + beta, or s_l where the pairwise score is missing.

    Works on scalars (None marks a missing pairwise score) and on arrays (NaN marks one).

    Args:
        s_l (Score): Local score(s).
        s_p (Optional[Score]): Pairwise score(s).
        params (CombineParams): Combination weights.

    Returns:
        Score: The merged score(s), same kind as s_l.
    """
    if np.ndim(s_l) == 0:
        if s_p is None or (isinstance(s_p, float) and math.isnan(s_p)):
            return float(s_l)
        return params.alpha * float(s_l) + (1.0 - params.alpha) * float(s_p) + params.beta
    s_l = np.asarray(s_l, dtype=np.float64)
    if s_p is None:
        return s_l.copy()
    s_p = np.asarray(s_p, dtype=np.float64)
    merged = params.alpha * s_l + (1.0 - params.alpha) * s_p + params.beta
    return np.where(np.isnan(s_p), s_l, merged)


def combine_with_global(s_lp: Score, s_g: Score, params: CombineParams) -> Score:
    """gamma * s_lp + (1 - gamma) * s_g, on scalars or arrays.

    Args:
        s_lp (Score): Local (or local plus pairwise) score(s).
        s_g (Score): Score(s) of the matched global cells.
        params (CombineParams): Combination weights.

    Returns:
        Score: The final score(s).
    """
    if np.ndim(s_lp) == 0:
        return params.gamma * float(s_lp) + (1.0 - params.gamma) * float(s_g)
    s_lp = np.asarray(s_lp, dtype=np.float64)
    return params.gamma * s_lp + (1.0 - params.gamma) * np.asarray(s_g, dtype=np.float64)


def filter_candidates(cell_scores: np.ndarray, keep_fraction: float) -> Tuple[int, ...]:
    """Keeps the candidates whose matched global cells score highest.

    Args:
        cell_scores (ndarray): Matched cell score per candidate (see candidate_cell_scores).
        keep_fraction (float): Fraction in (0, 1] of candidates to keep, rounded up.

    Returns:
        Tuple[int, ...]: Kept candidate indices in ascending order; among equal scores the
        lower index is kept first.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ConfigError(f"keep_fraction {keep_fraction} outside (0, 1]")
    cell_scores = np.asarray(cell_scores, dtype=np.float64)
    # rounding first keeps 0.3 * 10 at 3
    keep = math.ceil(round(keep_fraction * len(cell_scores), 9))
    order = np.argsort(-cell_scores, kind="stable")[:keep]
    return tuple(int(i) for i in np.sort(order))
