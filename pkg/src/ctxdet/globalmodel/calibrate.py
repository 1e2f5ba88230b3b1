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
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ctxdet.evalkit.evaluator import DetectionEvaluator
from ctxdet.exceptions import EvaluationError
from ctxdet.globalmodel.combine import CombineParams

logger = logging.getLogger(__name__)


def search_grid(low: float, high: float, step: float) -> Tuple[float, ...]:
    """Evenly spaced values from low to high inclusive, rounded to shed float drift."""
    count = int(round((high - low) / step))
    return tuple(round(low + i * step, 10) for i in range(count + 1))


ALPHA_GRID = search_grid(0.0, 1.0, 0.01)
BETA_GRID = search_grid(-10.0, 10.0, 0.1)
GAMMA_GRID = search_grid(0.0, 1.0, 0.01)


@dataclass(frozen=True)
class ComponentScores:
    """
    Scores of one scene's detections from each model. `pairwise` holds NaN for detections
    outside the pairwise graph; `pairwise` or `global_cell` is None when that model is unused.
    """

    local: np.ndarray
    pairwise: Optional[np.ndarray] = None
    global_cell: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CalibrationResult:
    params: CombineParams
    ap_local: float
    ap_local_pairwise: float
    ap_full: float


def calibrate(
    evaluator: DetectionEvaluator,
    components: Dict[str, ComponentScores],
    alpha_grid: Sequence[float] = ALPHA_GRID,
    beta_grid: Sequence[float] = BETA_GRID,
    gamma_grid: Sequence[float] = GAMMA_GRID,
) -> CalibrationResult:
    """Grid search of the combination weights for validation AP.

    First (alpha, beta) are chosen on the local plus pairwise score, then gamma on its
    combination with the global score. Ties go to the lexicographically smallest (alpha, beta)
    and the smallest gamma. Without pairwise scores alpha = 1 and beta = 0 are kept; without
    global scores gamma = 1 is kept.

    Args:
        evaluator (DetectionEvaluator): Evaluator over the validation detections.
        components (Dict[str, ComponentScores]): Component scores per scene_id, aligned with
            the evaluator's boxes.
        alpha_grid (Sequence[float]): Candidate alphas. Default: 0 to 1 by 0.01.
        beta_grid (Sequence[float]): Candidate betas. Default: -10 to 10 by 0.1.
        gamma_grid (Sequence[float]): Candidate gammas. Default: 0 to 1 by 0.01.

    Returns:
        CalibrationResult: Chosen weights and the validation AP at each stage.

    Raises:
        EvaluationError: If there are no validation detections.
    """
    if not components or not len(evaluator):
        raise EvaluationError("calibration needs validation detections")
    local = evaluator.flatten({k: c.local for k, c in components.items()})
    ap_local = evaluator.curve(local).ap
    alpha, beta = 1.0, 0.0
    has_pairwise = all(c.pairwise is not None for c in components.values())
    merged = local
    ap_pairwise = ap_local
    if has_pairwise:
        pairwise = evaluator.flatten({k: c.pairwise for k, c in components.items()})
        present = ~np.isnan(pairwise)
        best = -1.0
        for a in sorted(alpha_grid):
            base = np.where(present, a * local + (1.0 - a) * np.nan_to_num(pairwise), local)
            for b in sorted(beta_grid):
                ap = evaluator.curve(np.where(present, base + b, local)).ap
                if ap > best:
                    best, alpha, beta = ap, a, b
        ap_pairwise = best
        merged = np.where(
            present, alpha * local + (1.0 - alpha) * np.nan_to_num(pairwise) + beta, local
        )
        logger.info("calibrated alpha %.2f beta %.1f: AP %.4f", alpha, beta, ap_pairwise)
    gamma = 1.0
    ap_full = ap_pairwise
    if all(c.global_cell is not None for c in components.values()):
        cells = evaluator.flatten({k: c.global_cell for k, c in components.items()})
        best = -1.0
        for g in sorted(gamma_grid):
            ap = evaluator.curve(g * merged + (1.0 - g) * cells).ap
            if ap > best:
                best, gamma = ap, g
        ap_full = best
        logger.info("calibrated gamma %.2f: AP %.4f", gamma, ap_full)
    return CalibrationResult(CombineParams(alpha, beta, gamma), ap_local, ap_pairwise, ap_full)
