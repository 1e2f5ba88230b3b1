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
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from ctxdet.exceptions import ConfigError, DimensionMismatchError
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.exhaustive import maximize
from ctxdet.inference.potentials import Labeling, Potentials, joint_score
from ctxdet.inference.scores import InferenceMethod, candidate_scores
from ctxdet.nets.losses import sigmoid, softplus


class LossKind(str, Enum):
    SSVM_HAMMING = "ssvm_hamming"
    SCORE_SURROGATE = "score_surrogate"


@dataclass(frozen=True)
class LossSpec:
    """Which structured loss to train with.

    `weight_negative` is the Hamming penalty for labelling a background node as a head and
    `weight_positive` the penalty for missing a head; both only matter for the SSVM loss.
    """

    kind: LossKind = LossKind.SCORE_SURROGATE
    weight_negative: float = 1.0
    weight_positive: float = 1.0
    method: InferenceMethod = InferenceMethod.EXHAUSTIVE

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LossKind(self.kind))
        object.__setattr__(self, "method", InferenceMethod(self.method))
        if self.weight_negative < 0.0 or self.weight_positive < 0.0:
            raise ConfigError("Hamming weights must be non-negative")


def surrogate_v(t: np.ndarray) -> np.ndarray:
    """v(t) = log(1 + exp(-t))."""
    return softplus(-np.asarray(t, dtype=np.float64))


def _check_truth(graph: SceneGraph, truth: Sequence[int]) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (graph.size,):
        raise DimensionMismatchError(f"truth of length {truth.size} for {graph.size} nodes")
    return truth


def _indicator_gradient(graph: SceneGraph, plus: np.ndarray, minus: np.ndarray) -> Potentials:
    """Gradient of S(plus) - S(minus) with respect to the potentials."""
    edges = graph.edge_array
    pairwise = (
        plus[edges[:, 0]] * plus[edges[:, 1]] - minus[edges[:, 0]] * minus[edges[:, 1]]
        if len(edges)
        else np.zeros(0)
    )
    return Potentials((plus - minus).astype(np.float64), np.asarray(pairwise, dtype=np.float64))


def surrogate_loss(
    graph: SceneGraph,
    pots: Potentials,
    truth: Sequence[int],
    method: InferenceMethod = InferenceMethod.EXHAUSTIVE,
) -> Tuple[float, Potentials]:
    """Score surrogate loss: v(s_i) over heads plus v(-s_i) over background nodes.

    The individual score s_i is the difference of the two max-marginals of node i, so its
    derivative with respect to a potential is the difference of that potential's indicator in
    the two argmax labelings.

    Args:
        graph (SceneGraph): The graph, at most 20 nodes.
        pots (Potentials): Potentials sized to the graph.
        truth (Sequence[int]): Ground-truth label per node.
        method (InferenceMethod): How max-marginals are computed. Default: exhaustive.

    Returns:
        Tuple[float, Potentials]: Loss summed over nodes and its gradient with respect to
        the unary and pairwise potentials.
    """
    truth = _check_truth(graph, truth)
    scores, _, marginals = candidate_scores(graph, pots, method)
    sign = np.where(truth == 1, 1.0, -1.0)
    loss = math.fsum(surrogate_v(sign * scores))
    score_gradient = -sign * sigmoid(-sign * scores)
    with_head = marginals.labelings[:, 1, :].astype(np.float64)
    without_head = marginals.labelings[:, 0, :].astype(np.float64)
    unary = score_gradient @ (with_head - without_head)
    edges = graph.edge_array
    if len(edges):
        both_with = with_head[:, edges[:, 0]] * with_head[:, edges[:, 1]]
        both_without = without_head[:, edges[:, 0]] * without_head[:, edges[:, 1]]
        pairwise = score_gradient @ (both_with - both_without)
    else:
        pairwise = np.zeros(0)
    return loss, Potentials(unary, pairwise)


def hamming_augmented(
    pots: Potentials, truth: Sequence[int], spec: LossSpec
) -> Tuple[Potentials, float]:
    """Folds the weighted Hamming loss into the unaries.

    Args:
        pots (Potentials): The potentials.
        truth (Sequence[int]): Ground-truth labels.
        spec (LossSpec): Hamming weights.

    Returns:
        Tuple[Potentials, float]: Augmented potentials and the constant term, so that
        S(y) + h(y, truth) equals the augmented score of y plus the constant.
    """
    truth = np.asarray(truth, dtype=np.int64)
    delta = np.where(truth == 1, -spec.weight_positive, spec.weight_negative)
    constant = spec.weight_positive * float(np.sum(truth == 1))
    return Potentials(pots.unary + delta, pots.pairwise), constant


def _augmented_value(
    graph: SceneGraph, pots: Potentials, y: Labeling, truth: np.ndarray, spec: LossSpec
) -> float:
    hamming = [
        spec.weight_negative if t == 0 else spec.weight_positive
        for label, t in zip(y, truth)
        if label != t
    ]
    return math.fsum([joint_score(graph, pots, y)] + hamming)


def ssvm_loss(
    graph: SceneGraph, pots: Potentials, truth: Sequence[int], spec: LossSpec
) -> Tuple[float, Potentials]:
    """Structured hinge loss with a weighted Hamming margin.

    Args:
        graph (SceneGraph): The graph, at most 20 nodes.
        pots (Potentials): Potentials sized to the graph.
        truth (Sequence[int]): Ground-truth label per node.
        spec (LossSpec): Hamming weights.

    Returns:
        Tuple[float, Potentials]: max_y (S(y) + h(y, truth)) - S(truth), never negative, and
        the subgradient given by the indicator difference between the loss-augmented argmax
        and the truth.
    """
    truth = _check_truth(graph, truth)
    augmented, _ = hamming_augmented(pots, truth, spec)
    _, best = maximize(graph, augmented)
    truth_labeling = tuple(int(t) for t in truth)
    truth_score = joint_score(graph, pots, truth_labeling)
    best_value = _augmented_value(graph, pots, best, truth, spec)
    if truth_score >= best_value:
        best, loss = truth_labeling, 0.0
    else:
        loss = max(0.0, math.fsum([best_value, -truth_score]))
    return loss, _indicator_gradient(graph, np.asarray(best, dtype=np.int64), truth)


def structured_loss(
    graph: SceneGraph, pots: Potentials, truth: Sequence[int], spec: LossSpec
) -> Tuple[float, Potentials]:
    """Dispatches on `spec.kind`."""
    if spec.kind == LossKind.SSVM_HAMMING:
        return ssvm_loss(graph, pots, truth, spec)
    return surrogate_loss(graph, pots, truth, spec.method)
