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
from fractions import Fraction
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from ctxdet.exceptions import InferenceSizeError
from ctxdet.graph.scene_graph import MAX_NODES, SceneGraph
from ctxdet.inference.potentials import Labeling, Potentials, joint_score, pairwise_matrix

logger = logging.getLogger(__name__)

CHUNK_ROWS = 1 << 16


@dataclass(frozen=True)
class MaxMarginals:
    """
    `values[i, t]` is the best joint score with node i fixed to t and `labelings[i, t]` the
    lexicographically smallest labeling attaining it (first node most significant, 0 < 1).
    """

    values: np.ndarray
    labelings: np.ndarray

    @property
    def scores(self) -> np.ndarray:
        return self.values[:, 1] - self.values[:, 0]

    @property
    def map_value(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    @property
    def map_labeling(self) -> Labeling:
        """Labeling: The lexicographically smallest labeling with the MAP value."""
        if not self.values.size:
            return ()
        best = [
            tuple(int(v) for v in self.labelings[i, t])
            for i in range(len(self.values))
            for t in (0, 1)
            if self.values[i, t] == self.map_value
        ]
        return min(best)


class _Scan:
    """Enumerates the free nodes of a problem with some nodes clamped.

    Scores are computed in vectorised floating point. When every potential is a multiple of a
    common power of two small enough that all partial sums are exact, floating point ties are
    exact ties. Otherwise labelings within a small tolerance of the best are re-scored with
    joint_score before a winner is chosen.
    """

    def __init__(self, graph: SceneGraph, pots: Potentials, fixed: Dict[int, int]) -> None:
        pots.check(graph)
        self.graph = graph
        self.pots = pots
        self.free = [p for p in range(graph.size) if p not in fixed]
        if len(self.free) > MAX_NODES:
            raise InferenceSizeError(
                f"exhaustive search over {len(self.free)} nodes exceeds the limit of {MAX_NODES}"
            )
        self.base = np.zeros(graph.size, dtype=np.int8)
        for node, label in fixed.items():
            self.base[node] = label
        full = pairwise_matrix(graph, pots)
        symmetric = full + full.T
        clamped_on = np.flatnonzero(self.base)
        self.unary = pots.unary[self.free] + symmetric[np.ix_(self.free, clamped_on)].sum(axis=1)
        self.matrix = full[np.ix_(self.free, self.free)]
        self.exact = _exact_in_float(pots.unary, pots.pairwise)
        magnitude = np.abs(pots.unary).sum() + np.abs(pots.pairwise).sum()
        self.tolerance = 0.0 if self.exact else 1e-9 * magnitude + 1e-300

    def chunks(self) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yields (codes, labelings of the free nodes, reduced scores) in ascending code order."""
        size = len(self.free)
        shifts = np.arange(size - 1, -1, -1, dtype=np.int64)
        total = 1 << size
        for start in range(0, total, CHUNK_ROWS):
            codes = np.arange(start, min(start + CHUNK_ROWS, total), dtype=np.int64)
            rows = ((codes[:, None] >> shifts) & 1).astype(np.float64)
            scores = rows @ self.unary + ((rows @ self.matrix) * rows).sum(axis=1)
            yield codes, rows, scores

    def labeling(self, code: int) -> Labeling:
        y = self.base.copy()
        size = len(self.free)
        for position, node in enumerate(self.free):
            y[node] = (code >> (size - 1 - position)) & 1
        return tuple(int(v) for v in y)

    def best(self, codes: np.ndarray, scores: np.ndarray) -> Tuple[float, int]:
        """Exact best (value, code) among rows, smallest code on ties."""
        top = scores.max()
        if self.exact:
            code = int(codes[int(np.argmax(scores))])
            return joint_score(self.graph, self.pots, self.labeling(code)), code
        best_value, best_code = -np.inf, -1
        for code in codes[scores >= top - self.tolerance]:
            value = joint_score(self.graph, self.pots, self.labeling(int(code)))
            if value > best_value:
                best_value, best_code = value, int(code)
        return best_value, best_code


def _exact_in_float(*arrays: np.ndarray) -> bool:
    values = [Fraction(float(v)) for array in arrays for v in array if v != 0.0]
    if not values:
        return True
    scale = max(v.denominator for v in values)
    return sum(abs(v.numerator) * (scale // v.denominator) for v in values) < 2**53


def maximize(
    graph: SceneGraph, pots: Potentials, fixed: Optional[Dict[int, int]] = None
) -> Tuple[float, Labeling]:
    """Best labeling with some nodes clamped, by exhaustive search over the others.

    Args:
        graph (SceneGraph): The graph.
        pots (Potentials): Potentials sized to the graph.
        fixed (Optional[Dict[int, int]]): Clamped labels by node position.

    Returns:
        Tuple[float, Labeling]: The best joint score and the lexicographically smallest
        labeling attaining it.

    Raises:
        InferenceSizeError: If more than 20 nodes are free.
    """
    scan = _Scan(graph, pots, dict(fixed or {}))
    best_value, best_code = -np.inf, -1
    for codes, _, scores in scan.chunks():
        value, code = scan.best(codes, scores)
        if value > best_value:
            best_value, best_code = value, code
    return best_value, scan.labeling(best_code)


def exhaustive_max_marginals(graph: SceneGraph, pots: Potentials) -> MaxMarginals:
    """Max-marginals of every node by a single pass over all labelings.

    Args:
        graph (SceneGraph): The graph, at most 20 nodes.
        pots (Potentials): Potentials sized to the graph.

    Returns:
        MaxMarginals: Values and lexicographically smallest argmax labelings.

    Raises:
        InferenceSizeError: If the graph has more than 20 nodes.
    """
    scan = _Scan(graph, pots, {})
    size = graph.size
    values = np.full((size, 2), -np.inf)
    codes_best = np.full((size, 2), -1, dtype=np.int64)
    for codes, rows, scores in scan.chunks():
        for node in range(size):
            for label in (0, 1):
                mask = rows[:, node] == label
                if not mask.any():
                    continue
                value, code = scan.best(codes[mask], scores[mask])
                if value > values[node, label]:
                    values[node, label] = value
                    codes_best[node, label] = code
    labelings = np.zeros((size, 2, size), dtype=np.int8)
    for node in range(size):
        for label in (0, 1):
            labelings[node, label] = scan.labeling(int(codes_best[node, label]))
    return MaxMarginals(values, labelings)
