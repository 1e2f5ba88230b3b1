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
from typing import Sequence, Tuple

import numpy as np

from ctxdet.exceptions import DimensionMismatchError, NonFiniteError
from ctxdet.graph.scene_graph import SceneGraph

Labeling = Tuple[int, ...]


@dataclass(frozen=True)
class Potentials:
    """Unary potential per node and the potential of the selected edge type per edge."""

    unary: np.ndarray
    pairwise: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "unary", np.asarray(self.unary, dtype=np.float64).reshape(-1))
        object.__setattr__(
            self, "pairwise", np.asarray(self.pairwise, dtype=np.float64).reshape(-1)
        )
        if not (np.all(np.isfinite(self.unary)) and np.all(np.isfinite(self.pairwise))):
            raise NonFiniteError("potentials must be finite")

    def check(self, graph: SceneGraph) -> None:
        if self.unary.shape != (graph.size,) or self.pairwise.shape != (len(graph.edges),):
            raise DimensionMismatchError(
                f"potentials ({self.unary.size}, {self.pairwise.size}) do not fit a graph with "
                f"{graph.size} nodes and {len(graph.edges)} edges"
            )


def pairwise_matrix(graph: SceneGraph, pots: Potentials) -> np.ndarray:
    """Upper-triangular matrix W with S(y) = y.u + y.W.y.

    Args:
        graph (SceneGraph): The graph.
        pots (Potentials): Potentials sized to the graph.

    Returns:
        ndarray: Matrix of shape (n, n); entry (min(p, q), max(p, q)) holds the edge potential.
    """
    matrix = np.zeros((graph.size, graph.size))
    for (p, q), value in zip(graph.edges, pots.pairwise):
        matrix[min(p, q), max(p, q)] += value
    return matrix


def joint_score(graph: SceneGraph, pots: Potentials, y: Sequence[int]) -> float:
    """Score of a labeling: sum of unaries of head nodes plus potentials of head-head edges.

    The terms are added with math.fsum, so the result is the correctly rounded exact sum and
    does not depend on term order.

    Args:
        graph (SceneGraph): The graph.
        pots (Potentials): Potentials sized to the graph.
        y (Sequence[int]): Binary label per node.

    Returns:
        float: The joint score.
    """
    pots.check(graph)
    if len(y) != graph.size:
        raise DimensionMismatchError(f"labeling of length {len(y)} for {graph.size} nodes")
    terms = [float(u) for u, label in zip(pots.unary, y) if label]
    terms.extend(
        float(value) for (p, q), value in zip(graph.edges, pots.pairwise) if y[p] and y[q]
    )
    return math.fsum(terms)
