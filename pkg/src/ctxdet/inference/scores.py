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
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from ctxdet.exceptions import DimensionMismatchError
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.exhaustive import MaxMarginals, exhaustive_max_marginals, maximize
from ctxdet.inference.potentials import Labeling, Potentials
from ctxdet.inference.qpbo import UNDETERMINED, qpbo_labels

logger = logging.getLogger(__name__)


class InferenceMethod(str, Enum):
    EXHAUSTIVE = "exhaustive"
    CASCADE = "cascade"


def _clamped(graph: SceneGraph, pots: Potentials, node: int, label: int) -> Dict[int, int]:
    """QPBO labels of the problem with one node clamped, as a map of fixed nodes."""
    others = [p for p in range(graph.size) if p != node]
    position = {p: index for index, p in enumerate(others)}
    unary = pots.unary[others].copy()
    edges = []
    clusters = []
    pairwise = []
    for (p, q), k, value in zip(graph.edges, graph.clusters, pots.pairwise):
        if node in (p, q):
            if label:
                unary[position[q if p == node else p]] += value
            continue
        edges.append((position[p], position[q]))
        clusters.append(k)
        pairwise.append(value)
    reduced = SceneGraph(
        tuple(graph.nodes[p] for p in others), tuple(edges), tuple(clusters), graph.num_clusters
    )
    labels = qpbo_labels(reduced, Potentials(unary, np.asarray(pairwise, dtype=np.float64)))
    fixed = {others[index]: value for index, value in enumerate(labels) if value != UNDETERMINED}
    fixed[node] = label
    return fixed


def cascade_max_marginals(graph: SceneGraph, pots: Potentials) -> MaxMarginals:
    """Max-marginals through QPBO clamping followed by exhaustive search over the rest.

    QPBO on the full problem gives persistent labels; clamping them and enumerating the
    remaining nodes yields the MAP, which is the max-marginal of every node at its determined
    label. Each remaining (node, label) pair is solved by clamping the node, running QPBO on
    the reduced problem and enumerating what it leaves undetermined.

    Args:
        graph (SceneGraph): The graph.
        pots (Potentials): Potentials sized to the graph.

    Returns:
        MaxMarginals: Values equal to exhaustive_max_marginals; argmax labelings are maximisers
        but not necessarily the lexicographically smallest ones.
    """
    pots.check(graph)
    labels = qpbo_labels(graph, pots)
    fixed = {p: label for p, label in enumerate(labels) if label != UNDETERMINED}
    map_value, map_labeling = maximize(graph, pots, fixed)
    values = np.empty((graph.size, 2))
    labelings = np.zeros((graph.size, 2, graph.size), dtype=np.int8)
    for node in range(graph.size):
        for label in (0, 1):
            if map_labeling[node] == label:
                values[node, label], best = map_value, map_labeling
            else:
                values[node, label], best = maximize(
                    graph, pots, _clamped(graph, pots, node, label)
                )
            labelings[node, label] = best
    return MaxMarginals(values, labelings)


def candidate_scores(
    graph: SceneGraph, pots: Potentials, method: InferenceMethod = InferenceMethod.EXHAUSTIVE
) -> Tuple[np.ndarray, Labeling, MaxMarginals]:
    """Individual scores as differences of max-marginals, with the MAP labeling.

    Args:
        graph (SceneGraph): The graph, at most 20 nodes.
        pots (Potentials): Potentials sized to the graph.
        method (InferenceMethod): Exhaustive or cascade; both give identical scores.
            Default: exhaustive.

    Returns:
        Tuple[ndarray, Labeling, MaxMarginals]: Score per node, a MAP labeling and the
        max-marginals the scores were taken from.
    """
    if graph.size != len(pots.unary):
        raise DimensionMismatchError("potentials do not match the graph")
    method = InferenceMethod(method)
    if method == InferenceMethod.EXHAUSTIVE:
        marginals = exhaustive_max_marginals(graph, pots)
        labeling = marginals.map_labeling
    else:
        marginals = cascade_max_marginals(graph, pots)
        labeling = tuple(int(v) for v in marginals.labelings[0, 0]) if graph.size else ()
        if graph.size and marginals.values[0, 1] > marginals.values[0, 0]:
            labeling = tuple(int(v) for v in marginals.labelings[0, 1])
    return marginals.scores, labeling, marginals
