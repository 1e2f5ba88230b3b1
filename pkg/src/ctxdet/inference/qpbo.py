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
from collections import defaultdict
from fractions import Fraction
from typing import Dict, List, Tuple

import networkx as nx
from networkx.algorithms.flow import boykov_kolmogorov

from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.potentials import Potentials

logger = logging.getLogger(__name__)

UNDETERMINED = -1
_SOURCE = "source"
_SINK = "sink"

Node = Tuple[str, int]


def _integer_coefficients(pots: Potentials) -> Tuple[List[int], List[int]]:
    """Exact integer images of the energy E = -S under a common power-of-two scaling."""
    values = [Fraction(-float(v)) for v in list(pots.unary) + list(pots.pairwise)]
    scale = max((v.denominator for v in values), default=1)
    scaled = [int(v * scale) for v in values]
    return scaled[: len(pots.unary)], scaled[len(pots.unary) :]


def _node(p: int) -> Node:
    return ("x", p)


def _mirror(p: int) -> Node:
    return ("x_bar", p)


def _build_network(graph: SceneGraph, pots: Potentials) -> nx.DiGraph:
    """The doubled network of the energy: node pair (p, p_bar) per variable.

    A node on the sink side reads as label 1. A penalty a * x_u * (1 - x_v) with a >= 0 becomes
    the edges v -> u and u_bar -> v_bar of capacity a, so every cut costs twice the energy
    plus a constant.
    """
    unary, pairwise = _integer_coefficients(pots)
    capacity: Dict[Tuple[object, object], int] = defaultdict(int)

    def penalty(u: Node, v: Node, u_bar: Node, v_bar: Node, amount: int) -> None:
        capacity[(v, u)] += amount
        capacity[(u_bar, v_bar)] += amount

    for (p, q), b in zip(graph.edges, pairwise):
        if b <= 0:
            # b x_p x_q = b x_p + |b| x_p (1 - x_q)
            unary[p] += b
            penalty(_node(p), _node(q), _mirror(p), _mirror(q), -b)
        else:
            # b x_p x_q = b x_p (1 - x_q_bar)
            penalty(_node(p), _mirror(q), _mirror(p), _node(q), b)
    for p, c in enumerate(unary):
        if c > 0:
            capacity[(_SOURCE, _node(p))] += c
            capacity[(_mirror(p), _SINK)] += c
        elif c < 0:
            capacity[(_node(p), _SINK)] += -c
            capacity[(_SOURCE, _mirror(p))] += -c
    network = nx.DiGraph()
    network.add_nodes_from([_SOURCE, _SINK])
    network.add_nodes_from(_node(p) for p in range(graph.size))
    network.add_nodes_from(_mirror(p) for p in range(graph.size))
    for (u, v), amount in capacity.items():
        if amount > 0:
            network.add_edge(u, v, capacity=amount)
    return network


def qpbo_labels(graph: SceneGraph, pots: Potentials) -> Tuple[int, ...]:
    """Persistent labels from the roof-dual min cut of the negated score.

    The score is turned into the energy E = -S and the doubled network is cut exactly (all
    capacities are integers). A node is labelled 1 when it lies on the sink side and its mirror
    on the source side, 0 in the opposite case, and left undetermined otherwise. Every
    determined label agrees with at least one global maximiser of S.

    Args:
        graph (SceneGraph): The graph.
        pots (Potentials): Potentials sized to the graph.

    Returns:
        Tuple[int, ...]: 0, 1 or UNDETERMINED (-1) per node.
    """
    pots.check(graph)
    if graph.size == 0:
        return ()
    network = _build_network(graph, pots)
    _, (source_side, _) = nx.minimum_cut(network, _SOURCE, _SINK, flow_func=boykov_kolmogorov)
    labels = []
    for p in range(graph.size):
        node_source = _node(p) in source_side
        mirror_source = _mirror(p) in source_side
        if not node_source and mirror_source:
            labels.append(1)
        elif node_source and not mirror_source:
            labels.append(0)
        else:
            labels.append(UNDETERMINED)
    determined = sum(label != UNDETERMINED for label in labels)
    logger.debug("QPBO determined %d of %d nodes", determined, len(labels))
    return tuple(labels)
