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

import numpy as np
import pytest
from utils_for_testing import brute_force_max_marginals, random_problem

from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.exhaustive import maximize
from ctxdet.inference.potentials import Potentials
from ctxdet.inference.qpbo import UNDETERMINED, qpbo_labels


@pytest.mark.parametrize("size", [2, 4, 7, 10])
def test_determined_labels_are_persistent(rng, size) -> None:
    for _ in range(20):
        graph, pots = random_problem(rng, size)
        labels = qpbo_labels(graph, pots)
        assert set(labels) <= {0, 1, UNDETERMINED}
        fixed = {p: label for p, label in enumerate(labels) if label != UNDETERMINED}
        optimum = brute_force_max_marginals(graph, pots).max()
        assert maximize(graph, pots, fixed)[0] == pytest.approx(optimum, abs=1e-9)


def test_attractive_problems_are_solved(rng) -> None:
    for _ in range(20):
        graph, pots = random_problem(rng, 8)
        attractive = Potentials(pots.unary, np.abs(pots.pairwise))
        labels = qpbo_labels(graph, attractive)
        assert UNDETERMINED not in labels
        assert labels == maximize(graph, attractive)[1]


@pytest.mark.parametrize("unary, expected", [(2.0, (1,)), (-2.0, (0,))])
def test_single_node(unary, expected) -> None:
    assert qpbo_labels(SceneGraph.complete(1), Potentials([unary], [])) == expected


def test_frustrated_pair_stays_open() -> None:
    # both single-head labelings tie at the optimum
    labels = qpbo_labels(SceneGraph.complete(2), Potentials([1.0, 1.0], [-3.0]))
    assert labels == (UNDETERMINED, UNDETERMINED)


def test_empty_graph() -> None:
    assert qpbo_labels(SceneGraph.complete(0), Potentials([], [])) == ()
