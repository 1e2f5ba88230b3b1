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

from ctxdet.exceptions import DimensionMismatchError
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.exhaustive import exhaustive_max_marginals
from ctxdet.inference.potentials import Potentials, joint_score
from ctxdet.inference.scores import InferenceMethod, candidate_scores, cascade_max_marginals


@pytest.mark.parametrize("size", [1, 3, 6, 10])
def test_cascade_equals_exhaustive(rng, size) -> None:
    for _ in range(15):
        graph, pots = random_problem(rng, size, num_clusters=3)
        cascade = cascade_max_marginals(graph, pots)
        exhaustive = exhaustive_max_marginals(graph, pots)
        np.testing.assert_array_equal(cascade.values, exhaustive.values)
        for node in range(size):
            for label in (0, 1):
                y = cascade.labelings[node, label]
                assert y[node] == label
                assert joint_score(graph, pots, y) == cascade.values[node, label]


def test_cascade_with_ties(rng) -> None:
    for _ in range(30):
        graph = SceneGraph.complete(6)
        pots = Potentials(
            rng.integers(-3, 4, 6) / 2.0, rng.integers(-3, 4, len(graph.edges)) / 2.0
        )
        np.testing.assert_array_equal(
            cascade_max_marginals(graph, pots).values, brute_force_max_marginals(graph, pots)
        )


@pytest.mark.parametrize("method", list(InferenceMethod))
def test_candidate_scores(rng, method) -> None:
    graph, pots = random_problem(rng, 7)
    scores, labeling, marginals = candidate_scores(graph, pots, method)
    expected = brute_force_max_marginals(graph, pots)
    np.testing.assert_allclose(scores, expected[:, 1] - expected[:, 0], atol=1e-12)
    assert joint_score(graph, pots, labeling) == pytest.approx(expected.max(), abs=1e-12)
    assert scores.shape == (7,)


def test_methods_agree(rng) -> None:
    graph, pots = random_problem(rng, 9)
    exhaustive, _, _ = candidate_scores(graph, pots, InferenceMethod.EXHAUSTIVE)
    cascade, _, _ = candidate_scores(graph, pots, "cascade")
    np.testing.assert_array_equal(exhaustive, cascade)


def test_candidate_scores_check_sizes() -> None:
    with pytest.raises(DimensionMismatchError):
        candidate_scores(SceneGraph.complete(3), Potentials([0.0, 0.0], [0.0]))
