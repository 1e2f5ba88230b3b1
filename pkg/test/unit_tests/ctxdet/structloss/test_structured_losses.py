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

import itertools
import math

import numpy as np
import pytest
from utils_for_testing import brute_force_max_marginals, brute_force_score, random_problem

from ctxdet.exceptions import ConfigError, DimensionMismatchError
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.potentials import Potentials
from ctxdet.structloss.losses import (
    LossKind,
    LossSpec,
    hamming_augmented,
    ssvm_loss,
    structured_loss,
    surrogate_loss,
    surrogate_v,
)


def _hamming(y, truth, spec):
    return sum(
        spec.weight_negative if t == 0 else spec.weight_positive
        for label, t in zip(y, truth)
        if label != t
    )


def _perturbed(pots, kind, index, step):
    unary = pots.unary.copy()
    pairwise = pots.pairwise.copy()
    (unary if kind == "unary" else pairwise)[index] += step
    return Potentials(unary, pairwise)


def test_surrogate_v() -> None:
    np.testing.assert_allclose(surrogate_v(np.array([0.0, 800.0])), [math.log(2.0), 0.0])
    assert surrogate_v(np.array([-800.0]))[0] == 800.0


def test_surrogate_loss_value(rng) -> None:
    graph, pots = random_problem(rng, 6)
    truth = (1, 0, 0, 1, 1, 0)
    marginals = brute_force_max_marginals(graph, pots)
    scores = marginals[:, 1] - marginals[:, 0]
    sign = np.where(np.array(truth) == 1, 1.0, -1.0)
    loss, _ = surrogate_loss(graph, pots, truth)
    assert loss == pytest.approx(float(np.sum(np.log1p(np.exp(-sign * scores)))), rel=1e-12)


def test_single_node_surrogate() -> None:
    loss, grad = surrogate_loss(SceneGraph.complete(1), Potentials([0.7], []), (1,))
    assert loss == pytest.approx(math.log1p(math.exp(-0.7)))
    np.testing.assert_allclose(grad.unary, [-1.0 / (1.0 + math.exp(0.7))])
    assert grad.pairwise.shape == (0,)


def test_surrogate_gradient_matches_finite_differences(rng) -> None:
    step = 1e-6
    for _ in range(5):
        graph, pots = random_problem(rng, 5)
        truth = tuple(int(t) for t in rng.integers(0, 2, 5))
        _, grad = surrogate_loss(graph, pots, truth)
        for kind, analytic in (("unary", grad.unary), ("pairwise", grad.pairwise)):
            for index in range(len(analytic)):
                plus, _ = surrogate_loss(graph, _perturbed(pots, kind, index, step), truth)
                minus, _ = surrogate_loss(graph, _perturbed(pots, kind, index, -step), truth)
                assert analytic[index] == pytest.approx((plus - minus) / (2 * step), abs=1e-6)


def test_ssvm_zero_when_truth_wins_by_margin() -> None:
    graph = SceneGraph.complete(2)
    loss, grad = ssvm_loss(graph, Potentials([5.0, -5.0], [0.0]), (1, 0), LossSpec("ssvm_hamming"))
    assert loss == 0.0
    np.testing.assert_array_equal(grad.unary, [0.0, 0.0])
    np.testing.assert_array_equal(grad.pairwise, [0.0])


def test_ssvm_violated_margin() -> None:
    graph = SceneGraph.complete(2)
    spec = LossSpec(LossKind.SSVM_HAMMING)
    loss, grad = ssvm_loss(graph, Potentials([-1.0, 0.0], [0.0]), (1, 0), spec)
    assert loss == 3.0
    np.testing.assert_array_equal(grad.unary, [-1.0, 1.0])
    np.testing.assert_array_equal(grad.pairwise, [0.0])


@pytest.mark.parametrize("weights", [(1.0, 1.0), (2.0, 0.5), (0.0, 3.0)])
def test_ssvm_matches_enumeration(rng, weights) -> None:
    spec = LossSpec(LossKind.SSVM_HAMMING, *weights)
    for _ in range(10):
        graph, pots = random_problem(rng, 5)
        truth = tuple(int(t) for t in rng.integers(0, 2, 5))
        expected = max(
            brute_force_score(graph, pots, y) + _hamming(y, truth, spec)
            for y in itertools.product((0, 1), repeat=5)
        ) - brute_force_score(graph, pots, truth)
        loss, _ = ssvm_loss(graph, pots, truth, spec)
        assert loss >= 0.0
        assert loss == pytest.approx(expected, abs=1e-9)


def test_hamming_augmentation_is_exact(rng) -> None:
    spec = LossSpec(LossKind.SSVM_HAMMING, weight_negative=2.0, weight_positive=0.5)
    graph, pots = random_problem(rng, 4)
    truth = (0, 1, 1, 0)
    augmented, constant = hamming_augmented(pots, truth, spec)
    assert constant == 1.0
    for y in itertools.product((0, 1), repeat=4):
        assert brute_force_score(graph, augmented, y) + constant == pytest.approx(
            brute_force_score(graph, pots, y) + _hamming(y, truth, spec)
        )


def test_structured_loss_dispatch(rng) -> None:
    graph, pots = random_problem(rng, 4)
    truth = (1, 0, 1, 0)
    ssvm = LossSpec(LossKind.SSVM_HAMMING)
    assert structured_loss(graph, pots, truth, ssvm)[0] == ssvm_loss(graph, pots, truth, ssvm)[0]
    assert structured_loss(graph, pots, truth, LossSpec())[0] == surrogate_loss(
        graph, pots, truth
    )[0]


def test_loss_spec_validation() -> None:
    assert LossSpec(kind="ssvm_hamming", method="cascade").kind == LossKind.SSVM_HAMMING
    with pytest.raises(ConfigError):
        LossSpec(weight_negative=-1.0)
    with pytest.raises(ValueError):
        LossSpec(kind="hinge")


def test_truth_must_fit_graph(rng) -> None:
    graph, pots = random_problem(rng, 3)
    with pytest.raises(DimensionMismatchError):
        surrogate_loss(graph, pots, (1, 0))
    with pytest.raises(DimensionMismatchError):
        ssvm_loss(graph, pots, (1, 0, 0, 1), LossSpec(LossKind.SSVM_HAMMING))
