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
from typing import Optional, Sequence, Tuple

import numpy as np

from ctxdet.dataio.scenes import Candidate, GroundTruth, SceneRecord
from ctxdet.dataio.synthetic import SynthConfig
from ctxdet.geom.boxes import BoundingBox
from ctxdet.graph.scene_graph import SceneGraph
from ctxdet.inference.potentials import Potentials

BoxSpec = Tuple[float, float, float, float]


def make_scene(
    scene_id: str = "scene",
    truths: Sequence[Tuple[BoxSpec, bool]] = (),
    candidates: Sequence[BoxSpec] = (),
    descriptors: Optional[np.ndarray] = None,
    width: float = 200.0,
    height: float = 100.0,
    scene_descriptor: Optional[np.ndarray] = None,
) -> SceneRecord:
    if descriptors is None:
        descriptors = np.zeros((len(candidates), 4))
    return SceneRecord(
        scene_id,
        width,
        height,
        tuple(GroundTruth(BoundingBox(*box), difficult) for box, difficult in truths),
        tuple(
            Candidate(BoundingBox(*box), np.asarray(d, dtype=np.float64))
            for box, d in zip(candidates, descriptors)
        ),
        scene_descriptor,
    )


def random_problem(
    rng: np.random.Generator, size: int, spread: float = 5.0, num_clusters: int = 1
) -> Tuple[SceneGraph, Potentials]:
    graph = SceneGraph.complete(size, num_clusters=num_clusters)
    pots = Potentials(
        rng.uniform(-spread, spread, size), rng.uniform(-spread, spread, len(graph.edges))
    )
    return graph, pots


def brute_force_score(graph: SceneGraph, pots: Potentials, y: Sequence[int]) -> float:
    total = sum(u for u, label in zip(pots.unary, y) if label)
    total += sum(w for (p, q), w in zip(graph.edges, pots.pairwise) if y[p] and y[q])
    return float(total)


def brute_force_max_marginals(graph: SceneGraph, pots: Potentials) -> np.ndarray:
    values = np.full((graph.size, 2), -np.inf)
    for y in itertools.product((0, 1), repeat=graph.size):
        score = brute_force_score(graph, pots, y)
        for node, label in enumerate(y):
            values[node, label] = max(values[node, label], score)
    return values


def small_synth(**overrides) -> SynthConfig:
    values = dict(n_scenes=12, background_per_scene=6, rng_seed=3)
    values.update(overrides)
    return SynthConfig(**values)
