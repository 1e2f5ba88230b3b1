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

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np

from ctxdet.dataio.scenes import SceneRecord
from ctxdet.exceptions import InferenceSizeError, NonFiniteError, SceneValidationError
from ctxdet.geom.boxes import BoundingBox, iou_matrix, nms
from ctxdet.graph.clustering import EdgeClusterModel, assign_clusters

MAX_NODES = 20
DEFAULT_NODES = 16
NMS_THRESHOLD = 0.3
TRUTH_IOU = 0.5


@dataclass(frozen=True)
class SceneGraph:
    """
    The candidates of one scene taken as nodes, with oriented edges between node positions.

    `nodes` holds candidate indices into the scene; `edges` holds pairs of positions into
    `nodes` (first endpoint is the left box) and `clusters` the zero-based edge type per edge.
    """

    nodes: Tuple[int, ...]
    edges: Tuple[Tuple[int, int], ...]
    clusters: Tuple[int, ...]
    num_clusters: int = 1
    truth: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        size = len(self.nodes)
        if len(self.clusters) != len(self.edges):
            raise ValueError("need one cluster index per edge")
        seen = set()
        for (i, j), k in zip(self.edges, self.clusters):
            if i == j or not (0 <= i < size and 0 <= j < size):
                raise ValueError(f"edge ({i}, {j}) does not join two distinct nodes")
            pair = frozenset((i, j))
            if pair in seen:
                raise ValueError(f"edge ({i}, {j}) appears twice")
            seen.add(pair)
            if not 0 <= k < self.num_clusters:
                raise ValueError(f"cluster index {k} outside [0, {self.num_clusters})")
        if self.truth is not None and (
            len(self.truth) != size or any(t not in (0, 1) for t in self.truth)
        ):
            raise ValueError("truth must hold one binary label per node")

    @classmethod
    def complete(
        cls,
        size: int,
        clusters: Optional[Sequence[int]] = None,
        num_clusters: int = 1,
        truth: Optional[Sequence[int]] = None,
    ) -> "SceneGraph":
        """A complete graph over positions 0..size-1 with edges (i, j), i < j, in order.

        Args:
            size (int): Number of nodes.
            clusters (Optional[Sequence[int]]): Cluster per edge. Default: all zero.
            num_clusters (int): Number of edge types. Default: 1.
            truth (Optional[Sequence[int]]): Node labels.

        Returns:
            SceneGraph: The graph; node indices equal positions.
        """
        edges = tuple(combinations(range(size), 2))
        clusters = tuple(clusters) if clusters is not None else (0,) * len(edges)
        return cls(
            tuple(range(size)),
            edges,
            tuple(int(k) for k in clusters),
            num_clusters,
            tuple(truth) if truth is not None else None,
        )

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def cluster_array(self) -> np.ndarray:
        return np.array(self.clusters, dtype=np.int64)


def select_candidates(
    scene: SceneRecord, local_scores: Sequence[float], m: int = DEFAULT_NODES
) -> Tuple[int, ...]:
    """NMS at 0.3 on the local scores, then the m best survivors.

    Args:
        scene (SceneRecord): The scene.
        local_scores (Sequence[float]): One finite score per candidate.
        m (int): Maximum number of nodes, at most 20. Default: 16.

    Returns:
        Tuple[int, ...]: Candidate indices by descending score.
    """
    if m > MAX_NODES:
        raise InferenceSizeError(f"at most {MAX_NODES} nodes are supported, asked for {m}")
    scores = np.asarray(local_scores, dtype=np.float64)
    if scores.shape != (len(scene.candidates),):
        raise SceneValidationError(scene.scene_id, "need one local score per candidate")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteError("non-finite local score", scene_id=scene.scene_id)
    pairs = [(c.box, float(s)) for c, s in zip(scene.candidates, scores)]
    return tuple(nms(pairs, NMS_THRESHOLD)[:m])


def phi(x: np.ndarray) -> np.ndarray:
    """Signed log compression sign(x) log(|x| + 1)."""
    return np.sign(x) * np.log1p(np.abs(x))


def orientation_key(box: np.ndarray, index: int) -> Tuple[float, float, int]:
    """Sort key ordering boxes left to right: x-center, then y-center, then index."""
    return (box[0] + box[2] / 2.0, box[1] + box[3] / 2.0, index)


def orient(boxes: np.ndarray, i: int, j: int) -> Tuple[int, int]:
    """Orders two candidate indices so the first is the left box.

    Args:
        boxes (ndarray): Candidate boxes, shape (N, 4).
        i (int): A candidate index.
        j (int): Another candidate index.

    Returns:
        Tuple[int, int]: The oriented pair.
    """
    if orientation_key(boxes[i], i) <= orientation_key(boxes[j], j):
        return i, j
    return j, i


def edge_feature_array(boxes: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Relative scale and displacement features of oriented pairs.

    Args:
        boxes (ndarray): Boxes as rows (x, y, w, h).
        pairs (ndarray): Oriented index pairs into boxes, shape (E, 2).

    Returns:
        ndarray: Features (log size ratio, scaled x shift, scaled y shift), shape (E, 3).
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    first = boxes[pairs[:, 0]]
    second = boxes[pairs[:, 1]]
    size_first = (first[:, 2] + first[:, 3]) / 2.0
    size_second = (second[:, 2] + second[:, 3]) / 2.0
    dx = (second[:, 0] + second[:, 2] / 2.0) - (first[:, 0] + first[:, 2] / 2.0)
    dy = (second[:, 1] + second[:, 3] / 2.0) - (first[:, 1] + first[:, 3] / 2.0)
    return np.stack(
        [np.log(size_first / size_second), phi(dx / size_first), phi(dy / size_first)], axis=1
    )


def edge_features(a: BoundingBox, b: BoundingBox) -> np.ndarray:
    """Layout features of the oriented pair (a, b), a being the left box.

    Args:
        a (BoundingBox): First box of the pair.
        b (BoundingBox): Second box of the pair.

    Returns:
        ndarray: (log(s_a / s_b), phi(dx / s_a), phi(dy / s_a)) with s the mean side and
        dx, dy the center displacement from a to b.
    """
    return edge_feature_array(np.stack([a.as_array(), b.as_array()]), np.array([[0, 1]]))[0]


def oriented_pairs(scene: SceneRecord, nodes: Sequence[int]) -> np.ndarray:
    """Oriented position pairs of the complete graph over nodes, (p, q) for p < q in order.

    Args:
        scene (SceneRecord): The scene.
        nodes (Sequence[int]): Candidate indices.

    Returns:
        ndarray: Position pairs into nodes, shape (E, 2).
    """
    boxes = scene.candidate_boxes()
    edges = []
    for p, q in combinations(range(len(nodes)), 2):
        first, _ = orient(boxes, nodes[p], nodes[q])
        edges.append((p, q) if first == nodes[p] else (q, p))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def build_scene_graph(
    scene: SceneRecord,
    nodes: Sequence[int],
    cluster_model: EdgeClusterModel,
    truth: Optional[Sequence[int]] = None,
) -> SceneGraph:
    """The complete oriented graph over the selected nodes, edges typed by cluster.

    Args:
        scene (SceneRecord): The scene.
        nodes (Sequence[int]): Candidate indices, at most 20.
        cluster_model (EdgeClusterModel): Edge typing model.
        truth (Optional[Sequence[int]]): Node labels.

    Returns:
        SceneGraph: The graph.
    """
    if len(nodes) > MAX_NODES:
        raise InferenceSizeError(f"{len(nodes)} nodes exceed the limit of {MAX_NODES}")
    pairs = oriented_pairs(scene, nodes)
    node_array = np.asarray(nodes, dtype=np.int64)
    features = edge_feature_array(scene.candidate_boxes(), node_array[pairs])
    clusters = assign_clusters(cluster_model, features)
    return SceneGraph(
        tuple(int(n) for n in nodes),
        tuple((int(p), int(q)) for p, q in pairs),
        tuple(int(k) for k in clusters),
        cluster_model.num_clusters,
        tuple(int(t) for t in truth) if truth is not None else None,
    )


def node_truth(
    scene: SceneRecord, nodes: Sequence[int], threshold: float = TRUTH_IOU
) -> Tuple[int, ...]:
    """Node labels: 1 when the maximum IoU with any ground truth reaches the threshold.

    Args:
        scene (SceneRecord): The scene.
        nodes (Sequence[int]): Candidate indices.
        threshold (float): IoU threshold. Default: 0.5.

    Returns:
        Tuple[int, ...]: Binary label per node.
    """
    if not nodes or not scene.ground_truth:
        return (0,) * len(nodes)
    boxes = scene.candidate_boxes()[np.asarray(nodes, dtype=np.int64)]
    best = iou_matrix(boxes, scene.truth_boxes()).max(axis=1)
    return tuple(int(o >= threshold) for o in best)
