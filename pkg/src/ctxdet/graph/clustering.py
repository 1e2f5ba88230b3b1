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
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ctxdet.exceptions import ClusteringError, DimensionMismatchError

logger = logging.getLogger(__name__)

MAX_LLOYD_ITERATIONS = 300


@dataclass(frozen=True)
class EdgeClusterModel:
    """
    K centroids in the normalized edge-feature space together with the normalization
    statistics of the training features. Cluster indices are zero-based.
    """

    centroids: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    objective_trace: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.centroids.ndim != 2 or len(self.centroids) < 1:
            raise ClusteringError("a cluster model needs at least one centroid")
        if self.mean.shape != (self.centroids.shape[1],) or self.std.shape != self.mean.shape:
            raise DimensionMismatchError("normalization stats do not match the centroids")
        if not np.all(self.std > 0.0):
            raise ClusteringError("normalization standard deviations must be positive")

    @property
    def num_clusters(self) -> int:
        return len(self.centroids)

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(len(points))]
    for index in range(1, k):
        nearest = _squared_distances(points, centroids[:index]).min(axis=1)
        centroids[index] = points[rng.choice(len(points), p=nearest / nearest.sum())]
    return centroids


def fit_kmeans(features: np.ndarray, k: int, seed: int) -> EdgeClusterModel:
    """Clusters edge features with k-means++ seeding followed by Lloyd iterations.

    Features are first standardised with their own mean and standard deviation. Iteration
    stops when no assignment changes or after 300 iterations; a cluster that loses all its
    points is reseeded with the point farthest from its assigned centroid.

    Args:
        features (ndarray): Raw edge features, shape (N, 3).
        k (int): Number of clusters.
        seed (int): Seed of the k-means++ draw.

    Returns:
        EdgeClusterModel: Centroids, stats and the objective after each iteration.

    Raises:
        ClusteringError: If there are fewer than k distinct points.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or k < 1:
        raise ClusteringError(f"cannot cluster features of shape {features.shape} into {k}")
    if len(np.unique(features, axis=0)) < k:
        raise ClusteringError(f"fewer than {k} distinct edge features")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    points = (features - mean) / std
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plusplus(points, k, rng)
    assignment = np.full(len(points), -1)
    trace = []
    for iteration in range(MAX_LLOYD_ITERATIONS):
        distances = _squared_distances(points, centroids)
        new_assignment = np.argmin(distances, axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        own = distances[np.arange(len(points)), assignment]
        taken = set()
        for cluster in range(k):
            members = assignment == cluster
            if members.any():
                centroids[cluster] = points[members].mean(axis=0)
                continue
            for candidate in np.argsort(-own, kind="stable"):
                if int(candidate) not in taken:
                    taken.add(int(candidate))
                    centroids[cluster] = points[candidate]
                    break
        trace.append(float(_squared_distances(points, centroids).min(axis=1).sum()))
    logger.debug("k-means with k=%d stopped after %d iterations", k, iteration + 1)
    return EdgeClusterModel(centroids, mean, std, tuple(trace))


def assign_cluster(model: EdgeClusterModel, feature: Sequence[float]) -> int:
    """Nearest centroid in normalized space, smaller index on ties.

    Args:
        model (EdgeClusterModel): The fitted model.
        feature (Sequence[float]): Raw edge feature.

    Returns:
        int: Zero-based cluster index.
    """
    return int(assign_clusters(model, np.asarray(feature, dtype=np.float64)[None, :])[0])


def assign_clusters(model: EdgeClusterModel, features: np.ndarray) -> np.ndarray:
    """Vectorised assign_cluster over an (N, 3) array."""
    features = np.asarray(features, dtype=np.float64).reshape(-1, model.centroids.shape[1])
    if not len(features):
        return np.zeros(0, dtype=np.int64)
    return np.argmin(_squared_distances(model.normalize(features), model.centroids), axis=1)
