"""DBSCAN over the precomputed dissimilarity matrix.

Point i is a core point iff at least min_samples matrix entries of row i
(the point itself included) are <= epsilon. Clusters are the connected
components of core points under the closed epsilon-ball, with non-core
points attached to the lowest-index core that reaches them; everything
else is noise. Cluster ids follow the lowest member index, which makes
labels stable for a fixed input order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .autoconf import AutoConfig
from .dissimilarity import DissimilarityMatrix


@dataclass
class ClusterStats:
    mean_pairwise: float
    minmed: float
    d_max: float
    singleton: bool = False


@dataclass
class Cluster:
    id: int
    members: list[int]  # SegmentValue indices, ascending
    stats: ClusterStats | None = None


@dataclass
class Clustering:
    clusters: list[Cluster]
    noise: list[int]
    params: AutoConfig | None = None
    core_points: frozenset[int] = field(default_factory=frozenset)


def cluster_stats(matrix: DissimilarityMatrix, cluster: Cluster) -> ClusterStats:
    """Pairwise mean, nearest-neighbor median (minmed) and extent of a cluster."""
    members = cluster.members
    if len(members) < 2:
        return ClusterStats(0.0, 0.0, 0.0, singleton=True)
    sub = matrix.d[np.ix_(members, members)]
    pairs = sub[np.triu_indices(len(members), k=1)]
    np.fill_diagonal(sub, np.inf)
    nearest = sub.min(axis=1)
    return ClusterStats(
        mean_pairwise=float(pairs.mean()),
        minmed=float(np.median(nearest)),
        d_max=float(pairs.max()),
    )


def normalize_clusters(matrix: DissimilarityMatrix, member_sets: list[list[int]], noise: list[int],
                       params: AutoConfig | None = None,
                       core_points: frozenset[int] = frozenset()) -> Clustering:
    """Sort members, order clusters by lowest member, and recompute stats."""
    ordered = sorted((sorted(m) for m in member_sets), key=lambda m: m[0])
    clusters = [Cluster(cid, members) for cid, members in enumerate(ordered)]
    for cluster in clusters:
        cluster.stats = cluster_stats(matrix, cluster)
    return Clustering(clusters, sorted(noise), params, core_points)


def dbscan(
    matrix: DissimilarityMatrix,
    epsilon: float,
    min_samples: int,
    params: AutoConfig | None = None,
) -> Clustering:
    """Cluster the matrix values with DBSCAN on the closed epsilon-ball."""
    n = matrix.n
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 1 <= min_samples <= n:
        raise ValueError(f"min_samples must be in [1, {n}], got {min_samples}")

    neighborhood = matrix.d <= epsilon
    core = neighborhood.sum(axis=1) >= min_samples
    labels = np.full(n, -1, dtype=np.int64)

    next_label = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        labels[seed] = next_label
        frontier = deque([seed])
        while frontier:
            point = frontier.popleft()
            for neighbor in np.flatnonzero(neighborhood[point]):
                if core[neighbor] and labels[neighbor] == -1:
                    labels[neighbor] = next_label
                    frontier.append(neighbor)
        next_label += 1

    core_indices = np.flatnonzero(core)
    for point in np.flatnonzero(~core):
        reachable = core_indices[neighborhood[point, core_indices]]
        if reachable.size:
            labels[point] = labels[reachable[0]]  # lowest core index wins

    member_sets = [list(np.flatnonzero(labels == label)) for label in range(next_label)]
    noise = [int(i) for i in np.flatnonzero(labels == -1)]
    return normalize_clusters(
        matrix,
        [[int(i) for i in members] for members in member_sets],
        noise,
        params,
        frozenset(int(i) for i in core_indices),
    )
