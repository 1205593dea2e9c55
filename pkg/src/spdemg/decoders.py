"""Training-free decoders driven by geodesic distance.

Supervised: nearest class centroid under the geodesic distance, with
centroids given by the closed-form Frechet mean. Unsupervised: k-medoids
on a precomputed distance matrix, scored against labels through an
optimal one-to-one cluster/label assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInput
from .geometry import CholeskyPoint, frechet_mean, geodesic_distance


@dataclass
class MdmModel:
    """Per-class centroids on the manifold, sorted by class id."""

    class_ids: List[int]
    centroids: List[CholeskyPoint]

    @property
    def dim(self) -> int:
        return self.centroids[0].dim


def mdm_fit(train: Sequence[Tuple[CholeskyPoint, int]]) -> MdmModel:
    """Fit one Frechet-mean centroid per class (uniform unit weights)."""
    if len(train) == 0:
        raise InvalidInput("training set is empty")
    class_ids = sorted({cid for _, cid in train})
    centroids = []
    for cid in class_ids:
        members = [p for p, c in train if c == cid]
        centroids.append(frechet_mean(members))
    return MdmModel(class_ids=class_ids, centroids=centroids)


def mdm_distances(model: MdmModel, x: CholeskyPoint) -> np.ndarray:
    """Geodesic distance from ``x`` to every centroid, in class-id order."""
    if x.dim != model.dim:
        raise InvalidInput(f"dimension mismatch: {x.dim} vs {model.dim}")
    return np.array([geodesic_distance(x, c) for c in model.centroids])


def mdm_predict(model: MdmModel, x: CholeskyPoint) -> int:
    """Class of the nearest centroid; ties go to the smallest class id."""
    d = mdm_distances(model, x)
    return model.class_ids[int(np.argmin(d))]


def pairwise_distances(points: Sequence[CholeskyPoint]) -> np.ndarray:
    """Symmetric geodesic distance matrix with an exactly zero diagonal.

    Entries equal direct ``geodesic_distance`` calls bit for bit; the
    strict parts and log-diagonals are just extracted once per point.
    """
    n = len(points)
    if n < 1:
        raise InvalidInput("need at least one point")
    dim = points[0].dim
    for p in points[1:]:
        if p.dim != dim:
            raise InvalidInput("points must share one dimension")
    stricts = [p.strict for p in points]
    log_diags = [np.log(p.diag) for p in points]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ds = stricts[i] - stricts[j]
            dd = log_diags[i] - log_diags[j]
            d = float(np.sqrt(np.sum(ds * ds) + np.sum(dd * dd)))
            D[i, j] = d
            D[j, i] = d
    return D


def k_medoids(
    D: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    cost_trace: list | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Cluster points given their distance matrix.

    Alternates nearest-medoid assignment with per-cluster medoid updates
    until the medoid set is stable or ``max_iter`` rounds pass. The seed
    (PCG64) picks the first medoid; the rest are placed farthest-first
    (each next medoid maximizes its distance to the already chosen ones,
    ties to the lowest index), which keeps the alternating iteration out
    of the single-cluster local optima a uniform draw falls into. Fully
    deterministic given the seed; total cost is non-increasing across
    rounds (asserted).

    Returns
    -------
    assignments : ndarray of int, shape (n,)
        Cluster index in [0, k) for every point.
    medoids : ndarray of int, shape (k,)
        Indices of the points serving as cluster centers.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise InvalidInput(f"distance matrix must be square, got {D.shape}")
    if not (1 <= k <= n):
        raise InvalidInput(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        min_dist = D[:, chosen].min(axis=1)
        min_dist[chosen] = -np.inf
        chosen.append(int(np.argmax(min_dist)))
    medoids = np.sort(np.array(chosen))
    prev_cost = np.inf
    assignments = np.argmin(D[:, medoids], axis=1)
    for _ in range(max_iter):
        assignments = np.argmin(D[:, medoids], axis=1)
        cost = float(D[np.arange(n), medoids[assignments]].sum())
        assert cost <= prev_cost + 1e-9, "k-medoids cost increased"
        if cost_trace is not None:
            cost_trace.append(cost)
        prev_cost = cost
        new_medoids = medoids.copy()
        for c in range(k):
            members = np.where(assignments == c)[0]
            if members.size == 0:
                continue  # keep the old medoid for an empty cluster
            within = D[np.ix_(members, members)].sum(axis=1)
            new_medoids[c] = members[int(np.argmin(within))]
        if np.array_equal(new_medoids, medoids):
            break
        medoids = new_medoids
    assignments = np.argmin(D[:, medoids], axis=1)
    return assignments, medoids


def clustering_accuracy(assignments: Sequence[int], labels: Sequence[int]) -> float:
    """Accuracy under the best one-to-one cluster-to-label mapping.

    Builds the cluster/label contingency table and solves the assignment
    problem (Hungarian method) to find the permutation that maximizes the
    number of matched points. Requires as many clusters as labels.
    """
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape:
        raise InvalidInput("assignments and labels must have equal length")
    clusters = np.unique(assignments)
    classes = np.unique(labels)
    if clusters.size != classes.size:
        raise InvalidInput(
            f"{clusters.size} clusters cannot be matched against {classes.size} labels"
        )
    table = np.zeros((clusters.size, classes.size))
    for a, l in zip(assignments, labels):
        table[np.searchsorted(clusters, a), np.searchsorted(classes, l)] += 1
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / labels.size)
