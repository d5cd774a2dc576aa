"""K-means++ over account vectors: elbow curves and type delta tables.

Inertia is the standard squared-Euclidean k-means objective. Fits restart
from several seedings and keep the lowest-inertia run; the delta table
profiles how each labeled account type concentrates into clusters.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import kernels

MAX_ITERS = 300
ELBOW_RESTARTS = 3
FINAL_RESTARTS = 10
TOP_CLUSTERS_PER_TYPE = 3

_RANK_LABELS = {1: "1st", 2: "2nd", 3: "3rd"}


class DegenerateInput(Exception):
    """More clusters than points, or malformed vectors."""


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: Dict
    inertia: float
    seed: int

    def cluster_sizes(self) -> Counter:
        return Counter(self.assignments.values())


def _as_matrix(points: Mapping) -> Tuple[list, np.ndarray]:
    if not points:
        raise DegenerateInput("no points")
    ids = sorted(points)
    try:
        matrix = np.asarray([np.asarray(points[i], dtype=float)
                             for i in ids])
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from None
    if matrix.ndim != 2:
        raise DegenerateInput("vectors must share one dimension")
    return ids, np.ascontiguousarray(matrix)


def _seed_centroids(matrix: np.ndarray, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 seeding."""
    n = matrix.shape[0]
    centroids = np.empty((k, matrix.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = matrix[first]
    d2 = kernels.squared_distances_to_point(matrix, centroids[0])
    for c in range(1, k):
        total = d2.sum()
        if total > 0.0:
            chosen = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining mass on duplicates of chosen centroids
            chosen = int(rng.integers(n))
        centroids[c] = matrix[chosen]
        d2 = np.minimum(
            d2, kernels.squared_distances_to_point(matrix, centroids[c]))
    return centroids


def _repair_empty(matrix, centroids, labels, counts):
    """Re-seed each empty cluster at the point farthest from its centroid."""
    empty = np.flatnonzero(counts == 0)
    if len(empty) == 0:
        return centroids
    d2 = ((matrix - centroids[labels]) ** 2).sum(axis=1)
    order = np.argsort(-d2, kind="stable")
    cursor = 0
    for cluster in empty:
        centroids[cluster] = matrix[order[cursor]]
        cursor += 1
    return centroids


def _lloyd(matrix: np.ndarray, k: int, rng: np.random.Generator):
    centroids = _seed_centroids(matrix, k, rng)
    labels = None
    for _ in range(MAX_ITERS):
        new_labels, _ = kernels.kmeans_assign(matrix, centroids)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centroids, counts = kernels.kmeans_update(matrix, labels, k)
        centroids = _repair_empty(matrix, centroids, labels, counts)
    labels, inertia = kernels.kmeans_assign(matrix, centroids)
    return centroids, labels, float(inertia)


def fit(points: Mapping, k: int, seed: int = 0,
        restarts: int = FINAL_RESTARTS) -> ClusterModel:
    """Best-of-restarts k-means++; deterministic under (points, k, seed)."""
    ids, matrix = _as_matrix(points)
    if k < 1 or k > len(ids):
        raise DegenerateInput(f"k={k} with {len(ids)} points")
    children = np.random.SeedSequence(seed).spawn(max(1, restarts))
    best = None
    for child in children:
        result = _lloyd(matrix, k, np.random.default_rng(child))
        if best is None or result[2] < best[2]:
            best = result
    centroids, labels, inertia = best
    assignments = {ids[i]: int(labels[i]) for i in range(len(ids))}
    return ClusterModel(k=k, centroids=centroids, assignments=assignments,
                        inertia=inertia, seed=seed)


def elbow(points: Mapping, ks: Sequence[int], seed: int = 0,
          restarts: int = ELBOW_RESTARTS) -> List[Tuple[int, float]]:
    """Best-of-restarts inertia per k, for the operator's elbow plot."""
    ks = list(ks)
    if ks != sorted(ks):
        raise ValueError("ks must be ascending")
    return [(k, fit(points, k, seed=seed, restarts=restarts).inertia)
            for k in ks]


@dataclass(frozen=True)
class DeltaRow:
    type: str
    rank: int
    cluster: int
    count: int
    count_pct: float
    cum_pct: float
    delta_pct: float
    delta_index: int


@dataclass(frozen=True)
class DeltaTable:
    rows: Tuple[DeltaRow, ...]
    skipped_types: Tuple[str, ...]


def delta_table(model: ClusterModel, label_sets: Mapping[str, Iterable],
                top: int = TOP_CLUSTERS_PER_TYPE) -> DeltaTable:
    """Per label type, the `top` clusters holding most of its accounts.

    count_pct is the share of the type inside the cluster; delta_pct is
    the absolute gap between that share and the cluster's share of the
    whole clustered universe; delta_index ranks the type's clusters by
    descending delta. Types with no clustered account are skipped and
    reported.
    """
    total = len(model.assignments)
    sizes = model.cluster_sizes()
    rows: List[DeltaRow] = []
    skipped: List[str] = []
    for type_name, ids in label_sets.items():
        members = [i for i in ids if i in model.assignments]
        if not members:
            skipped.append(type_name)
            continue
        type_total = len(members)
        per_cluster = Counter(model.assignments[i] for i in members)
        stats = {}
        for cluster, count in per_cluster.items():
            count_pct = 100.0 * count / type_total
            overall_pct = 100.0 * sizes[cluster] / total
            stats[cluster] = (count, count_pct,
                              abs(count_pct - overall_pct))
        by_delta = sorted(stats, key=lambda c: (-stats[c][2], c))
        delta_index = {cluster: i + 1 for i, cluster in enumerate(by_delta)}
        by_count = sorted(stats, key=lambda c: (-stats[c][0], c))
        cum = 0.0
        for rank, cluster in enumerate(by_count[:top], start=1):
            count, count_pct, delta_pct = stats[cluster]
            cum += count_pct
            rows.append(DeltaRow(
                type=type_name, rank=rank, cluster=cluster, count=count,
                count_pct=count_pct, cum_pct=cum, delta_pct=delta_pct,
                delta_index=delta_index[cluster]))
    return DeltaTable(rows=tuple(rows), skipped_types=tuple(skipped))


def export_delta_table(table: DeltaTable, path) -> int:
    """TSV with the published column layout; returns the row count."""
    header = ("Type", "Biggest", "Cluster", "Count", "Count(%)", "Cum.(%)",
              "%Delta", "DeltaIndex")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\t".join(header) + "\n")
        for row in table.rows:
            rank = _RANK_LABELS.get(row.rank, f"{row.rank}th")
            handle.write("\t".join([
                row.type, rank, str(row.cluster), str(row.count),
                f"{row.count_pct:.2f}", f"{row.cum_pct:.2f}",
                f"{row.delta_pct:.2f}", str(row.delta_index)]) + "\n")
    return len(table.rows)


def export_elbow(curve: Sequence[Tuple[int, float]], path) -> int:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("k\tinertia\n")
        for k, inertia in curve:
            handle.write(f"{k}\t{inertia:.6f}\n")
    return len(curve)
