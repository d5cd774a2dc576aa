import itertools

import numpy as np
import pytest

from spherewatch.clustering import (
    ClusterModel,
    DegenerateInput,
    DeltaRow,
    delta_table,
    elbow,
    export_delta_table,
    export_elbow,
    fit,
    _repair_empty,
)


def blob_points(seed=0, centers=((0.0, 0.0), (10.0, 10.0)), per_blob=15,
                scale=0.5):
    rng = np.random.default_rng(seed)
    points, labels = {}, {}
    next_id = 0
    for b, center in enumerate(centers):
        for _ in range(per_blob):
            points[next_id] = rng.normal(loc=center, scale=scale)
            labels[next_id] = b
            next_id += 1
    return points, labels


def brute_force_inertia(matrix, k):
    """Exhaustive minimum SSE over every labeling with up to k clusters."""
    n = len(matrix)
    best = np.inf
    for labels in itertools.product(range(k), repeat=n):
        sse = 0.0
        for c in range(k):
            members = matrix[[i for i in range(n) if labels[i] == c]]
            if len(members):
                mu = members.mean(axis=0)
                sse += float(((members - mu) ** 2).sum())
        if sse < best:
            best = sse
    return best


class TestFit:
    def test_k_equals_n_zero_inertia(self):
        points = {i: [float(i), float(i * i)] for i in range(6)}
        model = fit(points, k=6, seed=0)
        assert model.inertia == 0.0
        assert sorted(model.assignments.values()) == list(range(6))

    def test_k_one_mean_and_total_deviation(self):
        points, _ = blob_points(seed=1, per_blob=10)
        matrix = np.array([points[i] for i in sorted(points)])
        model = fit(points, k=1, seed=0)
        np.testing.assert_allclose(model.centroids[0], matrix.mean(axis=0),
                                   atol=1e-12)
        want = float(((matrix - matrix.mean(axis=0)) ** 2).sum())
        assert model.inertia == pytest.approx(want, rel=1e-12)

    def test_degenerate_inputs(self):
        points = {0: [0.0, 0.0], 1: [1.0, 1.0]}
        with pytest.raises(DegenerateInput):
            fit(points, k=3)
        with pytest.raises(DegenerateInput):
            fit(points, k=0)
        with pytest.raises(DegenerateInput):
            fit({}, k=1)
        with pytest.raises(DegenerateInput):
            fit({0: [0.0], 1: [1.0, 2.0]}, k=1)

    def test_two_blobs_recovered(self):
        points, labels = blob_points(seed=2)
        model = fit(points, k=2, seed=0)
        blob0 = {model.assignments[i] for i in labels if labels[i] == 0}
        blob1 = {model.assignments[i] for i in labels if labels[i] == 1}
        assert len(blob0) == 1 and len(blob1) == 1
        assert blob0 != blob1

    def test_deterministic_under_seed(self):
        points, _ = blob_points(seed=3, per_blob=20)
        a = fit(points, k=3, seed=9)
        b = fit(points, k=3, seed=9)
        assert a.assignments == b.assignments
        assert a.inertia == b.inertia
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            n = int(rng.integers(5, 9))
            k = int(rng.integers(2, 4))
            matrix = rng.normal(size=(n, 2))
            points = {i: matrix[i] for i in range(n)}
            model = fit(points, k=k, seed=trial, restarts=20)
            want = brute_force_inertia(matrix, k)
            assert model.inertia == pytest.approx(want, rel=1e-9, abs=1e-9)

    def test_nearest_centroid_invariant(self):
        points, _ = blob_points(seed=4, per_blob=25)
        model = fit(points, k=4, seed=1)
        matrix = np.array([points[i] for i in sorted(points)])
        d2 = ((matrix[:, None, :] - model.centroids[None, :, :]) ** 2
              ).sum(axis=2)
        nearest = d2.argmin(axis=1)
        got = np.array([model.assignments[i] for i in sorted(points)])
        np.testing.assert_array_equal(got, nearest)
        assert model.inertia == pytest.approx(
            float(d2.min(axis=1).sum()), rel=1e-12)

    def test_duplicate_points_survive(self):
        points = {i: [0.0, 0.0] for i in range(5)}
        points.update({i: [5.0, 5.0] for i in range(5, 10)})
        model = fit(points, k=3, seed=0)
        assert model.centroids.shape == (3, 2)
        assert set(model.assignments) == set(points)
        assert model.inertia >= 0.0


class TestRepair:
    def test_empty_cluster_reseeded_at_farthest_point(self):
        matrix = np.array([[0.0, 0.0], [1.0, 0.0], [8.0, 0.0]])
        centroids = np.array([[0.5, 0.0], [99.0, 99.0]])
        labels = np.array([0, 0, 0])
        counts = np.array([3, 0])
        repaired = _repair_empty(matrix, centroids.copy(), labels, counts)
        np.testing.assert_array_equal(repaired[1], matrix[2])
        np.testing.assert_array_equal(repaired[0], centroids[0])


class TestElbow:
    def test_curve_shape_and_terminal_zero(self):
        points, _ = blob_points(seed=5, per_blob=8,
                                centers=((0, 0), (6, 6), (-6, 6)))
        n = len(points)
        ks = [1, 2, 3, 6, n]
        curve = elbow(points, ks, seed=0)
        assert [k for k, _ in curve] == ks
        assert curve[-1][1] == pytest.approx(0.0, abs=1e-12)
        for (_, a), (_, b) in zip(curve, curve[1:]):
            assert b <= a * 1.01 + 1e-12

    def test_rejects_unsorted_ks(self):
        points, _ = blob_points(seed=6, per_blob=4)
        with pytest.raises(ValueError):
            elbow(points, [3, 2], seed=0)


def paper_shaped_model():
    """Assignments shaped like the published peer delta-table row."""
    assignments = {}
    peers = []
    next_id = 0

    def add(cluster, size, labeled):
        nonlocal next_id
        for i in range(size):
            assignments[next_id] = cluster
            if i < labeled:
                peers.append(next_id)
            next_id += 1

    add(60, 204, 145)
    add(19, 400, 62)
    add(9, 60, 9)
    for cluster in (1, 2, 3, 4):
        add(cluster, 250, 3)
    add(0, 18336, 0)
    model = ClusterModel(k=61, centroids=np.zeros((61, 2)),
                         assignments=assignments, inertia=0.0, seed=0)
    return model, peers


class TestDeltaTable:
    def test_reproduces_published_peer_row(self):
        model, peers = paper_shaped_model()
        assert len(model.assignments) == 20000
        assert len(peers) == 228
        table = delta_table(model, {"peer": peers})
        first, second, third = table.rows
        assert (first.cluster, first.count) == (60, 145)
        assert abs(first.count_pct - 63.60) <= 0.005
        assert abs(first.delta_pct - 62.58) <= 0.005
        assert first.delta_index == 1
        assert (second.cluster, second.count) == (19, 62)
        assert abs(second.count_pct - 27.19) <= 0.005
        assert (third.cluster, third.count) == (9, 9)
        assert abs(third.count_pct - 3.95) <= 0.005
        assert abs(third.cum_pct - 94.74) <= 0.01
        assert [r.rank for r in table.rows] == [1, 2, 3]

    def test_count_pct_sums_to_100_over_all_clusters(self):
        model, peers = paper_shaped_model()
        from collections import Counter
        per_cluster = Counter(model.assignments[i] for i in peers)
        total_pct = sum(100.0 * c / len(peers)
                        for c in per_cluster.values())
        assert total_pct == pytest.approx(100.0, abs=1e-9)

    def test_independent_recomputation(self):
        points, _ = blob_points(seed=8, per_blob=30,
                                centers=((0, 0), (8, 0), (0, 8)))
        model = fit(points, k=3, seed=2)
        rng = np.random.default_rng(1)
        labeled = sorted(rng.choice(sorted(points), size=25, replace=False))
        table = delta_table(model, {"planted": labeled})
        sizes = model.cluster_sizes()
        total = len(model.assignments)
        from collections import Counter
        per_cluster = Counter(model.assignments[i] for i in labeled)
        deltas = {
            c: abs(100.0 * n / len(labeled) - 100.0 * sizes[c] / total)
            for c, n in per_cluster.items()}
        ranked = sorted(deltas, key=lambda c: (-deltas[c], c))
        cum = 0.0
        by_count = sorted(per_cluster, key=lambda c: (-per_cluster[c], c))
        for row, cluster in zip(table.rows, by_count):
            assert row.cluster == cluster
            assert row.count == per_cluster[cluster]
            want_pct = 100.0 * per_cluster[cluster] / len(labeled)
            assert row.count_pct == pytest.approx(want_pct, rel=1e-12)
            cum += want_pct
            assert row.cum_pct == pytest.approx(cum, rel=1e-12)
            assert row.delta_pct == pytest.approx(deltas[cluster],
                                                  rel=1e-12)
            assert row.delta_index == ranked.index(cluster) + 1

    def test_type_with_no_clustered_accounts_skipped(self):
        model, peers = paper_shaped_model()
        table = delta_table(model, {"ghost": [10 ** 9], "peer": peers})
        assert table.skipped_types == ("ghost",)
        assert {r.type for r in table.rows} == {"peer"}

    def test_type_spanning_fewer_clusters_than_top(self):
        model, _ = paper_shaped_model()
        ids = [i for i, c in model.assignments.items() if c == 9][:4]
        table = delta_table(model, {"tight": ids})
        assert len(table.rows) == 1
        assert table.rows[0].count_pct == pytest.approx(100.0)


class TestExports:
    def test_delta_tsv_layout(self, tmp_path):
        model, peers = paper_shaped_model()
        table = delta_table(model, {"peer": peers})
        path = tmp_path / "delta.tsv"
        assert export_delta_table(table, path) == 3
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0].split("\t") == [
            "Type", "Biggest", "Cluster", "Count", "Count(%)", "Cum.(%)",
            "%Delta", "DeltaIndex"]
        first = lines[1].split("\t")
        assert first[:4] == ["peer", "1st", "60", "145"]
        assert first[4] == "63.60"
        assert first[6] == "62.58"
        assert lines[2].split("\t")[1] == "2nd"
        assert lines[3].split("\t")[1] == "3rd"
        assert lines[3].split("\t")[5] == "94.74"

    def test_elbow_export(self, tmp_path):
        path = tmp_path / "elbow.tsv"
        assert export_elbow([(1, 10.0), (2, 4.0)], path) == 2
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "k\tinertia"
        assert lines[1].startswith("1\t10.")
