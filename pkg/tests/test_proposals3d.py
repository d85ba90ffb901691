import numpy as np
import pytest

from rgbdprop.fusion import GlobalHeatmap3D
from rgbdprop.plane import KeyframePlane, Plane
from rgbdprop.proposals3d import (
    NOISE,
    Box3D,
    RankedCloud,
    dbscan,
    final_plane_removal,
    fit_box,
    frequency_filter,
    frequency_floor,
    group_planes,
    merge_boxes,
    pseudo_average,
    rank_points,
    volume_filter,
)


def make_store(confidences, frequencies, positions=None):
    store = GlobalHeatmap3D()
    n = len(confidences)
    pos = np.asarray(positions) if positions is not None else np.zeros((n, 3))
    store.append(pos, np.zeros((n, 3)), np.asarray(confidences, dtype=float))
    store._freq[:n] = np.asarray(frequencies)
    return store


class TestFrequencyFilter:
    def test_floor_rule(self):
        assert frequency_floor(200) == 5  # min(5, 10)
        assert frequency_floor(40) == 2  # min(5, 2)
        assert frequency_floor(1) == 1
        assert frequency_floor(100) == 5
        assert frequency_floor(99) == 5  # ceil(4.95)

    def test_long_sequence(self):
        store = make_store([1.0] * 3, [4, 5, 6])
        assert frequency_filter(store, 200).tolist() == [1, 2]

    def test_short_sequence(self):
        store = make_store([1.0] * 3, [1, 2, 3])
        assert frequency_filter(store, 40).tolist() == [1, 2]

    def test_single_frame(self):
        store = make_store([1.0] * 3, [1, 1, 1])
        assert frequency_filter(store, 1).tolist() == [0, 1, 2]


class TestRankPoints:
    def test_pseudo_average_arithmetic(self):
        assert pseudo_average(np.array([110.0]), np.array([1]), 10.0)[0] == 10.0

    def test_zero_confidence_removed(self):
        store = make_store([0.0, 30.0], [5, 5])
        ranked = rank_points(store, tau=10.0, eps=0.25)
        assert ranked.indices.tolist() == [1]
        assert np.isclose(ranked.scores[0], 2.0)

    def test_threshold_boundary_inclusive(self):
        store = make_store([0.25 * 11.0], [1])
        ranked = rank_points(store, tau=10.0, eps=0.25)
        assert ranked.indices.tolist() == [0]

    def test_scaling_covariance(self):
        rng = np.random.default_rng(0)
        conf = rng.uniform(0, 10, 50)
        freq = rng.integers(1, 20, 50)
        store_a = make_store(conf, freq)
        store_b = make_store(conf * 7.0, freq)
        a = rank_points(store_a, 10.0, 0.25)
        b = rank_points(store_b, 10.0, 0.25 * 7.0)
        assert a.indices.tolist() == b.indices.tolist()

    def test_monotone_in_eps(self):
        rng = np.random.default_rng(1)
        store = make_store(rng.uniform(0, 10, 100), rng.integers(1, 20, 100))
        previous = None
        for eps in (0.1, 0.3, 0.5, 1.0):
            sel = set(rank_points(store, 10.0, eps).indices.tolist())
            if previous is not None:
                assert sel <= previous
            previous = sel

    def test_candidate_subset_respected(self):
        store = make_store([10.0, 10.0, 10.0], [1, 1, 1])
        ranked = rank_points(store, 10.0, 0.25, candidates=np.array([0, 2]))
        assert ranked.indices.tolist() == [0, 2]


def reference_dbscan(points, eps, min_pts):
    """O(n^2) reference with the same seed-order/FIFO semantics."""
    n = points.shape[0]
    if n == 0:
        return np.full(0, NOISE, dtype=np.int64)
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    neighbors = [np.flatnonzero(d2[i] <= eps * eps).tolist() for i in range(n)]
    core = [len(nb) >= min_pts for nb in neighbors]
    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for seed in range(n):
        if visited[seed] or not core[seed]:
            continue
        labels[seed] = cluster
        visited[seed] = True
        queue = list(neighbors[seed])
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j]:
                continue
            visited[j] = True
            if core[j]:
                queue.extend(neighbors[j])
        cluster += 1
    return labels


def canonical_labels(labels):
    """Relabel clusters by first appearance so permutations compare equal."""
    mapping = {}
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    next_id = 0
    for i, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = next_id
            next_id += 1
        out[i] = mapping[lab]
    return out


class TestDbscan:
    def test_empty(self):
        assert dbscan(np.empty((0, 3)), 0.02, 10).size == 0

    def test_two_blobs(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.0, 0.005, size=(500, 3))
        b = rng.normal(0.0, 0.005, size=(500, 3)) + np.array([1.0, 0.0, 0.0])
        labels = dbscan(np.vstack([a, b]), 0.02, 10)
        assert set(labels[:500]) == {0}
        assert set(labels[500:]) == {1}
        assert (labels == NOISE).sum() == 0

    def test_isolated_point_is_noise(self):
        rng = np.random.default_rng(3)
        blob = rng.normal(0.0, 0.005, size=(100, 3))
        pts = np.vstack([blob, [[5.0, 5.0, 5.0]]])
        labels = dbscan(pts, 0.02, 10)
        assert labels[-1] == NOISE

    def test_matches_reference_on_random_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            n = int(rng.integers(10, 400))
            centers = rng.uniform(-1, 1, size=(int(rng.integers(1, 6)), 3))
            pts = np.vstack(
                [c + rng.normal(0, 0.03, size=(n, 3)) for c in centers]
            )
            eps = float(rng.uniform(0.02, 0.1))
            min_pts = int(rng.integers(3, 15))
            fast = canonical_labels(dbscan(pts, eps, min_pts))
            slow = canonical_labels(reference_dbscan(pts, eps, min_pts))
            assert np.array_equal(fast, slow)


class TestFitBox:
    def cube_points(self, rng, n=500):
        pts = rng.uniform(size=(n, 3))
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        return np.vstack([pts, corners])

    def test_identity_rotation_unit_cube(self):
        rng = np.random.default_rng(5)
        pts = self.cube_points(rng)
        box = fit_box(pts, np.array([0.0, 1.0, 0.0]))
        assert np.allclose(box.rotation, np.eye(3))
        assert np.allclose(box.min_corner, [0, 0, 0])
        assert np.allclose(box.max_corner, [1, 1, 1])
        assert np.isclose(box.volume, 1.0)
        assert box.contains(pts).all()

    def test_tilted_normal_recovers_tight_box(self):
        rng = np.random.default_rng(6)
        cube = self.cube_points(rng)
        angle = np.deg2rad(30.0)
        n_c = np.array([np.sin(angle), np.cos(angle), 0.0])
        from rgbdprop.geometry import rotation_to_gravity

        R = rotation_to_gravity(n_c)
        tilted = cube @ R  # cube axis-aligned in the gravity frame of n_c
        box = fit_box(tilted, n_c)
        aabb_volume = np.prod(tilted.max(axis=0) - tilted.min(axis=0))
        assert box.volume <= aabb_volume
        assert np.isclose(box.volume, 1.0, atol=1e-9)
        assert box.contains(tilted).all()

    def test_single_point_degenerate(self):
        box = fit_box(np.array([[0.3, 0.4, 0.5]]))
        assert box.volume == 0.0

    def test_empty_cluster_raises(self):
        with pytest.raises(ValueError):
            fit_box(np.empty((0, 3)))

    def test_all_points_inside_world_box(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pts = rng.normal(size=(int(rng.integers(2, 100)), 3))
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            box = fit_box(pts, n)
            assert box.contains(pts, atol=1e-9).all()


class TestMergeBoxes:
    def box(self, lo, hi):
        return Box3D(np.eye(3), np.array(lo, dtype=float), np.array(hi, dtype=float), 1)

    def test_disjoint_unchanged(self):
        boxes = [self.box([0, 0, 0], [1, 1, 1]), self.box([2, 2, 2], [3, 3, 3])]
        merged, _ = merge_boxes(boxes)
        assert len(merged) == 2

    def test_touching_faces_do_not_merge(self):
        boxes = [self.box([0, 0, 0], [1, 1, 1]), self.box([1, 0, 0], [2, 1, 1])]
        merged, _ = merge_boxes(boxes)
        assert len(merged) == 2

    def test_transitive_closure(self):
        a = self.box([0, 0, 0], [1, 1, 1])
        b = self.box([0.9, 0, 0], [1.9, 1, 1])
        c = self.box([1.8, 0, 0], [2.8, 1, 1])  # overlaps b, not a
        merged, members = merge_boxes([a, b, c], [np.array([0]), np.array([1]), np.array([2])])
        assert len(merged) == 1
        assert np.allclose(merged[0].min_corner, [0, 0, 0])
        assert np.allclose(merged[0].max_corner, [2.8, 1, 1])
        assert sorted(members[0].tolist()) == [0, 1, 2]

    def test_output_pairwise_disjoint(self):
        rng = np.random.default_rng(8)
        boxes = []
        for _ in range(20):
            lo = rng.uniform(0, 2, 3)
            hi = lo + rng.uniform(0.1, 1.0, 3)
            boxes.append(self.box(lo, hi))
        merged, _ = merge_boxes(boxes)
        for i in range(len(merged)):
            for j in range(i + 1, len(merged)):
                lo = np.maximum(merged[i].min_corner, merged[j].min_corner)
                hi = np.minimum(merged[i].max_corner, merged[j].max_corner)
                assert not np.all(hi - lo > 0.0)


class TestVolumeFilter:
    def test_below_threshold_removed(self):
        tiny = Box3D(np.eye(3), np.zeros(3), np.full(3, 0.5e-2 ** (1 / 3) * 0.01))
        # 0.5 cm^3 expressed directly:
        tiny = Box3D(np.eye(3), np.zeros(3), np.array([0.01, 0.01, 0.005]))
        assert volume_filter([tiny], 1e-6) == []

    def test_large_kept(self):
        big = Box3D(np.eye(3), np.zeros(3), np.ones(3))
        assert volume_filter([big], 1e-6) == [big]

    def test_boundary_inclusive(self):
        exact = Box3D(np.eye(3), np.zeros(3), np.array([0.01, 0.01, 0.01]))
        assert volume_filter([exact], 1e-6) == [exact]


def kf(frame, n, b, heat):
    n = np.asarray(n, dtype=float)
    return KeyframePlane(frame, Plane(n / np.linalg.norm(n), b), heat, 100)


class TestPlaneGrouping:
    def test_single_group(self):
        entries = [kf(0, [0, 1, 0], -0.75, 5.0), kf(10, [0.01, 1, 0], -0.751, 6.0)]
        groups = group_planes(entries)
        assert len(groups) == 1
        assert len(groups[0].members) == 2

    def test_floor_and_table_groups(self):
        entries = [
            kf(0, [0, 1, 0], 0.0, 2.0),  # floor y=0
            kf(10, [0, 1, 0], 0.0015, 2.5),
            kf(20, [0, 1, 0], -0.75, 9.0),  # table y=0.75
            kf(30, [0, 1, 0], -0.749, 9.5),
        ]
        groups = group_planes(entries)
        assert len(groups) == 2
        heats = sorted(g.heat for g in groups)
        assert heats == [4.5, 18.5]

    def test_sign_canonicalization(self):
        entries = [kf(0, [0, 1, 0], -0.75, 1.0), kf(10, [0, -1, 0], 0.75, 1.0)]
        groups = group_planes(entries)
        assert len(groups) == 1


class TestFinalPlaneRemoval:
    def ranked_over(self, positions):
        return RankedCloud(
            np.arange(len(positions), dtype=np.int64), np.ones(len(positions))
        )

    def test_strips_support_inliers(self):
        positions = np.array(
            [[0.0, 0.75, 0.0], [0.1, 0.7501, 0.2], [0.0, 0.9, 0.0], [0.2, 0.85, 0.1]]
        )
        entries = [kf(0, [0, 1, 0], -0.75, 10.0)]
        res = final_plane_removal(positions, self.ranked_over(positions), entries, 0.005)
        assert res.indices.tolist() == [2, 3]
        assert res.support_plane is not None

    def test_two_group_history_picks_hotter(self):
        positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.75, 0.0], [0.0, 0.4, 0.0]])
        entries = [
            kf(0, [0, 1, 0], 0.0, 2.0),  # floor, low heat
            kf(10, [0, 1, 0], -0.75, 9.0),  # table, hot
        ]
        res = final_plane_removal(positions, self.ranked_over(positions), entries, 0.005)
        # table point removed, floor point kept
        assert res.indices.tolist() == [0, 2]
        assert np.isclose(res.support_plane.b, -0.75, atol=1e-6)

    def test_no_nearby_points_unchanged(self):
        positions = np.array([[0.0, 0.2, 0.0], [0.0, 0.4, 0.0]])
        entries = [kf(0, [0, 1, 0], -0.75, 10.0)]
        res = final_plane_removal(positions, self.ranked_over(positions), entries, 0.005)
        assert res.indices.tolist() == [0, 1]

    def test_empty_track_is_noop_with_flag(self):
        positions = np.array([[0.0, 0.75, 0.0]])
        res = final_plane_removal(positions, self.ranked_over(positions), [], 0.005)
        assert res.skipped
        assert res.indices.tolist() == [0]
        assert res.support_plane is None
