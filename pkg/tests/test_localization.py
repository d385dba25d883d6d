import itertools
import math

import numpy as np
import pytest

from segloc.errors import DegenerateConfiguration
from segloc.geometry import SE3, so3_exp
from segloc.kdtree import KDTree
from segloc.localization import (
    CandidatePair,
    RetrievalParams,
    SegmentMap,
    estimate_transform,
    geometric_verify,
    localize,
)
from segloc.semantics import SemanticClass


def linear_scan(data, q, k):
    d2 = np.sum((data - q) ** 2, axis=1)
    order = sorted(range(len(data)), key=lambda i: (d2[i], i))[:k]
    return [(d2[i], i) for i in order]


class TestKDTree:
    def test_matches_linear_scan(self, rng):
        for n in (1, 5, 33, 400):
            for dim in (3, 32):
                data = rng.normal(size=(n, dim))
                tree = KDTree(data)
                for _ in range(5):
                    q = rng.normal(size=dim)
                    k = int(rng.integers(1, n + 3))
                    got = tree.query(q, k)
                    want = linear_scan(data, q, k)
                    assert [i for _, i in got] == [i for _, i in want]
                    assert np.allclose([d for d, _ in got], [d for d, _ in want])

    def test_duplicate_points_tie_by_index(self, rng):
        data = np.zeros((10, 4))
        tree = KDTree(data)
        got = tree.query(np.zeros(4), 5)
        assert [i for _, i in got] == [0, 1, 2, 3, 4]


class TestSegmentMap:
    def test_upsert_replaces(self, rng):
        m = SegmentMap()
        m.upsert(7, [0, 0, 0], rng.normal(size=16))
        d2 = rng.normal(size=16)
        m.upsert(7, [1, 1, 1], d2)
        assert len(m) == 1
        assert np.array_equal(m.get(7).descriptor, d2)
        assert np.array_equal(m.get(7).centroid, [1, 1, 1])

    def test_n_distinct_ids(self, rng):
        m = SegmentMap()
        for i in range(40):
            m.upsert(i, rng.normal(size=3), rng.normal(size=8))
        assert len(m) == 40

    def test_interleaved_upserts_match_replay(self, rng):
        ops = [(int(rng.integers(0, 10)), rng.normal(size=4)) for _ in range(200)]
        m = SegmentMap()
        replay = {}
        for sid, d in ops:
            m.upsert(sid, np.zeros(3), d)
            replay[sid] = d
        assert len(m) == len(replay)
        for sid, d in replay.items():
            assert np.array_equal(m.get(sid).descriptor, d)

    def test_retrieve_exact_query_first(self, rng):
        m = SegmentMap()
        descs = rng.normal(size=(50, 8))
        for i, d in enumerate(descs):
            m.upsert(i, np.zeros(3), d)
        dist, entry = m.retrieve_knn(descs[17], 1)[0]
        assert entry.segment_id == 17
        assert dist == 0.0

    def test_k_larger_than_map(self, rng):
        m = SegmentMap()
        for i in range(5):
            m.upsert(i, np.zeros(3), rng.normal(size=8))
        out = m.retrieve_knn(rng.normal(size=8), 50)
        assert len(out) == 5
        dists = [d for d, _ in out]
        assert dists == sorted(dists)

    def test_empty_map(self):
        assert SegmentMap().retrieve_knn(np.zeros(4), 3) == []

    def test_matches_linear_scan_large(self, rng):
        m = SegmentMap()
        descs = rng.normal(size=(1000, 64))
        for i, d in enumerate(descs):
            m.upsert(i, np.zeros(3), d)
        for _ in range(20):
            q = rng.normal(size=64)
            got = [e.segment_id for _, e in m.retrieve_knn(q, 10)]
            want = [i for _, i in linear_scan(descs, q, 10)]
            assert got == want

    def test_save_load_round_trip(self, tmp_path, rng):
        m = SegmentMap()
        for i in range(20):
            m.upsert(i * 3, rng.normal(size=3), rng.normal(size=16).astype(np.float32),
                     SemanticClass(int(rng.integers(0, 3))), point_count=int(rng.integers(1, 500)))
        path = tmp_path / "map.segw"
        m.save(path)
        back = SegmentMap.load(path)
        assert len(back) == len(m)
        for a, b in zip(m.entries(), back.entries()):
            assert a.segment_id == b.segment_id
            assert a.semantic_class == b.semantic_class
            assert a.point_count == b.point_count
            assert np.allclose(a.centroid, b.centroid, atol=1e-6)
            assert np.allclose(a.descriptor, b.descriptor, atol=1e-6)


def random_pose(rng, max_angle=math.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return SE3(so3_exp(axis * rng.uniform(-max_angle, max_angle)),
               rng.uniform(-20, 20, size=3))


def make_pairs(rng, n_inliers, n_outliers, T, eps=0.4, spread=20.0):
    local = rng.uniform(-spread, spread, size=(n_inliers, 3))
    pairs = [CandidatePair(i, 100 + i, local[i], T.apply(local[i].reshape(1, 3))[0])
             for i in range(n_inliers)]
    for j in range(n_outliers):
        l = rng.uniform(-spread, spread, size=3)
        g = T.apply(l.reshape(1, 3))[0] + rng.uniform(10 * eps, 20 * eps) * \
            rng.choice([-1.0, 1.0], size=3)
        pairs.append(CandidatePair(n_inliers + j, 200 + j, l, g))
    return pairs


def exhaustive_max_consistent(pairs, params):
    """Exhaustive oracle over all subsets (n <= 15)."""
    n = len(pairs)
    eps = params.consistency_epsilon
    local = np.array([p.local_centroid for p in pairs])
    global_ = np.array([p.global_centroid for p in pairs])
    dl = np.linalg.norm(local[:, None] - local[None], axis=2)
    dg = np.linalg.norm(global_[:, None] - global_[None], axis=2)
    ok = np.abs(dl - dg) <= eps
    lids = np.array([p.local_id for p in pairs])
    gids = np.array([p.global_id for p in pairs])
    ok &= lids[:, None] != lids[None]
    ok &= gids[:, None] != gids[None]
    np.fill_diagonal(ok, True)
    best = 0
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        if len(members) <= best:
            continue
        if all(ok[a, b] for a, b in itertools.combinations(members, 2)):
            best = len(members)
    return best


class TestGeometricVerify:
    def test_all_inliers_returned(self, rng):
        T = random_pose(rng)
        pairs = make_pairs(rng, 10, 0, T)
        out = geometric_verify(pairs, RetrievalParams())
        assert len(out) == 10

    def test_outliers_rejected(self, rng):
        params = RetrievalParams()
        for _ in range(10):
            T = random_pose(rng)
            pairs = make_pairs(rng, 10, 5, T)
            out = geometric_verify(pairs, params)
            assert sorted(p.local_id for p in out) == list(range(10))
            assert len(out) == exhaustive_max_consistent(pairs, params)

    def test_below_min_inliers_empty(self, rng):
        T = random_pose(rng)
        pairs = make_pairs(rng, 6, 0, T)
        assert geometric_verify(pairs, RetrievalParams(min_inliers=7)) == []
        assert len(geometric_verify(pairs, RetrievalParams(min_inliers=6))) == 6

    def test_returned_subset_satisfies_epsilon(self, rng):
        params = RetrievalParams(min_inliers=3)
        for _ in range(20):
            T = random_pose(rng)
            pairs = make_pairs(rng, int(rng.integers(3, 9)), int(rng.integers(0, 6)), T)
            out = geometric_verify(pairs, params)
            for a, b in itertools.combinations(out, 2):
                dl = np.linalg.norm(a.local_centroid - b.local_centroid)
                dg = np.linalg.norm(a.global_centroid - b.global_centroid)
                assert abs(dl - dg) <= params.consistency_epsilon


class TestEstimateTransform:
    def test_identity(self, rng):
        pts = rng.normal(size=(8, 3))
        T = estimate_transform(pts, pts)
        assert np.allclose(T.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(T.translation, 0, atol=1e-9)

    def test_exact_recovery(self, rng):
        for _ in range(50):
            T = random_pose(rng)
            pts = rng.normal(size=(10, 3)) * 5
            got = estimate_transform(pts, T.apply(pts))
            assert np.max(np.abs(got.rotation - T.rotation)) < 1e-9
            assert np.max(np.abs(got.translation - T.translation)) < 1e-9

    def test_noisy_recovery(self, rng):
        errs_t, errs_r = [], []
        for _ in range(50):
            T = random_pose(rng)
            pts = rng.uniform(-10, 10, size=(20, 3))
            noisy = T.apply(pts) + rng.normal(scale=0.05, size=(20, 3))
            got = estimate_transform(pts, noisy)
            errs_t.append(np.linalg.norm(got.translation - T.translation))
            cos = (np.trace(got.rotation.T @ T.rotation) - 1) / 2
            errs_r.append(math.degrees(math.acos(np.clip(cos, -1, 1))))
        assert np.median(errs_t) < 0.05
        assert np.median(errs_r) < 1.0

    def test_collinear_degenerate(self):
        pts = np.array([[float(i), 0.0, 0.0] for i in range(5)])
        with pytest.raises(DegenerateConfiguration):
            estimate_transform(pts, pts + 1.0)

    def test_optimality_against_perturbations(self, rng):
        T = random_pose(rng)
        pts = rng.uniform(-5, 5, size=(15, 3))
        target = T.apply(pts) + rng.normal(scale=0.1, size=(15, 3))
        est = estimate_transform(pts, target)
        base = np.sum((est.apply(pts) - target) ** 2)
        for _ in range(1000):
            d = rng.normal(scale=0.01, size=6)
            R = est.rotation @ so3_exp(d[:3])
            t = est.translation + d[3:]
            cost = np.sum((pts @ R.T + t - target) ** 2)
            assert cost >= base - 1e-12


class TestLocalize:
    def build_scene(self, rng, n_map=60, d=16):
        descs = rng.normal(size=(n_map, d))
        cents = rng.uniform(-40, 40, size=(n_map, 3))
        m = SegmentMap()
        for i in range(n_map):
            m.upsert(i, cents[i], descs[i], SemanticClass.OTHER, 100)
        return m, descs, cents

    def test_identity_subset(self, rng):
        m, descs, cents = self.build_scene(rng)
        local = [(1000 + i, cents[i], descs[i], SemanticClass.OTHER) for i in range(10)]
        res = localize(local, m, RetrievalParams(min_inliers=7))
        assert res is not None
        assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-6)
        assert np.allclose(res.transform.translation, 0, atol=1e-6)
        assert len(res.inliers) >= 7
        assert res.residual_rms < 1e-9

    def test_transformed_scene_with_spurious(self, rng):
        m, descs, cents = self.build_scene(rng)
        T = random_pose(rng)
        Tinv = T.inverse()
        local = [(1000 + i, Tinv.apply(cents[i].reshape(1, 3))[0], descs[i],
                  SemanticClass.OTHER) for i in range(12)]
        # 30% spurious segments with unseen descriptors.
        for j in range(5):
            local.append((2000 + j, rng.uniform(-40, 40, size=3),
                          rng.normal(size=16), SemanticClass.OTHER))
        res = localize(local, m, RetrievalParams(min_inliers=7))
        assert res is not None
        assert np.max(np.abs(res.transform.rotation - T.rotation)) < 1e-6
        assert np.max(np.abs(res.transform.translation - T.translation)) < 1e-6

    def test_too_few_matches_no_result(self, rng):
        m, descs, cents = self.build_scene(rng)
        local = [(1000 + i, cents[i], descs[i], SemanticClass.OTHER) for i in range(4)]
        assert localize(local, m, RetrievalParams(min_inliers=7)) is None

    def test_drop_classes_filters_both_sides(self, rng):
        m, descs, cents = self.build_scene(rng)
        # Re-tag the first 10 as vehicles; queries matching them only via
        # vehicle entries must fail.
        for i in range(10):
            m.upsert(i, cents[i], descs[i], SemanticClass.VEHICLE, 100)
        local = [(1000 + i, cents[i], descs[i], SemanticClass.OTHER) for i in range(10)]
        res = localize(local, m, RetrievalParams(min_inliers=7),
                       drop_classes={SemanticClass.VEHICLE})
        assert res is None
