import numpy as np
import pytest

from segtrain.datasets import (
    build_classes,
    epoch_samples,
    read_correspondence_csv,
    synthetic_objects,
)


class TestBuildClasses:
    def test_no_correspondences_one_class_each(self):
        got = build_classes([10, 20, 30], [])
        assert sorted(got) == [10, 20, 30]
        assert len(set(got.values())) == 3

    def test_chain_is_transitive(self):
        got = build_classes([1, 2, 3, 4], [(1, 2), (2, 3)])
        assert got[1] == got[2] == got[3]
        assert got[4] != got[1]

    def test_matches_dfs_oracle(self, rng):
        ids = list(range(40))
        pairs = [(int(rng.integers(0, 40)), int(rng.integers(0, 40)))
                 for _ in range(30)]
        got = build_classes(ids, pairs)

        # Oracle: explicit DFS components.
        adj = {i: set() for i in ids}
        for a, b in pairs:
            adj[a].add(b)
            adj[b].add(a)
        seen = {}
        comp = 0
        for start in ids:
            if start in seen:
                continue
            stack = [start]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen[v] = comp
                stack.extend(adj[v] - seen.keys())
            comp += 1
        groups_got = {}
        groups_want = {}
        for i in ids:
            groups_got.setdefault(got[i], set()).add(i)
            groups_want.setdefault(seen[i], set()).add(i)
        assert set(map(frozenset, groups_got.values())) == \
            set(map(frozenset, groups_want.values()))

    def test_min_samples_drops_small_classes(self):
        counts = {1: 5, 2: 5, 3: 1}
        got = build_classes([1, 2, 3], [(1, 2)], min_samples=3,
                            observation_counts=counts)
        assert 3 not in got
        assert got[1] == got[2]

    def test_correspondence_csv_round_trip(self, tmp_path):
        p = tmp_path / "pairs.csv"
        p.write_text("id_a,id_b,overlap\n3,7,0.5\n8,9,0.31\n")
        assert read_correspondence_csv(p) == [(3, 7), (8, 9)]


class TestSyntheticObjects:
    def test_twenty_distinct_classes(self):
        objs = synthetic_objects(20, seed=1)
        assert len(objs) == 20
        assert sorted(o.class_index for o in objs) == list(range(20))
        kinds = {o.kind for o in objs}
        assert kinds == {"box", "cylinder", "lshape", "plane"}

    def test_reasonable_sizes(self):
        for o in synthetic_objects(8, seed=2):
            assert len(o.points) > 400
            extent = o.points.max(axis=0) - o.points.min(axis=0)
            assert np.all(extent < 20.0)

    def test_epoch_samples_labels_preserved(self):
        objs = synthetic_objects(5, seed=3)
        samples = epoch_samples(objs, epoch=0, views_per_object=4, seed=9)
        assert len(samples) == 20
        labels = [s.label for s in samples]
        assert sorted(set(labels)) == list(range(5))
        for s in samples:
            assert s.grid.shape == (32, 32, 16)
            assert s.grid.sum() > 0
            assert s.scale.shape == (3,)

    def test_epoch_reroll_changes_views(self):
        objs = synthetic_objects(3, seed=4)
        a = epoch_samples(objs, epoch=0, views_per_object=2, seed=9)
        b = epoch_samples(objs, epoch=1, views_per_object=2, seed=9)
        assert any(not np.array_equal(x.grid, y.grid) for x, y in zip(a, b))
        c = epoch_samples(objs, epoch=0, views_per_object=2, seed=9)
        assert all(np.array_equal(x.grid, y.grid) for x, y in zip(a, c))
