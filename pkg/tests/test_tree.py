"""Tests for cluster trees and epsilon-range search."""

import numpy as np
import pytest

from modcont.metric import Metric, PointSet
from modcont.tree import build_tree, eps_neighbors, neighbor_lists, range_pairs


def sphere_points(rng, n):
    x = rng.normal(size=(n, 3))
    return PointSet(x / np.linalg.norm(x, axis=1)[:, None], Metric.great_circle())


def brute(ps, x, eps):
    d = ps.metric.pairwise(np.atleast_2d(x), ps.coords)[0]
    return np.flatnonzero(d <= eps)


class TestBuildTree:
    def test_unit_square_corners(self):
        ps = PointSet([[0, 0], [1, 0], [0, 1], [1, 1]])
        tree = build_tree(ps, leaf_max=1)
        assert tree.depth == 1
        assert len(tree.leaves) == 4
        assert all(tree.size(v) == 1 for v in tree.leaves)

    def test_single_point(self):
        tree = build_tree(PointSet([[0.5, 0.5]]))
        assert tree.n_nodes == 1 and tree.is_leaf(0)

    def test_empty(self):
        with pytest.raises(ValueError):
            build_tree(PointSet(np.zeros((0, 2))))

    def test_balanced_uniform_grid(self):
        ps = PointSet(np.linspace(0, 1, 1024), Metric.absolute())
        tree = build_tree(ps, leaf_max=32)
        sizes = [tree.size(v) for v in tree.leaves]
        assert min(sizes) >= 16 and max(sizes) <= 64

    def test_structure_invariants(self):
        rng = np.random.default_rng(0)
        for ps in (PointSet(rng.random((500, 2))), sphere_points(rng, 500)):
            tree = build_tree(ps, leaf_max=10)
            assert sorted(tree.perm.tolist()) == list(range(500))
            for v in range(tree.n_nodes):
                pts = ps.coords[tree.points_of(v)]
                assert np.all(pts >= tree.lo[v]) and np.all(pts <= tree.hi[v])
                kids = tree.children(v)
                if len(kids):
                    assert tree.start[kids[0]] == tree.start[v]
                    assert tree.stop[kids[-1]] == tree.stop[v]
                    assert np.all(tree.stop[kids[:-1]] == tree.start[kids[1:]])
                    assert np.all(tree.level[kids] == tree.level[v] + 1)
                else:
                    assert tree.size(v) <= 10

    def test_duplicates_stay_in_one_leaf(self):
        ps = PointSet(np.zeros((50, 2)))
        tree = build_tree(ps, leaf_max=4)
        assert tree.n_nodes == 1

    def test_level_nodes_partition(self):
        rng = np.random.default_rng(1)
        tree = build_tree(PointSet(rng.random(300) ** 3, Metric.absolute()), leaf_max=4)
        for level in range(tree.depth + 1):
            nodes = tree.level_nodes(level)
            covered = np.concatenate([tree.points_of(v) for v in nodes])
            assert sorted(covered.tolist()) == list(range(300))
        with pytest.raises(ValueError):
            tree.level_nodes(tree.depth + 1)

    def test_dump_boxes(self, tmp_path):
        tree = build_tree(PointSet(np.random.default_rng(2).random((40, 2))), leaf_max=5)
        tree.dump_boxes(tmp_path / "boxes.csv")
        lines = (tmp_path / "boxes.csv").read_text().splitlines()
        assert lines[0] == "level,min0,min1,max0,max1"
        assert len(lines) == tree.n_nodes + 1


class TestEpsNeighbors:
    def test_brute_force_2d(self):
        rng = np.random.default_rng(3)
        ps = PointSet(rng.random((200, 2)))
        tree = build_tree(ps, leaf_max=8)
        for x in rng.random((50, 2)):
            assert np.array_equal(eps_neighbors(tree, ps, x, 0.1), brute(ps, x, 0.1))

    def test_everything_and_self(self):
        rng = np.random.default_rng(4)
        ps = PointSet(rng.random((100, 3)))
        tree = build_tree(ps, leaf_max=4)
        assert len(eps_neighbors(tree, ps, ps.coords[0], 2.0)) == 100
        assert eps_neighbors(tree, ps, ps.coords[7], 1e-9).tolist() == [7]

    def test_closed_ball(self):
        ps = PointSet([0.0, 0.25, 0.5, 1.0], Metric.absolute())
        tree = build_tree(ps, leaf_max=1)
        assert eps_neighbors(tree, ps, [0.0], 0.5).tolist() == [0, 1, 2]

    def test_sphere_and_monotone(self):
        rng = np.random.default_rng(5)
        ps = sphere_points(rng, 1000)
        tree = build_tree(ps, leaf_max=16)
        for x in ps.coords[:30]:
            prev = np.zeros(0, dtype=int)
            for eps in (0.05, 0.2, 1.0, 3.2):
                got = eps_neighbors(tree, ps, x, eps)
                assert np.array_equal(got, brute(ps, x, eps))
                assert set(prev.tolist()) <= set(got.tolist())
                prev = got

    def test_neighbor_count_scaling(self):
        # counts grow like eps^n on quasi-uniform grids
        for dim, side in ((1, 4096), (2, 96)):
            g = np.stack(np.meshgrid(*[np.linspace(0, 1, side)] * dim), -1).reshape(-1, dim)
            ps = PointSet(g)
            tree = build_tree(ps, leaf_max=16)
            centre = np.full(dim, 0.5)
            eps = np.array([0.02, 0.04, 0.08, 0.16])
            counts = [len(eps_neighbors(tree, ps, centre, e)) for e in eps]
            slope = np.polyfit(np.log(eps), np.log(counts), 1)[0]
            assert abs(slope - dim) <= 0.3


class TestRangePairs:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_all_pairs_once(self, dim):
        rng = np.random.default_rng(dim)
        ps = PointSet(rng.random((400, dim)))
        tree = build_tree(ps, leaf_max=7)
        eps = 0.15
        got = set()
        for i, j, d in range_pairs(tree, ps, eps, chunk=1000):
            for a, b in zip(i.tolist(), j.tolist()):
                key = (min(a, b), max(a, b))
                assert key not in got
                got.add(key)
        dense = ps.metric.pairwise(ps.coords, ps.coords)
        ii, jj = np.nonzero(np.triu(dense <= eps, 1))
        assert got == set(zip(ii.tolist(), jj.tolist()))

    def test_neighbor_lists(self):
        rng = np.random.default_rng(9)
        ps = sphere_points(rng, 300)
        tree = build_tree(ps, leaf_max=8)
        ptr, nbr = neighbor_lists(tree, ps, 0.3)
        for i in range(300):
            assert np.array_equal(np.sort(nbr[ptr[i]:ptr[i + 1]]), brute(ps, ps.coords[i], 0.3))
