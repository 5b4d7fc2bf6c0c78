"""Bounding-box cluster trees and epsilon-range search."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .metric import ABSOLUTE, EUCLIDEAN, GREAT_CIRCLE, PointSet

# Relative slack on pruning thresholds so rounding never drops a true neighbor.
PRUNE_SLACK = 1e-9
# Upper bound on candidate pairs materialized at once by range_pairs.
PAIR_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class ClusterTree:
    """Hierarchy of nested clusters stored as flat arrays (nodes in BFS order).

    Node ``v`` owns ``perm[start[v]:stop[v]]`` (original point indices) and
    the tight bounding box ``lo[v], hi[v]``.  Its children are
    ``child_ids[child_ptr[v]:child_ptr[v + 1]]``.
    """

    perm: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: np.ndarray
    parent: np.ndarray
    child_ptr: np.ndarray
    child_ids: np.ndarray
    leaf_max: int

    @property
    def n_nodes(self) -> int:
        return len(self.start)

    @property
    def n_points(self) -> int:
        return len(self.perm)

    @property
    def depth(self) -> int:
        return int(self.level.max())

    def children(self, v: int) -> np.ndarray:
        return self.child_ids[self.child_ptr[v]:self.child_ptr[v + 1]]

    def is_leaf(self, v=None):
        leaf = self.child_ptr[1:] == self.child_ptr[:-1]
        return leaf if v is None else bool(leaf[v])

    def size(self, v: int) -> int:
        return int(self.stop[v] - self.start[v])

    def points_of(self, v: int) -> np.ndarray:
        return self.perm[self.start[v]:self.stop[v]]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf())

    def level_nodes(self, level: int) -> np.ndarray:
        """Clusters at ``level`` plus shallower leaves standing in for them."""
        if not 0 <= level <= self.depth:
            raise ValueError(f"level {level} outside 0..{self.depth}")
        sel = (self.level == level) | (self.is_leaf() & (self.level < level))
        nodes = np.flatnonzero(sel)
        return nodes[np.argsort(self.start[nodes], kind="stable")]

    def dump_boxes(self, path):
        k = self.lo.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level"] + [f"min{c}" for c in range(k)] + [f"max{c}" for c in range(k)])
            for v in range(self.n_nodes):
                w.writerow([int(self.level[v])] + [repr(float(x)) for x in self.lo[v]]
                           + [repr(float(x)) for x in self.hi[v]])


def build_tree(ps: PointSet, leaf_max: int = 32) -> ClusterTree:
    """Recursive bisection of tight bounding boxes into ``2^k`` sub-boxes.

    Empty sub-boxes are dropped.  A cluster whose points all coincide stays a
    leaf even when it exceeds ``leaf_max``.
    """
    if leaf_max < 1:
        raise ValueError("leaf_max must be positive")
    if not ps.metric.has_embedding:
        raise ValueError("cluster trees need a coordinate embedding")
    x = ps.coords
    n, k = x.shape
    if n == 0:
        raise ValueError("cannot build a tree on an empty point set")
    perm = np.arange(n)
    start, stop, lo, hi, level, parent = [], [], [], [], [], []
    children: list[list[int]] = []
    weights = (1 << np.arange(k)).astype(np.int64)

    queue = deque([(0, n, 0, -1)])
    while queue:
        a, b, lev, par = queue.popleft()
        node = len(start)
        pts = x[perm[a:b]]
        blo, bhi = pts.min(axis=0), pts.max(axis=0)
        start.append(a)
        stop.append(b)
        lo.append(blo)
        hi.append(bhi)
        level.append(lev)
        parent.append(par)
        children.append([])
        if par >= 0:
            children[par].append(node)
        if b - a <= leaf_max or np.all(bhi <= blo):
            continue
        mid = 0.5 * (blo + bhi)
        code = (pts > mid).astype(np.int64) @ weights
        order = np.argsort(code, kind="stable")
        perm[a:b] = perm[a:b][order]
        code = code[order]
        cuts = np.flatnonzero(np.diff(code)) + 1
        if len(cuts) == 0:
            continue
        bounds = np.concatenate(([0], cuts, [b - a])) + a
        for c0, c1 in zip(bounds[:-1], bounds[1:]):
            queue.append((int(c0), int(c1), lev + 1, node))

    counts = np.array([len(c) for c in children])
    child_ptr = np.concatenate(([0], np.cumsum(counts)))
    child_ids = np.array([c for cs in children for c in cs], dtype=np.intp)
    return ClusterTree(perm=perm, start=np.array(start), stop=np.array(stop),
                       lo=np.array(lo), hi=np.array(hi), level=np.array(level),
                       parent=np.array(parent), child_ptr=child_ptr,
                       child_ids=child_ids, leaf_max=leaf_max)


def _embedding_radius(ps: PointSet, eps: float) -> float:
    """Radius in the coordinate embedding that contains every metric eps-ball."""
    if ps.metric.kind == GREAT_CIRCLE:
        if eps >= math.pi:
            return math.inf
        eps = 2.0 * math.sin(0.5 * eps)
    elif ps.metric.kind not in (ABSOLUTE, EUCLIDEAN):
        raise ValueError("range search needs a coordinate embedding")
    return eps * (1.0 + PRUNE_SLACK)


def _box_gap(lo1, hi1, lo2, hi2) -> np.ndarray:
    gap = np.maximum(np.maximum(lo2 - hi1, lo1 - hi2), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def eps_neighbors(tree: ClusterTree, ps: PointSet, x, eps: float) -> np.ndarray:
    """All indices ``i`` with ``d(x, x_i) <= eps``, by depth-first descent.

    A child cluster is visited unless its bounding box lies farther than
    ``eps`` from ``x`` in the embedding; leaves are filtered exactly.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    thr = _embedding_radius(ps, eps)
    found = []
    stack = [0]
    while stack:
        v = stack.pop()
        kids = tree.children(v)
        if len(kids) == 0:
            idx = tree.points_of(v)
            d = ps.metric.pairwise(x[None, :], ps.coords[idx])[0]
            found.append(idx[d <= eps])
            continue
        gap = _box_gap(tree.lo[kids], tree.hi[kids], x[None, :], x[None, :])
        stack.extend(kids[gap <= thr].tolist())
    if not found:
        return np.zeros(0, dtype=np.intp)
    return np.sort(np.concatenate(found))


def _leaf_pairs(tree: ClusterTree, thr: float):
    """Pairs of leaves ``(A, B)`` with ``A <= B`` (by start) whose boxes are within ``thr``."""
    leaves = tree.leaves
    fa = leaves.copy()
    fb = np.zeros_like(leaves)
    leaf_mask = tree.is_leaf()
    out_a, out_b = [], []
    while len(fa):
        gap = _box_gap(tree.lo[fa], tree.hi[fa], tree.lo[fb], tree.hi[fb])
        keep = gap <= thr
        keep &= tree.stop[fb] > tree.start[fa]  # nothing of B lies before A
        fa, fb = fa[keep], fb[keep]
        done = leaf_mask[fb]
        out_a.append(fa[done])
        out_b.append(fb[done])
        fa, fb = fa[~done], fb[~done]
        nkids = tree.child_ptr[fb + 1] - tree.child_ptr[fb]
        fa = np.repeat(fa, nkids)
        first = np.repeat(tree.child_ptr[fb], nkids)
        offs = np.arange(len(first)) - np.repeat(np.cumsum(nkids) - nkids, nkids)
        fb = tree.child_ids[first + offs]
    a = np.concatenate(out_a) if out_a else np.zeros(0, dtype=np.intp)
    b = np.concatenate(out_b) if out_b else np.zeros(0, dtype=np.intp)
    keep = tree.start[b] >= tree.start[a]
    return a[keep], b[keep]


def range_pairs(tree: ClusterTree, ps: PointSet, eps: float, chunk: int = PAIR_CHUNK):
    """Yield ``(i, j, d)`` blocks listing each unordered pair with ``d <= eps`` once.

    Leaf pairs are found by a vectorized simultaneous descent; candidate
    point pairs are then checked with the exact metric.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    thr = _embedding_radius(ps, eps)
    la, lb = _leaf_pairs(tree, thr)
    sa = tree.stop[la] - tree.start[la]
    sb = tree.stop[lb] - tree.start[lb]
    work = sa * sb
    cum = np.cumsum(work)
    x = ps.coords
    p0 = 0
    while p0 < len(la):
        base = cum[p0] - work[p0]
        p1 = int(np.searchsorted(cum, base + chunk, side="right"))
        p1 = max(p1, p0 + 1)
        w = work[p0:p1]
        pid = np.repeat(np.arange(p0, p1), w)
        local = np.arange(int(w.sum())) - np.repeat(np.cumsum(w) - w, w)
        ia = local // sb[pid]
        ib = local % sb[pid]
        i = tree.perm[tree.start[la[pid]] + ia]
        j = tree.perm[tree.start[lb[pid]] + ib]
        keep = (la[pid] != lb[pid]) | (ib > ia)
        i, j = i[keep], j[keep]
        d = ps.metric.rowwise(x[i], x[j])
        m = d <= eps
        yield i[m], j[m], d[m]
        p0 = p1


def neighbor_lists(tree: ClusterTree, ps: PointSet, eps: float):
    """CSR adjacency of closed eps-balls (each point lists itself)."""
    n = len(ps)
    ii, jj = [np.arange(n)], [np.arange(n)]
    for i, j, _ in range_pairs(tree, ps, eps):
        ii += [i, j]
        jj += [j, i]
    return _to_csr(np.concatenate(ii), np.concatenate(jj), n)


def _to_csr(i: np.ndarray, j: np.ndarray, n: int):
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    ptr = np.zeros(n + 1, dtype=np.intp)
    np.add.at(ptr, i + 1, 1)
    return np.cumsum(ptr), j
