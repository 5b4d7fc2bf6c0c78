"""Greedy set cover by metric balls and covering-probability bounds."""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .metric import PointSet, iter_pair_blocks
from .tree import ClusterTree, _to_csr, neighbor_lists


@dataclass(frozen=True, eq=False)
class Covering:
    """Greedy cover: ``center_indices[s]`` was chosen at step ``s``.

    ``assignment[i]`` is the step whose ball first covered site ``i``.
    """

    center_indices: np.ndarray
    radius: float
    assignment: np.ndarray

    def __len__(self) -> int:
        return len(self.center_indices)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["center_index", "step"])
            for s, c in enumerate(self.center_indices):
                w.writerow([int(c), s])


def ball_lists(ps: PointSet, radius: float, tree: Optional[ClusterTree] = None):
    """CSR membership lists of all closed balls ``B_radius(x_j)``."""
    if tree is not None:
        return neighbor_lists(tree, ps, radius)
    n = len(ps)
    ii, jj = [np.arange(n)], [np.arange(n)]
    for i, j, d in iter_pair_blocks(ps):
        m = d <= radius
        ii += [i[m], j[m]]
        jj += [j[m], i[m]]
    return _to_csr(np.concatenate(ii), np.concatenate(jj), n)


def greedy_cover(ps: PointSet, radius: float, tree: Optional[ClusterTree] = None,
                 balls=None) -> Covering:
    """Repeatedly pick the ball covering the most uncovered sites.

    Ball memberships are computed once.  Residual counts live in a lazy
    max-heap keyed by ``(-count, index)``, so ties go to the lowest index.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    n = len(ps)
    ptr, nbr = balls if balls is not None else ball_lists(ps, radius, tree)
    count = np.diff(ptr).astype(np.int64)
    covered = np.zeros(n, dtype=bool)
    assignment = np.full(n, -1, dtype=np.intp)
    heap = [(-int(c), j) for j, c in enumerate(count)]
    heapq.heapify(heap)
    centers = []
    remaining = n
    while remaining:
        negc, j = heapq.heappop(heap)
        if -negc != count[j]:
            heapq.heappush(heap, (-int(count[j]), j))
            continue
        members = nbr[ptr[j]:ptr[j + 1]]
        new = members[~covered[members]]
        step = len(centers)
        centers.append(j)
        covered[new] = True
        assignment[new] = step
        remaining -= len(new)
        # every ball containing a newly covered site loses one residual member
        lens = ptr[new + 1] - ptr[new]
        starts = np.repeat(ptr[new], lens)
        offs = np.arange(int(lens.sum())) - np.repeat(np.cumsum(lens) - lens, lens)
        np.subtract.at(count, nbr[starts + offs], 1)
    return Covering(np.array(centers, dtype=np.intp), float(radius), assignment)


def covering_number_upper(ps: PointSet, radius: float,
                          tree: Optional[ClusterTree] = None) -> int:
    """Greedy upper bound on the covering number, within a factor ``ln N + 1``."""
    return len(greedy_cover(ps, radius, tree))


def covering_probability_bound(cover_count: int, eta: float, n: int) -> float:
    """Lower bound ``1 - cover_count * eta**n`` on the probability that ``n``
    iid sites cover the space (may be negative, i.e. vacuous)."""
    if cover_count < 1 or n < 1:
        raise ValueError("cover_count and n must be positive")
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    return 1.0 - cover_count * eta ** n
