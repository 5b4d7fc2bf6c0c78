"""Piecewise-constant interpolation on Voronoi-type and cluster-tree partitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .covering import Covering
from .metric import BLOCK_ROWS, LabeledDataset, PointSet, diameter
from .tree import ClusterTree


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint cells covering all sites, each with one anchor site.

    ``cell_of[i]`` is the cell of site ``i``; ``anchors[c]`` is the site whose
    value represents cell ``c``.  ``mesh_size`` is an upper bound on the
    largest cell diameter (exact when computed by :func:`mesh_size`).
    """

    cell_of: np.ndarray
    anchors: np.ndarray
    mesh_size: float

    def __post_init__(self):
        cell_of = np.asarray(self.cell_of, dtype=np.intp)
        anchors = np.asarray(self.anchors, dtype=np.intp)
        m = len(anchors)
        if len(cell_of) and (cell_of.min() < 0 or cell_of.max() >= m):
            raise ValueError("cell ids out of range")
        if np.any(np.bincount(cell_of, minlength=m) == 0):
            raise ValueError("empty cell")
        if np.any(cell_of[anchors] != np.arange(m)):
            raise ValueError("anchor outside its cell")
        object.__setattr__(self, "cell_of", cell_of)
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_cells(self) -> int:
        return len(self.anchors)

    def cells(self) -> list:
        order = np.argsort(self.cell_of, kind="stable")
        bounds = np.searchsorted(self.cell_of[order], np.arange(self.n_cells + 1))
        return [order[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    def to_csv(self, path):
        is_anchor = np.zeros(len(self.cell_of), dtype=int)
        is_anchor[self.anchors] = 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site_index", "cell_id", "is_anchor"])
            for i, (c, a) in enumerate(zip(self.cell_of, is_anchor)):
                w.writerow([i, int(c), int(a)])

    @classmethod
    def from_csv(cls, path, sites: Optional[PointSet] = None) -> "Partition":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row and row[0] != "site_index" and not row[0].startswith("#"):
                    rows.append([int(c) for c in row])
        arr = np.array(rows, dtype=np.intp).reshape(-1, 3)
        cell_of = np.empty(len(arr), dtype=np.intp)
        cell_of[arr[:, 0]] = arr[:, 1]
        anchors = np.empty(cell_of.max() + 1, dtype=np.intp)
        sel = arr[:, 2] == 1
        anchors[arr[sel, 1]] = arr[sel, 0]
        part = cls(cell_of, anchors, np.inf)
        if sites is not None:
            part = cls(cell_of, anchors, mesh_size(sites, part))
        return part


def cell_diameters(ps: PointSet, part: Partition) -> np.ndarray:
    """Exact diameter of every cell in the site metric."""
    return np.array([diameter(ps.subset(c)) for c in part.cells()])


def mesh_size(ps: PointSet, part: Partition) -> float:
    return float(np.max(cell_diameters(ps, part)))


def voronoi_partition(ps: PointSet, centers: Covering,
                      exact_mesh: bool = True) -> Partition:
    """Assign each site to its nearest center; ties go to the earlier greedy step."""
    c = np.asarray(centers.center_indices, dtype=np.intp)
    if len(c) == 0:
        raise ValueError("no centers")
    x = ps.coords
    cell_of = np.empty(len(ps), dtype=np.intp)
    for a in range(0, len(ps), BLOCK_ROWS):
        d = ps.metric.pairwise(x[a:a + BLOCK_ROWS], x[c])
        cell_of[a:a + BLOCK_ROWS] = np.argmin(d, axis=1)  # first minimum wins
    # a center is its own nearest center unless it duplicates an earlier one
    anchors = c.copy()
    dup = cell_of[c] != np.arange(len(c))
    if dup.any():
        raise ValueError("centers must be distinct sites")
    part = Partition(cell_of, anchors, 2.0 * centers.radius)
    if exact_mesh:
        part = Partition(cell_of, anchors, mesh_size(ps, part))
    return part


def tree_anchors(tree: ClusterTree, rng_seed, nested: bool = True) -> np.ndarray:
    """One anchor (original index) per tree node.

    Leaves draw uniformly at random among their points.  With ``nested`` a
    parent inherits the anchor of its first child, so anchor sets grow with
    the level; otherwise every node draws independently.
    """
    rng = np.random.default_rng(rng_seed)
    n_nodes = tree.n_nodes
    size = tree.stop - tree.start
    if not nested:
        pick = tree.start + (rng.random(n_nodes) * size).astype(np.intp)
        return tree.perm[np.minimum(pick, tree.stop - 1)]
    anchors = np.empty(n_nodes, dtype=np.intp)
    leaves = tree.leaves
    pick = tree.start[leaves] + (rng.random(len(leaves)) * size[leaves]).astype(np.intp)
    anchors[leaves] = tree.perm[np.minimum(pick, tree.stop[leaves] - 1)]
    # BFS order: children come after parents, so sweep backwards
    for v in range(n_nodes - 1, -1, -1):
        lo, hi = tree.child_ptr[v], tree.child_ptr[v + 1]
        if hi > lo:
            anchors[v] = anchors[tree.child_ids[lo]]
    return anchors


def tree_partition(tree: ClusterTree, level: int, rng_seed=None, nested: bool = True,
                   anchors: Optional[np.ndarray] = None,
                   ps: Optional[PointSet] = None) -> Partition:
    """Cells = clusters at ``level``; shallower leaves are kept as whole cells.

    Pass precomputed ``anchors`` (from :func:`tree_anchors`) to share anchors
    across levels.  With ``ps`` the mesh size is computed exactly, otherwise
    it is the largest bounding-box diagonal of the cells (an upper bound for
    Euclidean sites).
    """
    nodes = tree.level_nodes(level)
    if anchors is None:
        anchors = tree_anchors(tree, rng_seed, nested)
    cell_of = np.empty(tree.n_points, dtype=np.intp)
    for c, v in enumerate(nodes):
        cell_of[tree.points_of(v)] = c
    box = np.sqrt(np.sum((tree.hi[nodes] - tree.lo[nodes]) ** 2, axis=1))
    part = Partition(cell_of, anchors[nodes], float(np.max(box)))
    if ps is not None:
        part = Partition(cell_of, anchors[nodes], mesh_size(ps, part))
    return part


def interpolate(ds: LabeledDataset, part: Partition) -> np.ndarray:
    """Value of each site's cell anchor."""
    if len(part.cell_of) != len(ds):
        raise ValueError("partition does not match the dataset")
    return ds.values.coords[part.anchors[part.cell_of]]


def interpolation_error(ds: LabeledDataset, approx) -> float:
    """Largest value distance between the data and an approximation."""
    approx = np.asarray(approx, dtype=float)
    if approx.ndim == 1:
        approx = approx[:, None]
    if len(approx) != len(ds):
        raise ValueError(f"{len(approx)} approximations for {len(ds)} sites")
    return float(np.max(ds.values.metric.rowwise(ds.values.coords, approx)))
