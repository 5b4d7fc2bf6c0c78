"""Metrics, point sets, labeled datasets and their geometric summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

ABSOLUTE = "absolute"
EUCLIDEAN = "euclidean"
GREAT_CIRCLE = "great-circle"
CALLBACK = "callback"

# Dense N x N distance matrices are only cached below this size.
DENSE_THRESHOLD = 4096
# Rows per block in blocked pair scans.
BLOCK_ROWS = 256

UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Metric:
    """A distance on coordinate vectors.

    All distances are evaluated through one elementwise formula, so the same
    pair always yields the same float regardless of which code path asked.
    """

    kind: str
    func: Optional[Callable[[np.ndarray, np.ndarray], float]] = field(
        default=None, compare=False)

    @classmethod
    def absolute(cls) -> "Metric":
        return cls(ABSOLUTE)

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls(EUCLIDEAN)

    @classmethod
    def great_circle(cls) -> "Metric":
        return cls(GREAT_CIRCLE)

    @classmethod
    def from_callable(cls, func) -> "Metric":
        return cls(CALLBACK, func)

    @classmethod
    def from_name(cls, name: str) -> "Metric":
        aliases = {"abs": ABSOLUTE, "absolute": ABSOLUTE,
                   "euclidean": EUCLIDEAN, "great-circle": GREAT_CIRCLE,
                   "geodesic": GREAT_CIRCLE, "sphere": GREAT_CIRCLE}
        try:
            return cls(aliases[name])
        except KeyError:
            raise ValueError(f"unknown metric {name!r}") from None

    @property
    def has_embedding(self) -> bool:
        return self.kind != CALLBACK

    def _eval(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == ABSOLUTE or (self.kind == EUCLIDEAN and a.shape[-1] == 1):
            return np.abs(a[..., 0] - b[..., 0])
        if self.kind == EUCLIDEAN:
            s = (a[..., 0] - b[..., 0]) ** 2
            for c in range(1, a.shape[-1]):
                s = s + (a[..., c] - b[..., c]) ** 2
            return np.sqrt(s)
        if self.kind == GREAT_CIRCLE:
            a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
            b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
            cx = a1 * b2 - a2 * b1
            cy = a2 * b0 - a0 * b2
            cz = a0 * b1 - a1 * b0
            cross = np.sqrt(cx * cx + cy * cy + cz * cz)
            return np.arctan2(cross, a0 * b0 + a1 * b1 + a2 * b2)
        a, b = np.broadcast_arrays(a, b)
        flat_a = a.reshape(-1, a.shape[-1])
        flat_b = b.reshape(-1, b.shape[-1])
        out = np.fromiter((self.func(p, q) for p, q in zip(flat_a, flat_b)),
                          dtype=float, count=len(flat_a))
        return out.reshape(a.shape[:-1])

    def rowwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distances between paired rows ``a[i]`` and ``b[i]``."""
        return self._eval(np.asarray(a, dtype=float), np.asarray(b, dtype=float))

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance block of shape ``(len(a), len(b))``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return self._eval(a[:, None, :], b[None, :, :])

    def __call__(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        return float(self._eval(x, y))


def _as_coords(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("points must be a sequence of coordinate vectors")
    return arr


@dataclass(frozen=True, eq=False)
class PointSet:
    """Finite set of coordinate vectors with a metric. Immutable."""

    coords: np.ndarray
    metric: Metric = field(default_factory=Metric.euclidean)
    dense_threshold: int = DENSE_THRESHOLD

    def __post_init__(self):
        coords = _as_coords(self.coords)
        if coords.shape[1] < 1:
            raise ValueError("points need at least one coordinate")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if self.metric.kind == GREAT_CIRCLE:
            if coords.shape[1] != 3:
                raise ValueError("great-circle metric needs points in R^3")
            norms = np.linalg.norm(coords, axis=1)
            if len(norms) and np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
                raise ValueError("great-circle points must have unit norm")
        if self.metric.kind == ABSOLUTE and coords.shape[1] != 1:
            raise ValueError("absolute-difference metric is one-dimensional")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def is_1d(self) -> bool:
        return self.dim == 1 and self.metric.kind in (ABSOLUTE, EUCLIDEAN)

    def subset(self, indices) -> "PointSet":
        return PointSet(self.coords[np.asarray(indices, dtype=np.intp)],
                        self.metric, self.dense_threshold)

    @cached_property
    def _dense(self) -> Optional[np.ndarray]:
        if len(self) > self.dense_threshold:
            return None
        return self.metric.pairwise(self.coords, self.coords)

    def distance(self, i: int, j: int) -> float:
        n = len(self)
        for k in (i, j):
            if not -n <= k < n:
                raise IndexError(f"index {k} out of range for {n} points")
        dense = self._dense
        if dense is not None:
            return float(dense[i, j])
        return float(self.metric.rowwise(self.coords[i], self.coords[j]))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Site-to-value map: ``values[i]`` is the datum observed at ``sites[i]``."""

    sites: PointSet
    values: PointSet

    def __post_init__(self):
        if len(self.sites) != len(self.values):
            raise ValueError(
                f"{len(self.sites)} sites but {len(self.values)} values")
        if len(self.sites) < 1:
            raise ValueError("dataset needs at least one site")

    @classmethod
    def from_arrays(cls, sites, values, site_metric: Metric | str = EUCLIDEAN,
                    value_metric: Metric | str = ABSOLUTE) -> "LabeledDataset":
        if isinstance(site_metric, str):
            site_metric = Metric.from_name(site_metric)
        if isinstance(value_metric, str):
            value_metric = Metric.from_name(value_metric)
        return cls(PointSet(sites, site_metric), PointSet(values, value_metric))

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def real_values(self) -> bool:
        """True for scalar data measured by absolute difference."""
        return self.values.is_1d

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.sites.subset(indices),
                              self.values.subset(indices))


def pairwise_distance(ps: PointSet, i: int, j: int) -> float:
    return ps.distance(i, j)


def iter_pair_blocks(ps: PointSet, rows: Optional[np.ndarray] = None,
                     block: int = BLOCK_ROWS):
    """Yield ``(i, j, d)`` for every pair ``i < j`` in row blocks.

    ``i`` and ``j`` are 1-D index arrays of equal length.  Memory stays at
    ``O(block * N)``.
    """
    n = len(ps)
    x = ps.coords
    for a in range(0, n, block):
        b = min(a + block, n)
        d = ps.metric.pairwise(x[a:b], x[a:])
        ii, jj = np.nonzero(np.triu(np.ones(d.shape, dtype=bool), k=1))
        yield ii + a, jj + a, d[ii, jj]


def _cdist_nearest(ps: PointSet, queries: np.ndarray, k: int = 1):
    """Nearest-site search through a k-d tree on the coordinate embedding.

    Returns exact metric distances; valid because the embedding distance is
    monotone in the metric (identity, or chord vs. arc on the sphere).
    """
    from scipy.spatial import cKDTree

    tree = cKDTree(ps.coords)
    _, idx = tree.query(queries, k=k)
    return idx


def separation_distance(ps: PointSet) -> float:
    """Smallest distance between two distinct indices."""
    n = len(ps)
    if n < 2:
        raise ValueError("separation distance needs at least two points")
    if ps.is_1d:
        return float(np.min(np.diff(np.sort(ps.coords[:, 0]))))
    if ps.metric.has_embedding:
        idx = _cdist_nearest(ps, ps.coords, k=2)
        # column 0 may not be the point itself when duplicates exist
        other = np.where(idx[:, 0] == np.arange(n), idx[:, 1], idx[:, 0])
        return float(np.min(ps.metric.rowwise(ps.coords, ps.coords[other])))
    return float(min(np.min(d) for _, _, d in iter_pair_blocks(ps) if len(d)))


def fill_distance(ps: PointSet, ambient: PointSet) -> float:
    """Largest distance from an ambient point to its nearest site."""
    if len(ps) == 0:
        raise ValueError("fill distance of an empty set")
    if ps.is_1d and ambient.is_1d:
        xs = np.sort(ps.coords[:, 0])
        q = ambient.coords[:, 0]
        pos = np.searchsorted(xs, q)
        left = xs[np.clip(pos - 1, 0, len(xs) - 1)]
        right = xs[np.clip(pos, 0, len(xs) - 1)]
        return float(np.max(np.minimum(np.abs(q - left), np.abs(q - right))))
    if ps.metric.has_embedding:
        idx = _cdist_nearest(ps, ambient.coords, k=1)
        return float(np.max(ps.metric.rowwise(ambient.coords, ps.coords[idx])))
    best = 0.0
    for a in range(0, len(ambient), BLOCK_ROWS):
        d = ps.metric.pairwise(ambient.coords[a:a + BLOCK_ROWS], ps.coords)
        best = max(best, float(np.max(np.min(d, axis=1))))
    return best


def fill_distance_interval(ps: PointSet, lo: float, hi: float) -> float:
    """Fill distance of 1-D sites with respect to the continuum ``[lo, hi]``."""
    if len(ps) == 0:
        raise ValueError("fill distance of an empty set")
    if not ps.is_1d:
        raise ValueError("continuum fill distance is only defined on an interval")
    xs = np.sort(ps.coords[:, 0])
    gaps = np.diff(xs) / 2.0 if len(xs) > 1 else np.zeros(0)
    candidates = [xs[0] - lo, hi - xs[-1]]
    if len(gaps):
        candidates.append(float(np.max(gaps)))
    return float(max(candidates))


def diameter(ps: PointSet) -> float:
    n = len(ps)
    if n == 0:
        raise ValueError("diameter of an empty set")
    if n == 1:
        return 0.0
    if ps.is_1d:
        x = ps.coords[:, 0]
        return float(np.abs(np.max(x) - np.min(x)))
    if ps.metric.kind in (EUCLIDEAN, GREAT_CIRCLE):
        return _gram_diameter(ps)
    return float(max(np.max(d) for _, _, d in iter_pair_blocks(ps) if len(d)))


def _gram_diameter(ps: PointSet) -> float:
    # Candidate pairs come from a Gram-matrix scan (BLAS); the exact metric is
    # then evaluated on the few pairs near the maximum.
    x = ps.coords
    sq = np.einsum("ij,ij->i", x, x)
    scale = float(np.max(sq)) + 1.0
    tol = 1e-9 * scale
    best = -np.inf
    blocks = []
    for a in range(0, len(x), 1024):
        g = sq[a:a + 1024, None] + sq[None, :] - 2.0 * (x[a:a + 1024] @ x.T)
        m = float(np.max(g))
        if m >= best - tol:
            blocks.append((a, g, m))
            best = max(best, m)
    result = 0.0
    for a, g, m in blocks:
        if m < best - tol:
            continue
        ii, jj = np.nonzero(g >= best - tol)
        d = ps.metric.rowwise(x[ii + a], x[jj])
        result = max(result, float(np.max(d)))
    return result


def quasi_uniformity(fill: float, separation: float) -> float:
    """Ratio fill distance / separation distance."""
    if separation <= 0:
        return math.inf
    return fill / separation


# --- CSV input/output -------------------------------------------------------

def _is_number(s: str) -> bool:
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False


def read_csv_rows(path) -> tuple[list[list[float]], int]:
    """Numeric rows of a CSV file; returns ``(rows, skipped)``.

    A non-numeric first row is treated as a header and not counted as
    skipped.  Lines starting with ``#`` are comments.
    """
    rows: list[list[float]] = []
    skipped = 0
    first = True
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
                continue
            if all(_is_number(c) for c in cells):
                rows.append([float(c) for c in cells])
            elif not first:
                skipped += 1
            first = False
    return rows, skipped


def load_points(path, metric: Metric | str = EUCLIDEAN) -> PointSet:
    rows, skipped = read_csv_rows(path)
    if skipped:
        raise ValueError(f"{path}: {skipped} non-numeric rows")
    if not rows:
        raise ValueError(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: rows have differing numbers of columns")
    if isinstance(metric, str):
        metric = Metric.from_name(metric)
    return PointSet(np.array(rows), metric)


def save_points(path, ps: PointSet | np.ndarray, header: Optional[list[str]] = None):
    coords = ps.coords if isinstance(ps, PointSet) else _as_coords(ps)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is None:
            header = [f"x{c}" for c in range(coords.shape[1])]
        w.writerow(header)
        for row in coords:
            w.writerow([repr(float(v)) for v in row])
