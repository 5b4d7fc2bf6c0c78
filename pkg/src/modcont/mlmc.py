"""Monte Carlo, multilevel (mean) and multiindex (correlation) estimators
over nested cluster-tree partitions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .interpolation import tree_anchors
from .tree import ClusterTree

# Upper bound on the number of sample values drawn in one call to a sampler.
SAMPLE_CHUNK = 1 << 21


@dataclass(frozen=True)
class SampleSchedule:
    """Per-level sample counts ``Q[j]`` for levels ``j = 0..J`` (coarsest first)."""

    Q: tuple

    def __post_init__(self):
        q = tuple(int(v) for v in self.Q)
        if not q:
            raise ValueError("schedule needs at least one level")
        if any(v < 1 for v in q):
            raise ValueError("sample counts must be positive")
        if any(b > a for a, b in zip(q, q[1:])):
            raise ValueError("sample counts must be nonincreasing")
        object.__setattr__(self, "Q", q)

    @property
    def J(self) -> int:
        return len(self.Q) - 1

    @classmethod
    def constant(cls, J: int, q: int) -> "SampleSchedule":
        return cls((q,) * (J + 1))


def hoelder_factor(alpha: float, c_uni: float = 1.0, dim: int = 1) -> float:
    """Per-level sample ratio balancing variance decay against cost growth."""
    return 2.0 ** (-(alpha * c_uni + dim) / 2.0)


def hoelder_schedule(J: int, alpha: float, c_uni: float, Q0: int, dim: int = 1) -> SampleSchedule:
    """``Q_l = max(1, round(Q0 * factor**l))``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if Q0 < 1 or J < 0:
        raise ValueError("need Q0 >= 1 and J >= 0")
    f = hoelder_factor(alpha, c_uni, dim)
    return SampleSchedule(tuple(max(1, int(round(Q0 * f ** l))) for l in range(J + 1)))


def _level_scale(rho: Callable, c_diam: float, c_uni: float, j: int) -> float:
    return float(rho(c_diam * 2.0 ** (-c_uni * j)))


def convergence_factor_ml(J: int, rho: Callable, Q: SampleSchedule,
                          c_diam: float = 1.0, c_uni: float = 1.0) -> float:
    """Multilevel convergence factor; ``Q.Q[j]`` samples are used at level ``j``."""
    if Q.J != J:
        raise ValueError("schedule length does not match J")
    s = _level_scale(rho, c_diam, c_uni, J)
    for j in range(J + 1):
        s += 2.0 * _level_scale(rho, c_diam, c_uni, j - 1) / math.sqrt(Q.Q[j])
    return s


def convergence_factor_mi(J: int, rho: Callable, Q: SampleSchedule,
                          c_diam: float = 1.0, c_uni: float = 1.0) -> float:
    """Multiindex convergence factor for the correlation estimator."""
    if Q.J != J:
        raise ValueError("schedule length does not match J")
    s = 2.0 * _level_scale(rho, c_diam, c_uni, J)
    for j in range(J + 1):
        inner = sum(_level_scale(rho, c_diam, c_uni, k - 1)
                    * _level_scale(rho, c_diam, c_uni, j - k - 1) for k in range(j + 1))
        s += 4.0 * inner / math.sqrt(Q.Q[j])
    return s


# --- estimator results ------------------------------------------------------------

@dataclass(eq=False)
class EstimatorResult:
    """Mean estimate (``values``) or correlation estimate (``entry``)."""

    kind: str
    samples_per_level: tuple
    values: Optional[np.ndarray] = None
    # correlation storage: cell_of[k] maps sites to level-k cells and
    # details[j][k] is the (Q_j, cells_k) matrix of level-k details
    cell_of: list = field(default_factory=list, repr=False)
    details: list = field(default_factory=list, repr=False)

    def _terms(self, j: int, s: int, t: int) -> np.ndarray:
        """Per-sample contribution of index sum ``j`` to entry ``(s, t)``."""
        d = self.details[j]
        acc = np.zeros(d[0].shape[0])
        for k in range(j // 2 + 1):
            a_s = d[k][:, self.cell_of[k][s]]
            b_t = d[j - k][:, self.cell_of[j - k][t]]
            if 2 * k == j:
                acc = acc + a_s * b_t
            else:
                a_t = d[k][:, self.cell_of[k][t]]
                b_s = d[j - k][:, self.cell_of[j - k][s]]
                acc = acc + (a_s * b_t + b_s * a_t)
        return acc

    def entry(self, s: int, t: int) -> float:
        if self.kind != "correlation":
            raise ValueError("entry() is only defined for correlation estimates")
        return float(sum(np.mean(self._terms(j, s, t)) for j in range(len(self.details))))

    def entry_stderr(self, s: int, t: int) -> float:
        """Monte Carlo standard error of :meth:`entry` from the per-level sample spread."""
        var = 0.0
        for j in range(len(self.details)):
            x = self._terms(j, s, t)
            if len(x) > 1:
                var += float(np.var(x, ddof=1)) / len(x)
        return math.sqrt(var)

    def entries(self, pairs) -> np.ndarray:
        return np.array([self.entry(int(s), int(t)) for s, t in pairs])

    def to_csv(self, path, pairs=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.kind == "mean":
                w.writerow(["site_index", "value"])
                for i, v in enumerate(self.values):
                    w.writerow([i, repr(float(v))])
            else:
                w.writerow(["i", "j", "value"])
                for s, t in pairs:
                    w.writerow([int(s), int(t), repr(self.entry(int(s), int(t)))])


# --- estimators ---------------------------------------------------------------------

def level_rng(seed, level: int, replica: int = 0) -> np.random.Generator:
    """Stream for one (level, replica); independent of execution order."""
    base = [int(v) for v in np.atleast_1d(seed)]
    return np.random.default_rng(base + [int(level), int(replica)])


def _anchor_seed(seed, replica: int) -> list:
    return [int(v) for v in np.atleast_1d(seed)] + [int(replica), 1 << 20]


def _sample_mean(sampler, sites: np.ndarray, q: int, rng) -> np.ndarray:
    """Mean of ``q`` draws at ``sites``, drawn in bounded chunks."""
    chunk = max(1, SAMPLE_CHUNK // max(1, len(sites)))
    total = np.zeros(len(sites))
    done = 0
    while done < q:
        m = min(chunk, q - done)
        total += sampler.sample(sites, m, rng).sum(axis=0)
        done += m
    return total / q


def mc_mean(sampler, Q: int, seed=0, sites=None) -> EstimatorResult:
    """Plain Monte Carlo mean of ``Q`` independent draws."""
    if Q < 1:
        raise ValueError("Q must be positive")
    if sites is None:
        sites = np.arange(len(sampler))
    vals = _sample_mean(sampler, np.asarray(sites, dtype=np.intp), Q, level_rng(seed, 0))
    return EstimatorResult("mean", (Q,), values=vals)


@dataclass(frozen=True, eq=False)
class LevelStructure:
    """Nested anchors of tree levels ``0..J``.

    ``anchor_sites[j]`` are the distinct anchor sites of level ``j`` (sorted),
    ``site_pos[j][i]`` is the position in ``anchor_sites[j]`` of the anchor
    representing site ``i``, and ``cell_of[j][i]`` the level-``j`` cell of ``i``.
    """

    anchor_sites: list
    site_pos: list
    cell_of: list
    cell_anchor_pos: list

    @classmethod
    def build(cls, tree: ClusterTree, J: int, anchor_seed) -> "LevelStructure":
        if J > tree.depth:
            raise ValueError(f"J = {J} exceeds the tree depth {tree.depth}")
        anchors = tree_anchors(tree, anchor_seed, nested=True)
        a_sites, pos, cells, cpos = [], [], [], []
        for j in range(J + 1):
            nodes = tree.level_nodes(j)
            node_anchor = anchors[nodes]
            uniq = np.unique(node_anchor)
            cell = np.empty(tree.n_points, dtype=np.intp)
            for c, v in enumerate(nodes):
                cell[tree.points_of(v)] = c
            p = np.searchsorted(uniq, node_anchor)
            a_sites.append(uniq)
            cells.append(cell)
            cpos.append(p)
            pos.append(p[cell])
        return cls(a_sites, pos, cells, cpos)

    @property
    def J(self) -> int:
        return len(self.anchor_sites) - 1

    def coarse_cols(self, j: int) -> np.ndarray:
        """Positions of the level ``j-1`` anchors among the level-``j`` anchors."""
        return np.searchsorted(self.anchor_sites[j], self.anchor_sites[j - 1])

    def interpolate(self, j: int, values: np.ndarray) -> np.ndarray:
        """Level-``j`` interpolant of full-site values."""
        return values[self.anchor_sites[j][self.site_pos[j]]]


def _detail_samples(levels: LevelStructure, j: int, y: np.ndarray, k_max: int):
    """Per-cell details of levels ``0..k_max`` from samples ``y`` at level-``j`` anchors.

    Returns a list of ``(Q, cells_k)`` matrices.
    """
    sites = levels.anchor_sites[j]
    out = []
    prev = None
    for k in range(k_max + 1):
        # values at level-k cell anchors, expressed through level-j anchor columns
        cols = np.searchsorted(sites, levels.anchor_sites[k][levels.cell_anchor_pos[k]])
        cur = y[:, cols]
        if k == 0:
            out.append(cur)
        else:
            # parent cell of each level-k cell: take any member site
            rep = _cell_representatives(levels, k)
            parent_cells = levels.cell_of[k - 1][rep]
            out.append(cur - prev[:, parent_cells])
        prev = cur
    return out


def _cell_representatives(levels: LevelStructure, k: int) -> np.ndarray:
    cell = levels.cell_of[k]
    rep = np.empty(cell.max() + 1, dtype=np.intp)
    rep[cell[::-1]] = np.arange(len(cell))[::-1]
    return rep


def mlmc_mean(sampler, tree: ClusterTree, schedule: SampleSchedule, seed=0,
              replica: int = 0, reuse_samples: bool = False,
              levels: Optional[LevelStructure] = None) -> EstimatorResult:
    """Telescoping multilevel estimate of the mean field on all sites.

    Level ``j`` averages ``schedule.Q[j]`` fresh draws of the detail
    ``I_j Y - I_{j-1} Y``, sampled only at the level-``j`` anchors.  With
    ``reuse_samples`` the same ``Q[0]`` draws serve every level (test mode;
    the sum then telescopes to the level-``J`` interpolant of their mean).
    """
    J = schedule.J
    if levels is None:
        levels = LevelStructure.build(tree, J, _anchor_seed(seed, replica))
    elif levels.J < J:
        raise ValueError("level structure shallower than the schedule")
    n = tree.n_points
    total = np.zeros(n)
    shared = None
    if reuse_samples:
        fine = levels.anchor_sites[J]
        shared = _sample_mean(sampler, fine, schedule.Q[0], level_rng(seed, 0, replica))
    for j in range(J + 1):
        sites = levels.anchor_sites[j]
        if shared is None:
            m = _sample_mean(sampler, sites, schedule.Q[j], level_rng(seed, j, replica))
        else:
            m = shared[np.searchsorted(levels.anchor_sites[J], sites)]
        # both interpolants of the detail use the same draws
        total += m[levels.site_pos[j]]
        if j > 0:
            total -= m[levels.coarse_cols(j)][levels.site_pos[j - 1]]
    q = (schedule.Q[0],) * (J + 1) if reuse_samples else schedule.Q
    return EstimatorResult("mean", q, values=total)


def mimc_correlation(sampler, tree: ClusterTree, schedule: SampleSchedule, seed=0,
                     replica: int = 0,
                     levels: Optional[LevelStructure] = None) -> EstimatorResult:
    """Sparse tensor-product estimate of ``E[Y(s) Y(t)]``.

    Index sum ``j`` uses ``Q[j]`` fresh draws at the level-``j`` anchors and
    keeps the per-cell details of levels ``0..j``; entries are formed on
    demand and the full ``N x N`` matrix is never stored.
    """
    J = schedule.J
    if levels is None:
        levels = LevelStructure.build(tree, J, _anchor_seed(seed, replica))
    details = []
    for j in range(J + 1):
        sites = levels.anchor_sites[j]
        y = sampler.sample(sites, schedule.Q[j], level_rng(seed, j, replica))
        details.append(_detail_samples(levels, j, y, j))
    return EstimatorResult("correlation", schedule.Q, cell_of=levels.cell_of[:J + 1],
                           details=details)
