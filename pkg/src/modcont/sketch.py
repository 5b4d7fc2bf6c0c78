"""Offline/online approximation of the discrete modulus by iterated coarsening."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covering import greedy_cover
from .metric import LabeledDataset
from .modulus import StepFunction, pair_value_max
from .tree import ClusterTree, _to_csr, build_tree, range_pairs


def level_count(r: float, growth: float, horizon: float) -> int:
    """Smallest ``K`` with ``r * growth**K >= horizon``."""
    k = 0
    while r * growth ** k < horizon:
        k += 1
    return k


def level_radius(r: float, growth: float, k: int) -> float:
    return r * growth ** k


@dataclass(eq=False)
class ModulusSketch:
    """Nested coarsened site sets with their precomputed level moduli.

    ``sites[k]`` (sorted original indices) is the site set of level ``k``
    for ``k = 0..K``; ``sites[K]`` is the final cover used only online.
    ``level_values[k]`` is the modulus of level ``k`` at radius ``r R^k``.
    """

    r: float
    R: float
    T: float
    K: int
    sites: list
    level_values: np.ndarray
    inject_extremal: bool
    n: int
    leaf_max: int = 32
    _trees: dict = field(default_factory=dict, repr=False)

    def radius(self, k: int) -> float:
        return level_radius(self.r, self.R, k)

    def tree(self, ds: LabeledDataset, k: int) -> ClusterTree:
        if k not in self._trees:
            self._trees[k] = build_tree(ds.sites.subset(self.sites[k]), self.leaf_max)
        return self._trees[k]

    def level_of(self, t: float) -> int:
        """Level ``k >= 1`` with ``t`` in ``(r R^(k-1), r R^k]``; 0 for ``t <= r``."""
        k = 0
        while t > self.radius(k):
            k += 1
        return k

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"r": self.r, "R": self.R, "T": self.T, "K": self.K,
                    "inject_extremal": self.inject_extremal, "n": self.n,
                    "leaf_max": self.leaf_max,
                    "levels": [f"level_{k:03d}.csv" for k in range(self.K + 1)]}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        for k, idx in enumerate(self.sites):
            value = self.level_values[k] if k < self.K else float("nan")
            with open(d / manifest["levels"][k], "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["site_index", "level_value"])
                for i in idx:
                    w.writerow([int(i), repr(float(value))])

    @classmethod
    def load(cls, directory) -> "ModulusSketch":
        d = Path(directory)
        m = json.loads((d / "manifest.json").read_text())
        sites, values = [], []
        for k, name in enumerate(m["levels"]):
            idx, val = [], float("nan")
            with open(d / name, newline="") as fh:
                for row in csv.reader(fh):
                    if row[0] == "site_index":
                        continue
                    idx.append(int(row[0]))
                    val = float(row[1])
            sites.append(np.array(idx, dtype=np.intp))
            if k < m["K"]:
                values.append(val)
        return cls(r=m["r"], R=m["R"], T=m["T"], K=m["K"], sites=sites,
                   level_values=np.array(values, dtype=float),
                   inject_extremal=m["inject_extremal"], n=m["n"],
                   leaf_max=m["leaf_max"])


def _extremal_pair(ds: LabeledDataset) -> np.ndarray:
    if not ds.real_values:
        raise ValueError("extremal-pair injection needs scalar values")
    y = ds.values.coords[:, 0]
    return np.array([int(np.argmin(y)), int(np.argmax(y))], dtype=np.intp)


def _level_pairs(ds: LabeledDataset, idx: np.ndarray, tree: ClusterTree, eps: float):
    """Pairs of the level subset (mapped back to original indices)."""
    sub = ds.sites.subset(idx)
    for i, j, d in range_pairs(tree, sub, eps):
        yield idx[i], idx[j], d


def build_sketch(ds: LabeledDataset, r: float, R: float, T: float,
                 inject_extremal: bool = False, leaf_max: int = 32) -> ModulusSketch:
    """Offline phase: level moduli at radii ``r R^k`` and nested greedy covers."""
    if not r > 0:
        raise ValueError("r must be positive")
    if not R > 1:
        raise ValueError("growth factor R must exceed 1")
    if r > T:
        raise ValueError("r must not exceed T")
    K = level_count(r, R, T)
    extremal = _extremal_pair(ds) if inject_extremal else None
    sk = ModulusSketch(r=float(r), R=float(R), T=float(T), K=K, sites=[],
                       level_values=np.zeros(0), inject_extremal=inject_extremal,
                       n=len(ds), leaf_max=leaf_max)
    current = np.arange(len(ds))
    values = []
    for k in range(K + 1):
        if extremal is not None:
            current = np.union1d(current, extremal)
        sk.sites.append(current)
        if k == K:
            break
        eps = sk.radius(k)
        tree = sk.tree(ds, k)
        sub = ds.sites.subset(current)
        ii, jj = [], []
        best = 0.0
        for i, j, _ in range_pairs(tree, sub, eps):
            ii.append(i)
            jj.append(j)
            if len(i):
                best = max(best, float(np.max(ds.values.metric.rowwise(
                    ds.values.coords[current[i]], ds.values.coords[current[j]]))))
        values.append(best)
        m = len(current)
        i = np.concatenate(ii + [np.arange(m)]) if ii else np.arange(m)
        j = np.concatenate(jj + [np.arange(m)]) if jj else np.arange(m)
        half = len(i) - m
        balls = _to_csr(np.concatenate((i, j[:half])), np.concatenate((j, i[:half])), m)
        cover = greedy_cover(sub, eps, balls=balls)
        current = np.sort(current[cover.center_indices])
    sk.level_values = np.array(values, dtype=float)
    return sk


def _check_query(sk: ModulusSketch, t: float):
    if not t >= 0:
        raise ValueError("t must be nonnegative")
    if t > sk.T:
        raise ValueError(f"t = {t} exceeds the sketch horizon T = {sk.T}")


def eval_sketch(sk: ModulusSketch, ds: LabeledDataset, t: float) -> float:
    """Online phase: exact for ``t <= r``, coarse-level estimate beyond."""
    t = float(t)
    _check_query(sk, t)
    k = sk.level_of(t)
    idx = sk.sites[k]
    local = pair_value_max(ds, _level_pairs(ds, idx, sk.tree(ds, k), t))
    if k == 0:
        return local
    return max(local, float(np.max(sk.level_values[:k])))


def eval_sketch_many(sk: ModulusSketch, ds: LabeledDataset, ts) -> np.ndarray:
    """Vectorized online phase: one range search per level, at the largest query."""
    ts = np.asarray(ts, dtype=float)
    for t in ts:
        _check_query(sk, t)
    levels = np.array([sk.level_of(t) for t in ts], dtype=int)
    out = np.empty(len(ts))
    for k in np.unique(levels):
        sel = levels == k
        tmax = float(ts[sel].max())
        idx = sk.sites[k]
        vm = ds.values.metric
        y = ds.values.coords
        step = StepFunction.zero()
        for i, j, d in _level_pairs(ds, idx, sk.tree(ds, k), tmax):
            if len(i):
                v = vm.rowwise(y[i], y[j])
                keep = v > step(d)
                if keep.any():
                    step = step.merge(d[keep], v[keep])
        vals = step(ts[sel])
        if k > 0:
            vals = np.maximum(vals, float(np.max(sk.level_values[:k])))
        out[sel] = vals
    return out
