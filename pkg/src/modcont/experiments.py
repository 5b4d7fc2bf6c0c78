"""Experiment drivers behind the CLI: dataset generation, modulus curves,
consistency studies, interpolation errors and multilevel Monte Carlo rates.

Every driver returns ``(header, rows)``; the CLI handles files.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from . import datagen
from .covering import greedy_cover
from .interpolation import cell_diameters, interpolate, interpolation_error, tree_partition
from .metric import LabeledDataset, PointSet, Metric, diameter
from .mlmc import LevelStructure, hoelder_schedule, mlmc_mean
from .modulus import analytic_modulus, modulus_at, modulus_full
from .sketch import build_sketch, eval_sketch_many
from .tree import build_tree, range_pairs


def run_replicas(fn: Callable[[int], object], replicas: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(replicas - 1)]`` in order, optionally on a thread pool."""
    if threads <= 1:
        return [fn(k) for k in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicas)))


def graded_grid(count: int, t_max: float, t_min: float = 0.0) -> np.ndarray:
    """``count`` points ``t_min + (k/(count-1))^2 (t_max - t_min)``."""
    if count < 2:
        raise ValueError("grid needs at least two points")
    s = np.arange(count) / (count - 1)
    return t_min + s * s * (t_max - t_min)


def fitted_slope(n, err) -> float:
    """Least-squares slope of ``log err`` against ``log n``."""
    n = np.asarray(n, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = (n > 0) & (err > 0)
    return float(np.polyfit(np.log(n[keep]), np.log(err[keep]), 1)[0])


def exact_modulus_curve(ds: LabeledDataset, ts: np.ndarray, tree=None) -> np.ndarray:
    """Exact modulus on a grid: pointwise for 1-D data, one staircase otherwise."""
    if ds.sites.is_1d and ds.real_values:
        return np.array([modulus_at(ds, t) for t in ts])
    tmax = float(np.max(ts))
    if tree is None:
        tree = build_tree(ds.sites)
    step = modulus_full(ds, range_pairs(tree, ds.sites, tmax))
    return step(ts)


# --- datasets -------------------------------------------------------------------------

def make_dataset(kind: str, n: int, seed, x0_index: int = 0) -> LabeledDataset:
    """Named synthetic datasets used by the CLI."""
    if kind == "wiener":
        t = datagen.uniform_times(n, [int(seed), 0])
        return LabeledDataset.from_arrays(t, datagen.sample_wiener(t, [int(seed), 1]),
                                          "absolute", "absolute")
    if kind == "wiener-grid":
        t = np.arange(1, n + 1) / n
        return LabeledDataset.from_arrays(t, datagen.sample_wiener(t, [int(seed), 1]),
                                          "absolute", "absolute")
    if kind == "sqrt-grid":
        return datagen.sqrt_dataset(np.linspace(0.0, 1.0, n))
    if kind == "nonholder-sphere":
        ps = datagen.fibonacci_lattice(n)
        return datagen.nonhoelder_sphere(ps, ps.coords[x0_index])
    if kind == "sphere-field":
        ps = datagen.fibonacci_lattice(n)
        spec = datagen.GaussianFieldSpec(ps)
        return LabeledDataset(ps, PointSet(datagen.sample_sphere_field(spec, seed),
                                           Metric.absolute()))
    if kind == "timeseries":
        return datagen.synthetic_timeseries(n, seed)
    if kind == "toy-f":
        return LabeledDataset.from_arrays(np.arange(1, 7.0), [1, 3, 2, 5, 4, 6],
                                          "absolute", "absolute")
    if kind == "toy-g":
        return LabeledDataset.from_arrays(np.arange(1, 7.0), [3, 2, 3, 3, 4, 3],
                                          "absolute", "absolute")
    raise ValueError(f"unknown dataset generator {kind!r}")


# --- modulus curves ---------------------------------------------------------------------

def modulus_curve(ds: LabeledDataset, ts, mode: str = "exact", r=None, R=None, T=None,
                  inject_extremal: bool = False, leaf_max: int = 32):
    ts = np.asarray(ts, dtype=float)
    if mode == "exact":
        vals = exact_modulus_curve(ds, ts)
    elif mode == "fast":
        sk = build_sketch(ds, r, R, T, inject_extremal, leaf_max)
        vals = eval_sketch_many(sk, ds, ts)
    else:
        raise ValueError(f"unknown modulus mode {mode!r}")
    return ["t", "value"], [(float(t), float(v)) for t, v in zip(ts, vals)]


def cover_rows(ps: PointSet, radius: float, leaf_max: int = 32):
    cov = greedy_cover(ps, radius, build_tree(ps, leaf_max) if ps.metric.has_embedding else None)
    return ["center_index", "step"], [(int(c), s) for s, c in enumerate(cov.center_indices)]


# --- consistency --------------------------------------------------------------------------

def target_function(name: str) -> Callable:
    if name == "sqrt-1d":
        return np.sqrt
    if name == "log-1d":
        return lambda x: datagen.log_dataset(x).values.coords[:, 0]
    raise ValueError(f"unknown consistency target {name!r}")


def l2_error(step_values: np.ndarray, exact: np.ndarray, ts: np.ndarray) -> float:
    return math.sqrt(float(np.trapezoid((step_values - exact) ** 2, ts)))


def consistency_error(target: str, sites: np.ndarray, ts: np.ndarray,
                      exact: np.ndarray) -> float:
    """L2 distance between the discrete modulus of ``target`` at ``sites`` and
    its analytic modulus, on the quadrature grid ``ts``."""
    f = target_function(target)
    ds = LabeledDataset.from_arrays(sites, f(sites), "absolute", "absolute")
    if len(ds) < 2:
        vals = np.zeros_like(ts)
    else:
        vals = modulus_full(ds)(ts)
    return l2_error(vals, exact, ts)


def consistency(target: str, scheme: str, n_values, replicas: int = 10, seed=0,
                quad_points: int = 10_000, quad_max: float = 1.0, threads: int = 1):
    """Per-N L2 error of the discrete modulus against the analytic one."""
    ts = graded_grid(quad_points, quad_max)
    exact = analytic_modulus(target, ts)
    rows = []
    for n in n_values:
        n = int(n)
        if scheme == "uniform":
            errs = [consistency_error(target, np.linspace(0.0, 1.0, n), ts, exact)]
        elif scheme == "iid-uniform":
            def one(k, n=n):
                x = datagen.uniform_times(n, [int(seed), n, k])
                return consistency_error(target, x, ts, exact)
            errs = run_replicas(one, replicas, threads)
        else:
            raise ValueError(f"unknown site scheme {scheme!r}")
        sd = float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0
        rows.append((n, float(np.mean(errs)), sd))
    return ["N", "mean_error", "std_error"], rows


# --- interpolation -------------------------------------------------------------------------

def interpolation_study(ds: LabeledDataset, replicas: int = 10, seed=0, leaf_max: int = 32,
                        r: Optional[float] = None, R: float = 2.0, threads: int = 1,
                        exact: bool = True):
    """Per tree level: exact mesh size, mean/std of the max interpolation error
    over random anchors, sketch modulus at h and (optionally) the exact one."""
    tree = build_tree(ds.sites, leaf_max)
    levels = range(tree.depth + 1)
    parts0 = [tree_partition(tree, j, rng_seed=0) for j in levels]
    hs = [float(np.max(cell_diameters(ds.sites, p))) for p in parts0]

    def one(k):
        errs = []
        for j in levels:
            part = tree_partition(tree, j, rng_seed=[int(seed), k])
            errs.append(interpolation_error(ds, interpolate(ds, part)))
        return errs

    errs = np.array(run_replicas(one, replicas, threads))
    diam = diameter(ds.sites)
    hpos = [h for h in hs if h > 0]
    r0 = r if r is not None else (min(hpos) if hpos else diam)
    if diam > 0:
        sk = build_sketch(ds, min(r0, diam), R, diam, leaf_max=leaf_max)
        sketch_vals = eval_sketch_many(sk, ds, np.minimum(hs, diam))
    else:
        sketch_vals = np.zeros(len(hs))
    exact_vals = exact_modulus_curve(ds, np.array(hs), tree) if exact else np.full(len(hs), np.nan)
    rows = []
    for j in levels:
        sd = float(np.std(errs[:, j], ddof=1)) if replicas > 1 else 0.0
        rows.append((j, hs[j], float(np.mean(errs[:, j])), sd, float(np.max(errs[:, j])),
                     float(sketch_vals[j]), float(exact_vals[j])))
    header = ["level", "h", "mean_error", "std_error", "max_error", "modulus_sketch",
              "modulus_exact"]
    return header, rows


# --- multilevel Monte Carlo ----------------------------------------------------------------

def mlmc_setup(field: str, n: int, seed):
    """Sites, sampler, tree, cost dimension and exact mean for an MLMC study."""
    if field == "wiener":
        t = datagen.uniform_times(n, [int(seed), n])
        ps = PointSet(t, Metric.absolute())
        return ps, datagen.WienerSampler(t), 1, np.zeros(n)
    if field == "sphere":
        ps = datagen.fibonacci_lattice(n)
        return ps, datagen.GaussianFieldSampler(ps), 2, np.zeros(n)
    if field == "deterministic":
        t = np.linspace(0.0, 1.0, n)
        vals = np.sqrt(t)
        return PointSet(t, Metric.absolute()), datagen.DeterministicSampler(vals), 1, vals
    raise ValueError(f"unknown random field {field!r}")


def mlmc_study(field: str, n_values, replicas: int = 10, seed=0, alpha: float = 0.5,
               c_uni: float = 1.0, q0_scale: float = 1.0, leaf_max: int = 1,
               J: Optional[int] = None, threads: int = 1):
    """Per N: mean and std over replicas of ``max |E_ML - E[Y]|``."""
    rows = []
    for n in n_values:
        n = int(n)
        ps, sampler, dim, mean = mlmc_setup(field, n, seed)
        tree = build_tree(ps, leaf_max)
        jj = tree.depth if J is None else min(int(J), tree.depth)
        sched = hoelder_schedule(jj, alpha, c_uni, max(1, int(round(q0_scale * n))), dim)
        levels = LevelStructure.build(tree, jj, [int(seed), n, 1 << 20])

        def one(k):
            est = mlmc_mean(sampler, tree, sched, seed=[int(seed), n],
                            replica=k, levels=levels)
            return float(np.max(np.abs(est.values - mean)))

        errs = run_replicas(one, replicas, threads)
        sd = float(np.std(errs, ddof=1)) if replicas > 1 else 0.0
        rows.append((n, jj, sum(sched.Q), float(np.mean(errs)), sd))
    return ["N", "J", "total_samples", "mean_error", "std_error"], rows
