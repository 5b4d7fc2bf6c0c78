"""Synthetic data generators, random-field samplers and time-series ingestion.

All randomness flows through ``numpy.random.Generator`` (PCG64), seeded
explicitly, so every generator is deterministic given its seed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .metric import (GREAT_CIRCLE, LabeledDataset, Metric, PointSet, UNIT_NORM_TOL,
                     read_csv_rows)

log = logging.getLogger(__name__)

DENSE_FACTOR_CAP = 4096
JITTER_START = 1e-14
JITTER_MAX = 1e-10


def make_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- point families ------------------------------------------------------------

def fibonacci_lattice(n: int) -> PointSet:
    """Golden-angle spiral of ``n`` points on the unit sphere."""
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    rad = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.column_stack((rad * np.cos(phi), rad * np.sin(phi), z))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return PointSet(pts, Metric.great_circle())


def uniform_grid(n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, n)


def uniform_times(n: int, seed, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Sorted iid uniform points on ``(lo, hi)``."""
    rng = make_rng(seed)
    return np.sort(rng.uniform(lo, hi, n))


# --- Wiener process ---------------------------------------------------------------

def _check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=float).ravel()
    if len(t) == 0:
        raise ValueError("need at least one time point")
    if t[0] <= 0 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be positive and strictly increasing")
    return t


def sample_wiener(times, seed, size: Optional[int] = None) -> np.ndarray:
    """Exact Wiener path values at ``times`` (shape ``(size, n)`` if size given)."""
    t = _check_times(times)
    rng = make_rng(seed)
    gaps = np.diff(t, prepend=0.0)
    shape = (len(t),) if size is None else (size, len(t))
    z = rng.standard_normal(shape)
    return np.cumsum(np.sqrt(gaps) * z, axis=-1)


# --- Gaussian fields on the sphere ----------------------------------------------------

def _jittered_cholesky(k: np.ndarray):
    """Cholesky factor with escalating diagonal jitter; returns ``(L, jitter)``."""
    scale = float(np.mean(np.diag(k)))
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(k + jitter * scale * np.eye(len(k))), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise np.linalg.LinAlgError(
                    f"covariance not factorizable with jitter up to {JITTER_MAX:g} "
                    f"x mean diagonal") from None


@dataclass(eq=False)
class GaussianFieldSpec:
    """Centered Gaussian field on a finite site set with a dense Cholesky factor."""

    sites: PointSet
    kind: str = "sphere-exponential"
    factor: np.ndarray = field(init=False, repr=False)
    jitter: float = field(init=False, default=0.0)

    def __post_init__(self):
        if len(self.sites) > DENSE_FACTOR_CAP:
            raise ValueError(f"dense factorization capped at {DENSE_FACTOR_CAP} sites")
        k = self.covariance()
        self.factor, self.jitter = _jittered_cholesky(k)
        if self.jitter:
            log.info("covariance factorized with jitter %g x mean diagonal", self.jitter)

    def covariance(self) -> np.ndarray:
        x = self.sites.coords
        if self.kind == "sphere-exponential":
            if self.sites.metric.kind != GREAT_CIRCLE:
                raise ValueError("sphere-exponential kernel needs great-circle sites")
            return np.exp(-4.0 * self.sites.metric.pairwise(x, x))
        if self.kind == "wiener":
            t = x[:, 0]
            return np.minimum(t[:, None], t[None, :])
        raise ValueError(f"unknown covariance kind {self.kind!r}")


def sample_sphere_field(spec: GaussianFieldSpec, seed, size: Optional[int] = None) -> np.ndarray:
    """Draws ``L z`` with ``z`` standard normal."""
    rng = make_rng(seed)
    n = len(spec.sites)
    z = rng.standard_normal((n,) if size is None else (size, n))
    return z @ spec.factor.T


# --- analytic test functions ------------------------------------------------------------

def nonhoelder_sphere(ps: PointSet, x0) -> LabeledDataset:
    """Continuous but not Hoelder function ``|log(d(x, x0)/pi) - 2|^-1``, zero at x0."""
    x0 = np.asarray(x0, dtype=float)
    if abs(np.linalg.norm(x0) - 1.0) > UNIT_NORM_TOL:
        raise ValueError("x0 must have unit norm")
    d = Metric.great_circle().pairwise(x0[None, :], ps.coords)[0]
    with np.errstate(divide="ignore"):
        v = 1.0 / np.abs(np.log(np.where(d > 0, d, 1.0) / math.pi) - 2.0)
    v = np.where(d > 0, v, 0.0)
    return LabeledDataset(ps, PointSet(v, Metric.absolute()))


def sqrt_dataset(x) -> LabeledDataset:
    x = np.asarray(x, dtype=float)
    return LabeledDataset.from_arrays(x, np.sqrt(x), "absolute", "absolute")


def log_dataset(x) -> LabeledDataset:
    """``|log t - 2|^-1`` on ``(0, 1]`` (value 0 at t = 0)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        v = np.where(x > 0, 1.0 / np.abs(np.log(np.where(x > 0, x, 1.0)) - 2.0), 0.0)
    return LabeledDataset.from_arrays(x, v, "absolute", "absolute")


# --- time series ----------------------------------------------------------------------------

def load_timeseries(path) -> LabeledDataset:
    """Two-column CSV ``(time, value)``; non-numeric rows are skipped and counted."""
    rows, skipped = read_csv_rows(path)
    rows = [r for r in rows if len(r) >= 2]
    if skipped:
        log.warning("%s: skipped %d non-numeric rows", path, skipped)
    if not rows:
        raise ValueError(f"{path}: no valid (time, value) rows")
    arr = np.array([r[:2] for r in rows], dtype=float)
    return LabeledDataset.from_arrays(arr[:, 0], arr[:, 1], "absolute", "absolute")


# --- samplers for the Monte Carlo estimators --------------------------------------------------
# A sampler draws ``size`` independent realizations restricted to the requested
# site indices: ``sample(sites, size, rng) -> array (size, len(sites))``.

@dataclass(eq=False)
class WienerSampler:
    times: np.ndarray

    def __post_init__(self):
        self.times = _check_times(self.times)

    def __len__(self):
        return len(self.times)

    def sample(self, sites, size, rng):
        sites = np.asarray(sites, dtype=np.intp)
        order = np.argsort(self.times[sites], kind="stable")
        vals = sample_wiener(self.times[sites][order], rng, size)
        out = np.empty_like(vals)
        out[:, order] = vals
        return out


@dataclass(eq=False)
class GaussianFieldSampler:
    """Exact sampler of the sphere field at any site subset.

    Sub-covariance factors are cached per subset (the nested anchor sets of a
    tree are reused across replicas).
    """

    sites: PointSet
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.sites)

    def sample(self, sites, size, rng):
        sites = np.asarray(sites, dtype=np.intp)
        key = sites.tobytes()
        if key not in self._cache:
            self._cache[key] = GaussianFieldSpec(self.sites.subset(sites)).factor
        z = rng.standard_normal((size, len(sites)))
        return z @ self._cache[key].T


@dataclass(eq=False)
class CoinSampler:
    """Independent fair +-1 per site."""

    n: int

    def __len__(self):
        return self.n

    def sample(self, sites, size, rng):
        return rng.choice(np.array([-1.0, 1.0]), size=(size, len(sites)))


@dataclass(eq=False)
class DeterministicSampler:
    """Zero-variance field: every draw returns the same values."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)

    def sample(self, sites, size, rng):
        return np.broadcast_to(self.values[np.asarray(sites, dtype=np.intp)],
                               (size, len(sites))).copy()


def synthetic_timeseries(n: int, seed, step: float = 10.0, drop: float = 10.0) -> LabeledDataset:
    """Temperature-like series sampled every ``step`` time units.

    Daily cycle plus AR(1) noise, with one sudden drop of ``drop`` between two
    consecutive samples halfway through the record.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    rng = make_rng(seed)
    t = np.arange(n) * step
    day = 1440.0
    noise = np.empty(n)
    noise[0] = 0.0
    eps = rng.normal(0.0, 0.05, n)
    for i in range(1, n):
        noise[i] = 0.98 * noise[i - 1] + eps[i]
    v = 12.0 + 5.0 * np.sin(2.0 * math.pi * t / day) + noise
    v[n // 2:] -= drop
    return LabeledDataset.from_arrays(t, v, "absolute", "absolute")


def save_timeseries(path, ds: LabeledDataset, comment: Optional[str] = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        for t, v in zip(ds.sites.coords[:, 0], ds.values.coords[:, 0]):
            w.writerow([repr(float(t)), repr(float(v))])
