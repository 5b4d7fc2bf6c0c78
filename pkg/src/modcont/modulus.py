"""Exact discrete modulus of continuity, step functions and seminorms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .metric import LabeledDataset, iter_pair_blocks


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous nondecreasing step function on ``[0, inf)``.

    Zero before the first breakpoint.  Only the points where the value
    strictly increases are stored.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if b.shape != v.shape:
            raise ValueError("breakpoints and values differ in length")
        if len(b) and (np.any(np.diff(b) <= 0) or b[0] < 0):
            raise ValueError("breakpoints must be nonnegative and strictly increasing")
        if len(v) and (np.any(np.diff(v) < 0) or v[0] < 0):
            raise ValueError("values must be nonnegative and nondecreasing")
        b.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls) -> "StepFunction":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def from_pairs(cls, d: np.ndarray, v: np.ndarray) -> "StepFunction":
        """Running-max staircase of scattered ``(distance, value)`` pairs."""
        d = np.asarray(d, dtype=float).ravel()
        v = np.asarray(v, dtype=float).ravel()
        keep = v > 0
        d, v = d[keep], v[keep]
        if len(d) == 0:
            return cls.zero()
        order = np.lexsort((-v, d))
        d, v = d[order], v[order]
        run = np.maximum.accumulate(v)
        prev = np.concatenate(([0.0], run[:-1]))
        jump = run > prev
        return cls(d[jump], run[jump])

    def merge(self, d: np.ndarray, v: np.ndarray) -> "StepFunction":
        return StepFunction.from_pairs(np.concatenate((self.breakpoints, d)),
                                       np.concatenate((self.values, v)))

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t_arr, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)]
                       if len(self.values) else 0.0, 0.0)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def sup(self) -> float:
        return float(self.values[-1]) if len(self.values) else 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["breakpoint", "value"])
            for b, v in zip(self.breakpoints, self.values):
                w.writerow([repr(float(b)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "StepFunction":
        b, v = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "breakpoint":
                    continue
                b.append(float(row[0]))
                v.append(float(row[1]))
        return cls(np.array(b), np.array(v))


# --- rho classes -------------------------------------------------------------

@dataclass(frozen=True)
class RhoClass:
    """Nonnegative nondecreasing gauge ``rho`` for the seminorm."""

    kind: str
    alpha: float = 1.0
    table_t: tuple = ()
    table_v: tuple = ()

    @classmethod
    def power(cls, alpha: float) -> "RhoClass":
        if not 0 < alpha <= 1:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        return cls("power", alpha=alpha)

    @classmethod
    def log_sphere(cls) -> "RhoClass":
        return cls("log")

    @classmethod
    def table(cls, t, v) -> "RhoClass":
        t = tuple(float(x) for x in t)
        v = tuple(float(x) for x in v)
        if len(t) != len(v) or not t:
            raise ValueError("table needs matching nonempty columns")
        if any(b <= a for a, b in zip(t, t[1:])) or any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("table must be increasing in t and nondecreasing in value")
        if v[0] < 0:
            raise ValueError("rho must be nonnegative")
        return cls("table", table_t=t, table_v=v)

    @classmethod
    def zero(cls) -> "RhoClass":
        return cls("zero")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            out = np.power(np.maximum(t, 0.0), self.alpha)
        elif self.kind == "log":
            out = analytic_modulus("log-sphere", t)
        elif self.kind == "table":
            out = np.interp(t, self.table_t, self.table_v)
        elif self.kind == "zero":
            out = np.zeros_like(t)
        else:
            raise ValueError(f"unknown rho class {self.kind!r}")
        return float(out) if out.ndim == 0 else out


# --- the discrete modulus ------------------------------------------------------

class _RangeExtrema:
    """Sparse tables for O(1) range min/max over a fixed array."""

    def __init__(self, y: np.ndarray):
        self.mx = [y]
        self.mn = [y]
        k = 1
        while 2 * k <= len(y):
            pmx, pmn = self.mx[-1], self.mn[-1]
            self.mx.append(np.maximum(pmx[:-k], pmx[k:]))
            self.mn.append(np.minimum(pmn[:-k], pmn[k:]))
            k *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray):
        """Extrema over the half-open windows ``[lo, hi)`` (nonempty)."""
        length = hi - lo
        lev = np.floor(np.log2(length)).astype(np.intp)
        # guard against log2 rounding at exact powers of two
        lev = np.where((1 << (lev + 1)) <= length, lev + 1, lev)
        lev = np.where((1 << lev) > length, lev - 1, lev)
        mx = np.empty(len(lo))
        mn = np.empty(len(lo))
        for k in np.unique(lev):
            sel = lev == k
            w = 1 << k
            a, b = lo[sel], hi[sel] - w
            mx[sel] = np.maximum(self.mx[k][a], self.mx[k][b])
            mn[sel] = np.minimum(self.mn[k][a], self.mn[k][b])
        return mn, mx


def _window_ends(x: np.ndarray, t: float) -> np.ndarray:
    """For sorted ``x``: ``end[i]`` = one past the last ``j`` with ``x[j]-x[i] <= t``.

    Uses the same rounded predicate ``|x_j - x_i| <= t`` as the pair scan.
    """
    n = len(x)
    end = np.searchsorted(x, x + t, side="right")
    idx = np.arange(n)
    end = np.maximum(end, idx + 1)
    while True:
        grow = end < n
        grow[grow] = np.abs(x[end[grow]] - x[grow]) <= t
        shrink = end - 1 > idx
        shrink[shrink] = np.abs(x[end[shrink] - 1] - x[shrink]) > t
        if not grow.any() and not shrink.any():
            return end
        end = end + grow - shrink


class _Sorted1D:
    def __init__(self, ds: LabeledDataset):
        x = ds.sites.coords[:, 0]
        self.order = np.argsort(x, kind="stable")
        self.x = x[self.order]
        self.y = ds.values.coords[self.order, 0]
        self.rmq = _RangeExtrema(self.y)

    def modulus(self, t: float) -> float:
        end = _window_ends(self.x, t)
        lo = np.arange(len(self.x))
        mn, mx = self.rmq.query(lo, end)
        return float(max(np.max(mx - self.y), np.max(self.y - mn)))


def _check_t(t: float) -> float:
    t = float(t)
    if not t >= 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return t


def modulus_at(ds: LabeledDataset, t: float, tree=None) -> float:
    """Largest value distance over site pairs at distance at most ``t``."""
    t = _check_t(t)
    if len(ds) < 2:
        return 0.0
    if ds.sites.is_1d and ds.real_values:
        return _Sorted1D(ds).modulus(t)
    if tree is not None:
        from .tree import range_pairs

        return pair_value_max(ds, range_pairs(tree, ds.sites, t))
    best = 0.0
    vm = ds.values.metric
    y = ds.values.coords
    for i, j, d in iter_pair_blocks(ds.sites):
        m = d <= t
        if m.any():
            best = max(best, float(np.max(vm.rowwise(y[i[m]], y[j[m]]))))
    return best


def pair_value_max(ds: LabeledDataset, pair_blocks) -> float:
    """Max value distance over an iterable of ``(i, j, d)`` pair blocks."""
    best = 0.0
    vm = ds.values.metric
    y = ds.values.coords
    for i, j, _ in pair_blocks:
        if len(i):
            best = max(best, float(np.max(vm.rowwise(y[i], y[j]))))
    return best


def modulus_full(ds: LabeledDataset, pair_blocks=None) -> StepFunction:
    """The complete step function ``t -> modulus_at(ds, t)``.

    Pairs are scanned blockwise; pairs already dominated by the staircase of
    earlier blocks are discarded before sorting.
    """
    if pair_blocks is None:
        pair_blocks = iter_pair_blocks(ds.sites)
    vm = ds.values.metric
    y = ds.values.coords
    step = StepFunction.zero()
    for i, j, d in pair_blocks:
        if not len(i):
            continue
        v = vm.rowwise(y[i], y[j])
        keep = v > step(d)
        if keep.any():
            step = step.merge(d[keep], v[keep])
    return step


def seminorm(ds: LabeledDataset, rho: Callable, step: Optional[StepFunction] = None) -> float:
    """Discrete rho-seminorm: max over realized distances of modulus / rho.

    Between two breakpoints the modulus is constant while ``rho`` does not
    decrease, so the maximum is attained at a breakpoint.
    """
    if len(ds) < 2:
        return 0.0
    if step is None:
        step = modulus_full(ds)
    from .metric import separation_distance

    q = separation_distance(ds.sites)
    if q > 0 and not rho(q) > 0:
        raise ValueError(f"rho vanishes at the realized distance {q}")
    best = 0.0
    for b, v in zip(step.breakpoints, step.values):
        if b <= 0:
            continue
        r = rho(b)
        if not r > 0:
            raise ValueError(f"rho vanishes at the realized distance {b}")
        best = max(best, v / r)
    return float(best)


# --- analytic reference moduli -------------------------------------------------

def analytic_modulus(name: str, t):
    """Closed-form moduli of the reference test functions."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    if name == "sqrt-1d":
        out = np.sqrt(np.minimum(t_arr, 1.0))
    elif name in ("log-sphere", "log-1d"):
        top = math.pi if name == "log-sphere" else 1.0
        with np.errstate(divide="ignore"):
            inner = 1.0 / np.abs(np.log(np.where(t_arr > 0, t_arr, 1.0) / top) - 2.0)
        out = np.where(t_arr <= 0, 0.0, np.where(t_arr >= top, 0.5, inner))
    elif name == "wiener-approx":
        if np.any((t_arr <= 0) | (t_arr >= 1)):
            raise ValueError("wiener-approx is defined for t in (0, 1)")
        out = np.sqrt(2.0 * t_arr * np.log(1.0 / t_arr))
    else:
        raise ValueError(f"unknown analytic modulus {name!r}")
    return float(out) if out.ndim == 0 else out
