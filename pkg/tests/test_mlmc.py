"""Tests for the Monte Carlo, multilevel and multiindex estimators."""

import math

import numpy as np
import pytest

from modcont.datagen import CoinSampler, DeterministicSampler, WienerSampler
from modcont.metric import Metric, PointSet
from modcont.mlmc import (LevelStructure, SampleSchedule, convergence_factor_mi,
                          convergence_factor_ml, hoelder_factor, hoelder_schedule, mc_mean,
                          mimc_correlation, mlmc_mean)
from modcont.tree import build_tree


def identity(t):
    return t


def wiener_setup(n, seed=0, leaf_max=1):
    times = np.sort(np.random.default_rng(seed).random(n))
    return times, build_tree(PointSet(times, Metric.absolute()), leaf_max)


def anchor_of(levels, k, s):
    return int(levels.anchor_sites[k][levels.site_pos[k][s]])


def sparse_expectation(levels, times, J, s, t):
    """Exact expectation of the sparse estimator for covariance min(s, t)."""
    def cov(a, b):
        return min(times[a], times[b])

    def detail(k, x):
        a = anchor_of(levels, k, x)
        if k == 0:
            return [(a, 1.0)]
        return [(a, 1.0), (anchor_of(levels, k - 1, x), -1.0)]

    total = 0.0
    for k in range(J + 1):
        for kk in range(J + 1 - k):
            for a, ca in detail(k, s):
                for b, cb in detail(kk, t):
                    total += ca * cb * cov(a, b)
    return total


class TestSchedules:
    def test_validation(self):
        with pytest.raises(ValueError):
            SampleSchedule(())
        with pytest.raises(ValueError):
            SampleSchedule((4, 0))
        with pytest.raises(ValueError):
            SampleSchedule((2, 4))
        assert SampleSchedule.constant(3, 5).Q == (5, 5, 5, 5)

    def test_hoelder_factor(self):
        assert hoelder_factor(0.5, 1.0, 1) == 2 ** -0.75
        assert hoelder_factor(0.5, 1.0, 2) == 2 ** -1.25
        assert hoelder_factor(1.0, 1.0, 1) == 0.5

    def test_hoelder_schedule(self):
        q = hoelder_schedule(6, 0.5, 1.0, 1000).Q
        assert q[0] == 1000
        assert q == tuple(max(1, round(1000 * 2 ** (-0.75 * l))) for l in range(7))
        assert hoelder_schedule(40, 1.0, 1.0, 8).Q[-1] == 1
        with pytest.raises(ValueError):
            hoelder_schedule(3, 0.0, 1.0, 10)


class TestConvergenceFactors:
    def test_j_zero(self):
        assert convergence_factor_ml(0, identity, SampleSchedule((4,))) == 3.0
        assert convergence_factor_mi(0, identity, SampleSchedule((1,))) == 18.0

    def test_monotone(self):
        rho = np.sqrt
        lo, hi = SampleSchedule.constant(3, 4), SampleSchedule.constant(3, 16)
        assert convergence_factor_ml(3, rho, hi) < convergence_factor_ml(3, rho, lo)
        assert convergence_factor_mi(3, rho, hi) < convergence_factor_mi(3, rho, lo)
        assert (convergence_factor_ml(3, rho, lo, c_diam=1.0)
                < convergence_factor_ml(3, rho, lo, c_diam=2.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            convergence_factor_ml(2, identity, SampleSchedule((4,)))

    @pytest.mark.parametrize("J", range(7))
    def test_hoelder_collapse(self, J):
        # with Q_l = Q0 4^-l and rho(t) = t every level term equals 4 / sqrt(Q0)
        alpha = 1.0
        Q0 = 4 ** (J + 1)
        Q = SampleSchedule(tuple(Q0 // 4 ** l for l in range(J + 1)))
        rho = lambda t: t ** alpha
        expected = 2.0 ** -J + sum(2.0 * 2.0 ** (1 - j) / math.sqrt(Q0 / 4 ** j)
                                   for j in range(J + 1))
        closed = 2.0 ** -J + (J + 1) * 4.0 / math.sqrt(Q0)
        assert convergence_factor_ml(J, rho, Q) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(closed, rel=1e-14)


class TestMonteCarlo:
    def test_deterministic(self):
        v = np.arange(7.0)
        res = mc_mean(DeterministicSampler(v), 13)
        assert np.allclose(res.values, v) and res.kind == "mean"

    def test_coin_mean(self):
        res = mc_mean(CoinSampler(50), 4000, seed=1)
        # mean of 4000 fair signs has std 1/sqrt(4000)
        assert np.all(np.abs(res.values) <= 5 / math.sqrt(4000))

    def test_q_must_be_positive(self):
        with pytest.raises(ValueError):
            mc_mean(CoinSampler(3), 0)

    def test_reproducible(self):
        a = mc_mean(CoinSampler(20), 10, seed=[3, 4])
        b = mc_mean(CoinSampler(20), 10, seed=[3, 4])
        assert np.array_equal(a.values, b.values)


class TestLevelStructure:
    def test_nested_and_cells(self):
        times, tree = wiener_setup(64)
        lev = LevelStructure.build(tree, tree.depth, 0)
        for j in range(1, lev.J + 1):
            assert set(lev.anchor_sites[j - 1].tolist()) <= set(lev.anchor_sites[j].tolist())
        assert len(lev.anchor_sites[lev.J]) == 64
        for j in range(lev.J + 1):
            for s in range(64):
                a = anchor_of(lev, j, s)
                assert lev.cell_of[j][a] == lev.cell_of[j][s]

    def test_too_deep(self):
        _, tree = wiener_setup(8)
        with pytest.raises(ValueError):
            LevelStructure.build(tree, tree.depth + 1, 0)


class TestMLMC:
    def test_telescope_is_exact(self):
        # integer-valued field: every partial sum is exact in floating point
        rng = np.random.default_rng(0)
        vals = rng.integers(-50, 50, 100).astype(float)
        _, tree = wiener_setup(100)
        sched = SampleSchedule.constant(tree.depth, 4)
        res = mlmc_mean(DeterministicSampler(vals), tree, sched, reuse_samples=True)
        lev = LevelStructure.build(tree, tree.depth, [0, 0, 1 << 20])
        assert np.array_equal(res.values, lev.interpolate(tree.depth, vals))
        assert np.array_equal(res.values, vals)

    def test_deterministic_without_reuse(self):
        vals = np.arange(40.0)
        _, tree = wiener_setup(40, seed=2)
        res = mlmc_mean(DeterministicSampler(vals), tree, hoelder_schedule(tree.depth, 0.5, 1, 64))
        assert np.array_equal(res.values, vals)

    def test_partial_depth(self):
        vals = np.arange(40.0)
        _, tree = wiener_setup(40, seed=3)
        res = mlmc_mean(DeterministicSampler(vals), tree, SampleSchedule.constant(2, 3))
        lev = LevelStructure.build(tree, 2, [0, 0, 1 << 20])
        assert np.array_equal(res.values, lev.interpolate(2, vals))

    def test_unbiased_coin(self):
        _, tree = wiener_setup(32, seed=4)
        sched = SampleSchedule((8, 4, 2, 1, 1, 1)[:tree.depth + 1])
        reps = np.array([mlmc_mean(CoinSampler(32), tree, sched, seed=5, replica=r).values
                         for r in range(200)])
        mean = reps.mean(axis=0)
        se = reps.std(axis=0, ddof=1) / math.sqrt(len(reps))
        assert np.all(np.abs(mean) <= 4 * se + 1e-12)

    def test_wiener_error_decreases_with_q0(self):
        times, tree = wiener_setup(200, seed=6)
        sampler = WienerSampler(times)
        errs = []
        for q0 in (16, 1024):
            sched = hoelder_schedule(tree.depth, 0.5, 1.0, q0)
            e = [np.sqrt(np.mean(mlmc_mean(sampler, tree, sched, seed=7, replica=r).values ** 2))
                 for r in range(10)]
            errs.append(np.mean(e))
        assert errs[1] < errs[0] / 2


class TestMIMC:
    def test_constant_field(self):
        _, tree = wiener_setup(30, seed=8)
        res = mimc_correlation(DeterministicSampler(np.full(30, 2.0)), tree,
                               SampleSchedule.constant(tree.depth, 3))
        assert all(res.entry(s, t) == 4.0 for s in range(0, 30, 7) for t in range(0, 30, 5))
        with pytest.raises(ValueError):
            mlmc_mean(CoinSampler(30), tree, SampleSchedule.constant(1, 1)).entry(0, 0)

    def test_symmetric(self):
        times, tree = wiener_setup(64, seed=9)
        res = mimc_correlation(WienerSampler(times), tree, hoelder_schedule(tree.depth, 0.5, 1, 200))
        rng = np.random.default_rng(0)
        for s, t in rng.integers(0, 64, (30, 2)):
            assert res.entry(s, t) == res.entry(t, s)

    def test_single_level_is_anchor_product(self):
        vals = np.random.default_rng(1).integers(-5, 5, 24).astype(float)
        _, tree = wiener_setup(24, seed=10)
        res0 = mimc_correlation(DeterministicSampler(vals), tree, SampleSchedule((2,)))
        lev = LevelStructure.build(tree, 0, [0, 0, 1 << 20])
        a = anchor_of(lev, 0, 0)
        assert res0.entry(3, 7) == vals[a] ** 2

    def test_wiener_against_sparse_expectation(self):
        times, tree = wiener_setup(128, seed=11)
        J = tree.depth
        sched = hoelder_schedule(J, 0.5, 1.0, 4000)
        res = mimc_correlation(WienerSampler(times), tree, sched, seed=12)
        lev = LevelStructure.build(tree, J, [12, 0, 1 << 20])
        rng = np.random.default_rng(13)
        for s, t in rng.integers(0, 128, (20, 2)):
            exact = sparse_expectation(lev, times, J, s, t)
            truth = min(times[s], times[t])
            est, se = res.entry(s, t), res.entry_stderr(s, t)
            assert abs(est - exact) <= 3.5 * se + 1e-12
            assert abs(est - truth) <= 3.5 * se + abs(exact - truth) + 1e-12

    def test_csv(self, tmp_path):
        times, tree = wiener_setup(16, seed=14)
        res = mimc_correlation(WienerSampler(times), tree, SampleSchedule.constant(tree.depth, 4))
        res.to_csv(tmp_path / "c.csv", pairs=[(0, 1), (2, 2)])
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "i,j,value"
        assert float(lines[1].split(",")[2]) == res.entry(0, 1)
