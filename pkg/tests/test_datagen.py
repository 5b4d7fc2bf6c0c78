"""Tests for synthetic data, field samplers and time-series ingestion."""

import math

import numpy as np
import pytest

from modcont.datagen import (GaussianFieldSampler, GaussianFieldSpec, WienerSampler,
                             fibonacci_lattice, load_timeseries, log_dataset, nonhoelder_sphere,
                             sample_sphere_field, sample_wiener, save_timeseries, sqrt_dataset,
                             synthetic_timeseries, uniform_times)
from modcont.metric import Metric, PointSet
from modcont.modulus import modulus_at


class TestLattice:
    def test_unit_norm_and_spread(self):
        ps = fibonacci_lattice(2000)
        assert np.allclose(np.linalg.norm(ps.coords, axis=1), 1.0, atol=1e-15)
        assert abs(ps.coords.mean(axis=0)).max() < 1e-2
        assert ps.metric.kind == Metric.great_circle().kind

    def test_invalid(self):
        with pytest.raises(ValueError):
            fibonacci_lattice(0)


class TestWiener:
    def test_moments(self):
        t = np.array([0.1, 0.4, 0.9])
        w = sample_wiener(t, 0, size=40000)
        cov = np.cov(w.T)
        assert np.allclose(cov, np.minimum(t[:, None], t[None, :]), atol=0.015)
        z = w[:, 2] / math.sqrt(0.9)
        skew = np.mean(z ** 3)
        kurt = np.mean(z ** 4)
        assert abs(skew) < 0.05 and abs(kurt - 3) < 0.1

    def test_deterministic_and_shape(self):
        t = uniform_times(50, 1)
        assert np.all(np.diff(t) >= 0)
        assert np.array_equal(sample_wiener(t, 3), sample_wiener(t, 3))
        assert sample_wiener(t, 3).shape == (50,)

    def test_rejects_bad_times(self):
        with pytest.raises(ValueError):
            sample_wiener([0.5, 0.2], 0)
        with pytest.raises(ValueError):
            sample_wiener([-0.1, 0.2], 0)

    def test_sampler_handles_unsorted_subsets(self):
        times = np.array([0.2, 0.5, 0.7, 0.9])
        s = WienerSampler(times)
        draws = s.sample([3, 0, 1], 30000, np.random.default_rng(0))
        cov = np.cov(draws.T)
        sub = times[[3, 0, 1]]
        assert np.allclose(cov, np.minimum(sub[:, None], sub[None, :]), atol=0.02)


class TestSphereField:
    def test_variance_and_correlation(self):
        ps = fibonacci_lattice(200)
        spec = GaussianFieldSpec(ps)
        y = sample_sphere_field(spec, 0, size=20000)
        assert np.allclose(y.var(axis=0).mean(), 1.0, atol=0.02)
        # most distant pair is nearly antipodal: correlation exp(-4 pi)
        d = ps.metric.pairwise(ps.coords, ps.coords)
        i, j = np.unravel_index(np.argmax(d), d.shape)
        assert abs(np.corrcoef(y[:, i], y[:, j])[0, 1] - math.exp(-4 * d[i, j])) < 0.03

    def test_sampler_matches_spec(self):
        ps = fibonacci_lattice(50)
        s = GaussianFieldSampler(ps)
        y = s.sample(np.arange(0, 50, 5), 20000, np.random.default_rng(1))
        k = np.exp(-4 * ps.metric.pairwise(ps.coords[::5], ps.coords[::5]))
        assert np.allclose(np.cov(y.T), k, atol=0.04)

    def test_requires_sphere(self):
        with pytest.raises(ValueError):
            GaussianFieldSpec(PointSet(np.random.default_rng(0).random((5, 3))))

    def test_cap(self):
        with pytest.raises(ValueError):
            GaussianFieldSpec(fibonacci_lattice(5000))


class TestAnalyticFunctions:
    def test_nonhoelder_values(self):
        ps = fibonacci_lattice(500)
        x0 = ps.coords[0]
        ds = nonhoelder_sphere(ps, x0)
        v = ds.values.coords[:, 0]
        assert v[0] == 0.0
        d = ps.metric.pairwise(x0[None, :], ps.coords)[0]
        assert np.allclose(v[1:], 1 / np.abs(np.log(d[1:] / math.pi) - 2))
        assert v.max() <= 0.5

    def test_nonhoelder_requires_unit_x0(self):
        with pytest.raises(ValueError):
            nonhoelder_sphere(fibonacci_lattice(10), [0, 0, 2.0])

    def test_sqrt_and_log(self):
        x = np.linspace(0, 1, 101)
        assert sqrt_dataset(x).values.coords[25, 0] == 0.5
        v = log_dataset(x).values.coords[:, 0]
        assert v[0] == 0.0 and v[-1] == 0.5


class TestTimeseries:
    def test_load_with_header_and_junk(self, tmp_path, caplog):
        p = tmp_path / "ts.csv"
        p.write_text("# station 7\ntime,value\n0,1.5\n10,NA\n20,2.5\n\n30,3.0\n")
        with caplog.at_level("WARNING"):
            ds = load_timeseries(p)
        assert ds.sites.coords[:, 0].tolist() == [0, 20, 30]
        assert ds.values.coords[:, 0].tolist() == [1.5, 2.5, 3.0]
        assert "skipped 1" in caplog.text

    def test_empty(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("time,value\n")
        with pytest.raises(ValueError):
            load_timeseries(p)

    def test_synthetic_drop_and_round_trip(self, tmp_path):
        ds = synthetic_timeseries(2000, 0)
        v = ds.values.coords[:, 0]
        assert abs(v[999] - v[1000] - 10.0) < 1.0
        assert modulus_at(ds, 10.0) == np.max(np.abs(np.diff(v)))
        assert modulus_at(ds, 10.0) > 9.0
        save_timeseries(tmp_path / "s.csv", ds, comment="seed=0")
        back = load_timeseries(tmp_path / "s.csv")
        assert np.array_equal(back.values.coords, ds.values.coords)
        assert np.array_equal(back.sites.coords, ds.sites.coords)
