from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from zimaging import (
    CovarianceMode,
    ImageSampler,
    NoiseModel,
    ObjectModel,
    Psf,
    Scenario,
    effective_source_moments,
    make_gaussian_psf,
    paper_scenario,
    rng_stream,
    sample_batch,
    sample_image,
    sample_multinomial,
    sample_source_counts,
    simulate,
)
from zimaging import _kernels
from zimaging.errors import InvalidArgumentError
from zimaging.sampler import discretize_counts, partition


def tiny(mean, q=0.0, psf=None, noise=0.0, n=10, seed=0):
    mean = np.asarray(mean, dtype=float)
    return Scenario(
        ObjectModel(mean, np.full(mean.size, q)),
        psf or Psf.delta(),
        NoiseModel.flat(mean.size, noise),
        n_samples=n,
        master_seed=seed,
    )


class TestSourceCounts:
    def test_zero_mean(self):
        rng = rng_stream(0, 0)
        assert all(sample_source_counts(0.0, q, rng) == 0 for q in (-1, 0, 0.5))

    def test_rejects(self):
        rng = rng_stream(0, 0)
        with pytest.raises(InvalidArgumentError):
            sample_source_counts(1.0, -1.5, rng)
        with pytest.raises(InvalidArgumentError):
            sample_source_counts(-1.0, 0.0, rng)

    def test_q_zero_is_poisson_draw(self):
        a = rng_stream(7, 3)
        b = rng_stream(7, 3)
        for _ in range(50):
            assert sample_source_counts(10.0, 0.0, a) == b.poisson(10.0)
            b.random()

    def test_poisson_dispersion(self):
        s = rng_stream(11, 0).poisson(10.0, 10**6)
        u = rng_stream(11, 1).random(10**6)
        x = discretize_counts(s, 10.0, 0.0, u)
        assert np.array_equal(x, s)
        ratio = x.var(ddof=1) / x.mean()
        assert 0.99 <= ratio <= 1.01

    def test_deterministic_when_q_is_minus_one(self):
        s = np.arange(30)
        x = discretize_counts(s, 7.0, -1.0, np.random.default_rng(0).random(30))
        assert np.all(x == 7)

    @pytest.mark.parametrize("mean,q", [(10.0, 0.2), (5.0, 0.1), (30.0, -0.2)])
    def test_moments_match_effective_oracle(self, mean, q):
        n = 10**6
        s = rng_stream(5, 0).poisson(mean, n)
        x = discretize_counts(s, mean, q, rng_stream(5, 1).random(n)).astype(float)
        m_eff, z_eff = effective_source_moments(mean, q)
        var_eff = m_eff + z_eff
        assert abs(x.mean() - m_eff) < 5 * np.sqrt(var_eff / n)
        # SE of the sample variance from the fourth central moment
        mu4 = np.mean((x - x.mean()) ** 4)
        var_se = np.sqrt((mu4 - var_eff**2) / n)
        assert abs(x.var(ddof=1) - var_eff) < 5 * var_se

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.integers(0, 200), min_size=1, max_size=20),
        st.floats(0.0, 100.0),
        st.floats(-1.0, 3.0),
        st.integers(0, 2**32 - 1),
    )
    def test_compiled_twin_agrees(self, s, mean, q, seed):
        s = np.asarray(s, dtype=np.int64)
        u = np.random.default_rng(seed).random(s.size)
        means = np.full(s.size, mean)
        qs = np.full(s.size, q)
        out = np.empty(s.size, dtype=np.int64)
        total = _kernels.discretize(s, means, np.sqrt(1 + qs), qs == 0, u, out)
        ref = discretize_counts(s, means, qs, u)
        assert np.array_equal(out, ref)
        assert total == ref.sum()


class TestMultinomial:
    def test_zero(self):
        assert np.all(sample_multinomial(0, make_gaussian_psf(2.0, 5), rng_stream(0, 0)) == 0)

    def test_delta(self):
        x = sample_multinomial(7, Psf.delta(), rng_stream(0, 0))
        assert list(x) == [7]
        x = sample_multinomial(7, Psf([0, 1, 0]), rng_stream(0, 0))
        assert list(x) == [0, 7, 0]

    @given(st.integers(0, 5000), st.integers(0, 1000))
    def test_conservation(self, n, seed):
        assert sample_multinomial(n, make_gaussian_psf(3.0, 12), rng_stream(seed, 0)).sum() == n

    def test_bin_means(self):
        psf = make_gaussian_psf(3.0, 12)
        rng = rng_stream(3, 0)
        x = np.array([sample_multinomial(1000, psf, rng) for _ in range(10**5)])
        se = np.sqrt(1000 * psf.weights * (1 - psf.weights) / len(x))
        assert np.all(np.abs(x.mean(axis=0) - 1000 * psf.weights) < 5 * se)

    def test_chi_squared(self):
        psf = make_gaussian_psf(2.0, 4)
        x = sample_multinomial(10**5, psf, rng_stream(9, 0))
        _, p = sps.chisquare(x, 10**5 * psf.weights)
        assert p > 1e-3


class TestAliasKernel:
    def test_alias_table_reproduces_weights(self):
        w = make_gaussian_psf(3.0, 12).weights
        prob, alias = _kernels.alias_table(w)
        W = w.size
        implied = prob / W
        for i in range(W):
            implied[alias[i]] += (1 - prob[i]) / W
        np.testing.assert_allclose(implied, w, rtol=0, atol=1e-15)

    def test_photon_landing_chi_squared(self):
        psf = make_gaussian_psf(2.0, 4)
        prob, alias = _kernels.alias_table(psf.weights)
        out = np.zeros(9, dtype=np.int64)
        counts = np.zeros(9, dtype=np.int64)
        counts[4] = 10**5
        used = _kernels.spread_photons(counts, rng_stream(4, 0).random(10**5), prob, alias, out)
        assert used == 10**5 and out.sum() == 10**5
        _, p = sps.chisquare(out, 10**5 * psf.weights)
        assert p > 1e-3

    def test_edge_photons_dropped(self):
        prob, alias = _kernels.alias_table(np.array([0.0, 0.0, 1.0]))
        out = np.zeros(3, dtype=np.int64)
        _kernels.spread_photons(np.array([0, 0, 5]), np.full(5, 0.5), prob, alias, out)
        assert out.sum() == 0


class TestImages:
    def test_all_zero(self):
        sc = tiny([0.0, 0.0, 0.0], psf=Psf([1, 2, 1]))
        assert np.all(sample_image(sc, 0) == 0)

    def test_delta_psf_no_spreading(self):
        sc = tiny([0.0, 20.0, 0.0], q=0.3)
        for i in range(20):
            im = sample_image(sc, i)
            assert im[0] == 0 and im[2] == 0

    def test_reproducible_by_index(self):
        sc = paper_scenario(n_samples=50)
        sampler = ImageSampler(sc)
        stack = sampler.sample_range(0, 50)
        assert np.array_equal(sample_image(sc, 17), stack[17])
        assert not np.array_equal(stack[0], stack[1])
        assert stack.min() >= 0

    def test_seed_changes_images(self):
        a = sample_image(paper_scenario(master_seed=1), 0)
        b = sample_image(paper_scenario(master_seed=2), 0)
        assert not np.array_equal(a, b)

    def test_noise_only_q_zero_pixels_are_poisson(self):
        sc = Scenario(ObjectModel.zeros(4), Psf.delta(), NoiseModel.flat(4, 3.0, 0.0), n_samples=2)
        rng = rng_stream(0, 1)
        expect = rng.poisson(np.full(8, [0, 0, 0, 0, 3, 3, 3, 3], dtype=float))[4:]
        assert np.array_equal(sample_image(sc, 1), expect)


class TestBatches:
    def test_empty_range(self):
        sc = paper_scenario(n_samples=10)
        acc = sample_batch(sc, 3, 3)
        assert acc.n == 0

    def test_bad_range(self):
        sc = paper_scenario(n_samples=10)
        with pytest.raises(InvalidArgumentError):
            sample_batch(sc, 5, 3)
        with pytest.raises(InvalidArgumentError):
            sample_batch(sc, 0, 11)

    def test_split_equals_whole(self):
        sc = paper_scenario(n_samples=300)
        whole = sample_batch(sc, 0, 300)
        half = sample_batch(sc, 0, 150).merge(sample_batch(sc, 150, 300))
        assert whole.same_state(half)
        small_chunks = sample_batch(sc, 0, 300, chunk=7)
        assert whole.same_state(small_chunks)

    @pytest.mark.parametrize("threads,batches", [(1, 1), (2, 1), (3, 4), (8, 3)])
    def test_simulate_independent_of_workers(self, threads, batches):
        sc = paper_scenario(n_samples=257, covariance=CovarianceMode.slices(48, 64))
        ref = sample_batch(sc, 0, 257)
        parts = simulate(sc, threads=threads, batches=batches)
        assert len(parts) == batches
        total = parts[0]
        for p in parts[1:]:
            total = total.merge(p)
        assert total.same_state(ref)

    @given(st.integers(0, 10**6), st.integers(1, 64))
    def test_partition(self, n, parts):
        ranges = partition(n, parts)
        assert ranges[0][0] == 0 and ranges[-1][1] == n
        for (a, b), (c, _) in zip(ranges, ranges[1:]):
            assert b == c and a <= b
        sizes = [b - a for a, b in ranges]
        assert max(sizes) - min(sizes) <= 1

    def test_reference_smoke(self):
        out = sample_batch(paper_scenario(n_samples=1000), 0, 1000).finalize()
        assert out.n == 1000 and out.mean.shape == (128,)
