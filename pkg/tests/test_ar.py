import math

import numpy as np
import pytest
from scipy import stats

from surgedetect import ar
from surgedetect.exceptions import DomainError

from conftest import ar1_path


def dense_loglik(eps, phis, sigma):
    """Oracle: log-density from the full N x N stationary covariance matrix."""
    n = len(eps)
    g = ar.ar_autocov(phis, sigma, n - 1)
    idx = np.arange(n)
    cov = g[np.abs(idx[:, None] - idx[None, :])]
    return stats.multivariate_normal.logpdf(eps, mean=np.zeros(n), cov=cov)


class TestArLoglik:
    def test_iid_reduction(self):
        eps = np.array([0.5, -1.0, 0.25, 2.0])
        model = ar.ArModel((), 1.5)
        want = -0.5 * (4 * math.log(2 * math.pi * 1.5**2)
                       + np.sum(eps**2) / 1.5**2)
        assert ar.ar_loglik(eps, model) == pytest.approx(want, abs=1e-12)

    def test_hand_value_bivariate(self):
        # N=2, phi=0.5, sigma=1, eps=(0,0): the density at the origin of the
        # stationary bivariate normal
        got = ar.ar_loglik(np.zeros(2), ar.ArModel((0.5,), 1.0))
        want = -math.log(2 * math.pi) - 0.5 * math.log(1.0 / (1.0 - 0.25))
        assert got == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("phis", [(0.5,), (-0.8,), (0.4, -0.3),
                                      (0.3, -0.2, 0.1, 0.05)])
    def test_matches_dense_oracle(self, phis, rng):
        for _ in range(25):
            n = int(rng.integers(max(len(phis) + 2, 5), 51))
            sigma = float(rng.uniform(0.3, 2.5))
            eps = rng.standard_normal(n) * sigma
            model = ar.ArModel(phis, sigma)
            assert ar.ar_loglik(eps, model) == pytest.approx(
                dense_loglik(eps, phis, sigma), abs=1e-8)

    def test_random_parameter_draws_match_oracle(self, rng):
        # p in {1, 2, 4}, stationary draws via partial autocorrelations
        for _ in range(100):
            p = int(rng.choice([1, 2, 4]))
            kappas = rng.uniform(-0.85, 0.85, size=p)
            phis = tuple(ar._pacf_to_ar(kappas))
            sigma = float(rng.uniform(0.2, 2.0))
            n = int(rng.integers(p + 2, 51))
            eps = rng.standard_normal(n)
            got = ar.ar_loglik(eps, ar.ArModel(phis, sigma))
            assert got == pytest.approx(dense_loglik(eps, phis, sigma), abs=1e-8)

    def test_nonstationary_rejected(self):
        with pytest.raises(DomainError):
            ar.ArModel((1.01,), 1.0)
        with pytest.raises(DomainError):
            ar.ArModel((0.7, 0.5), 1.0)


class TestFitAr:
    def test_degenerate_zero_series(self):
        with pytest.raises(DomainError):
            ar.fit_ar(np.zeros(30), 1)

    def test_recovers_phi_on_long_path(self):
        eps = ar1_path(0.5, 1.0, 100_000, seed=77)
        model, ll = ar.fit_ar(eps, 1)
        assert model.phis[0] == pytest.approx(0.5, abs=0.01)
        assert model.sigma == pytest.approx(1.0, abs=0.01)

    def test_fit_maximises_likelihood_locally(self, rng):
        eps = ar1_path(0.3, 0.5, 200, seed=5)
        model, ll = ar.fit_ar(eps, 1)
        for dphi in (-0.02, 0.02):
            other = ar.ArModel((model.phis[0] + dphi,), model.sigma)
            assert ar.ar_loglik(eps, other) <= ll + 1e-9

    def test_higher_order_fit(self):
        rng = ar.rng_stream(11, 0)
        z = rng.standard_normal(5000)
        eps = np.zeros(5000)
        for t in range(2, 5000):
            eps[t] = 0.4 * eps[t - 1] - 0.25 * eps[t - 2] + z[t]
        model, _ = ar.fit_ar(eps[100:], 2)
        assert model.phis[0] == pytest.approx(0.4, abs=0.05)
        assert model.phis[1] == pytest.approx(-0.25, abs=0.05)

    def test_p0(self):
        eps = np.array([1.0, -1.0, 2.0, 0.5])
        model, ll = ar.fit_ar(eps, 0)
        assert model.order == 0
        assert model.sigma == pytest.approx(np.sqrt(np.mean(eps**2)))


class TestSimulate:
    def test_white_noise_reduction(self):
        x = ar.simulate_ar1(ar.ArModel((), 2.0), 50_000, ar.rng_stream(3, 0))
        assert np.std(x) == pytest.approx(2.0, rel=0.02)
        assert abs(ar.sample_acf(x, 1)[0]) < 0.02

    def test_stationary_variance(self):
        phi, sigma, n = 0.0865, 0.097, 54
        sims = ar.simulate_ar1_matrix(ar.ArModel((phi,), sigma), n, 100_000,
                                      ar.rng_stream(9, 0))
        want = sigma**2 / (1 - phi**2)
        assert np.var(sims) == pytest.approx(want, rel=0.01)
        # strict stationarity: first and last columns agree in variance
        v0, vn = np.var(sims[:, 0]), np.var(sims[:, -1])
        assert v0 == pytest.approx(want, rel=0.02)
        assert vn == pytest.approx(want, rel=0.02)

    def test_lag1_autocorrelation(self):
        phi = 0.0865
        sims = ar.simulate_ar1_matrix(ar.ArModel((phi,), 0.097), 54, 100_000,
                                      ar.rng_stream(10, 0))
        num = np.sum(sims[:, 1:] * sims[:, :-1])
        den = np.sum(sims * sims)
        assert num / den == pytest.approx(phi, abs=0.005)

    def test_bit_reproducible(self):
        a = ar.simulate_ar1(ar.ArModel((0.4,), 1.0), 100, ar.rng_stream(42, 7))
        b = ar.simulate_ar1(ar.ArModel((0.4,), 1.0), 100, ar.rng_stream(42, 7))
        assert np.array_equal(a, b)

    def test_streams_independent_of_order(self):
        first = [ar.simulate_ar1(ar.ArModel((0.2,), 1.0), 10, ar.rng_stream(1, i))
                 for i in (0, 1, 2)]
        second = [ar.simulate_ar1(ar.ArModel((0.2,), 1.0), 10, ar.rng_stream(1, i))
                  for i in (2, 0, 1)]
        assert np.array_equal(first[0], second[1])
        assert np.array_equal(first[2], second[0])

    def test_explosive_rejected(self):
        with pytest.raises(DomainError):
            ar.simulate_ar1(ar.ArModel((0.5, 0.2), 1.0), 10, ar.rng_stream(0, 0))
        with pytest.raises(DomainError):
            ar.ArModel((1.0,), 1.0)


class TestSampleAcf:
    def test_iid_within_bands(self):
        x = ar.rng_stream(21, 0).standard_normal(20_000)
        r = ar.sample_acf(x, 20)
        assert np.all(np.abs(r) < 2.5 / math.sqrt(20_000))

    def test_alternating_series(self):
        n = 1000
        x = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        r = ar.sample_acf(x, 2)
        assert r[0] == pytest.approx(-1.0, abs=2.0 / n)
        assert r[1] == pytest.approx(1.0, abs=2.0 / n)

    def test_ar_decay(self):
        x = ar1_path(0.9, 1.0, 200_000, seed=13)
        r = ar.sample_acf(x, 5)
        for k in range(5):
            assert r[k] == pytest.approx(0.9 ** (k + 1), abs=0.02)

    def test_constant_rejected(self):
        with pytest.raises(DomainError):
            ar.sample_acf(np.ones(50), 5)
        with pytest.raises(DomainError):
            ar.sample_acf(np.arange(10.0), 10)
