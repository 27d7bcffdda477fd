import numpy as np
import pytest

from surgedetect import ar, trend
from surgedetect.exceptions import DomainError
from surgedetect.types import ModelSpec, Segmentation

from conftest import ar1_path, make_joinpoint


def dense_gls_fit(y, taus, trend_kind, phi, sigma):
    """Oracle: GLS through the explicit dense AR(1) covariance matrix."""
    n = len(y)
    X = trend.design_matrix(n, taus, trend_kind)
    idx = np.arange(n)
    cov = sigma**2 * phi ** np.abs(idx[:, None] - idx[None, :]) / (1 - phi**2)
    XtSi = X.T @ np.linalg.inv(cov)
    coeffs = np.linalg.solve(XtSi @ X, XtSi @ y)
    return coeffs, np.linalg.inv(XtSi @ X)


class TestDesignMatrix:
    def test_continuous_column_count(self):
        X = trend.design_matrix(30, (10, 20), "continuous")
        assert X.shape == (30, 4)

    def test_discontinuous_column_count(self):
        X = trend.design_matrix(30, (10, 20), "discontinuous")
        assert X.shape == (30, 6)

    def test_full_rank_with_two_point_segments(self):
        X = trend.design_matrix(8, (2, 4, 6), "discontinuous")
        assert np.linalg.matrix_rank(X) == X.shape[1]


class TestFitAt:
    def test_ols_reduction(self, rng):
        y = rng.standard_normal(40)
        fit = trend.fit_at(y, Segmentation(()), ModelSpec("continuous", "independent"))
        t = np.arange(1, 41.0)
        slope, intercept = np.polyfit(t, y, 1)
        assert fit.betas[0] == pytest.approx(slope, abs=1e-10)
        assert fit.alphas[0] == pytest.approx(intercept, abs=1e-10)

    def test_noise_free_recovery_all_error_models(self):
        y = make_joinpoint(70, 30, 0.01, 0.03, alpha=0.1)
        for errors in ("independent", "global_ar", "piecewise_ar1"):
            fit = trend.fit_at(y, Segmentation((30,)),
                               ModelSpec("continuous", errors))
            assert fit.betas[0] == pytest.approx(0.01, abs=1e-8)
            assert fit.betas[1] == pytest.approx(0.03, abs=1e-8)
            assert np.all(np.abs(fit.resid) < 1e-8)

    def test_continuity_invariant(self, rng):
        for _ in range(10):
            n = int(rng.integers(40, 90))
            taus = tuple(sorted(rng.choice(np.arange(12, n - 12), 2, replace=False).tolist()))
            if taus[1] - taus[0] < 12:
                continue
            y = rng.standard_normal(n)
            fit = trend.fit_at(y, Segmentation(taus),
                               ModelSpec("continuous", "piecewise_ar1", min_seg_len=5))
            assert np.all(fit.continuity_gaps() < 1e-10)

    def test_likelihood_dominance(self, rng):
        # removing the continuity restriction can only raise the likelihood
        for seed in range(6):
            y = make_joinpoint(60, 25, 0.0, 0.02,
                               noise=ar1_path(0.3, 0.2, 60, seed=seed))
            for errors in ("independent", "global_ar", "piecewise_ar1"):
                cont = trend.fit_at(y, Segmentation((25,)), ModelSpec("continuous", errors))
                disc = trend.fit_at(y, Segmentation((25,)), ModelSpec("discontinuous", errors))
                assert disc.loglik >= cont.loglik - 1e-9

    def test_monotone_refinement(self, rng):
        y = make_joinpoint(80, 40, 0.0, 0.02, noise=ar1_path(0.2, 0.3, 80, seed=3))
        spec = ModelSpec("continuous", "global_ar")
        base = trend.fit_at(y, Segmentation((40,)), spec)
        finer = trend.fit_at(y, Segmentation((25, 40)), spec)
        assert finer.loglik >= base.loglik - 1e-9

    def test_gls_fixed_point(self):
        y = make_joinpoint(60, 30, 0.005, 0.02, noise=ar1_path(0.4, 0.1, 60, seed=9))
        fit = trend.fit_at(y, Segmentation((30,)), ModelSpec("continuous", "global_ar"))
        # one more GLS pass with the fitted phi reproduces the coefficients
        Xw, _ = ar.whiten(trend.design_matrix(60, (30,), "continuous"), fit.phis)
        yw, _ = ar.whiten(y, fit.phis)
        coeffs = np.linalg.lstsq(Xw, yw, rcond=None)[0]
        alphas, betas = trend.coeffs_to_segments(coeffs, (30,), "continuous")
        assert betas == pytest.approx(fit.betas, abs=1e-6)

    def test_matches_dense_gls_oracle_at_fixed_phi(self, rng):
        # with phi fixed at the fitted value, whitened GLS equals dense GLS
        y = make_joinpoint(50, 20, 0.0, 0.05, noise=ar1_path(0.5, 0.4, 50, seed=21))
        fit = trend.fit_at(y, Segmentation((20,)), ModelSpec("continuous", "global_ar"))
        coeffs, _ = dense_gls_fit(y, (20,), "continuous",
                                  float(fit.phis[0]), float(fit.sigmas[0]))
        alphas, betas = trend.coeffs_to_segments(coeffs, (20,), "continuous")
        assert betas == pytest.approx(fit.betas, abs=1e-8)

    def test_rank_deficient_rejected(self):
        y = np.zeros(8)
        y[:4] = [0.0, 0.1, 0.2, 0.3]
        with pytest.raises(DomainError):
            trend.fit_at(np.array([1.0, 2.0]), Segmentation((1,)),
                         ModelSpec("discontinuous", "independent", min_seg_len=2))

    def test_min_seg_len_enforced(self):
        y = np.arange(30.0)
        with pytest.raises(DomainError):
            trend.fit_at(y, Segmentation((5,)), ModelSpec("continuous", "independent"))

    def test_residuals_accessor(self):
        y = make_joinpoint(40, 20, 0.01, 0.02)
        fit = trend.fit_at(y, Segmentation((20,)), ModelSpec("continuous", "independent"))
        eps, innov = trend.residuals(fit)
        assert np.all(np.abs(eps) < 1e-8)
        assert np.all(np.abs(innov) < 1e-8)

    def test_innovations_whiten_correctly_specified_model(self):
        # innovation residuals of a well-specified fit pass white-noise bands
        noise = ar1_path(0.6, 0.15, 400, seed=31)
        y = make_joinpoint(400, 200, 0.002, 0.01, noise=noise)
        fit = trend.fit_at(y, Segmentation((200,)), ModelSpec("continuous", "global_ar"))
        r = ar.sample_acf(fit.innov, 10)
        assert np.all(np.abs(r) < 2.5 / np.sqrt(400))


class TestSlopeDiffVariance:
    def test_independence_reduction(self):
        # phi = 0 equals the closed-form OLS contrast variance
        n, k, sigma = 54, 43, 0.097
        X = trend.design_matrix(n, (k,), "continuous")
        want = sigma**2 * np.linalg.inv(X.T @ X)[2, 2]
        assert trend.contrast_sd(n, k, 0.0, sigma) ** 2 == pytest.approx(want, rel=1e-12)

    def test_matches_dense_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(20, 81))
            k = int(rng.integers(4, n - 3))
            phi = float(rng.uniform(-0.7, 0.7))
            sigma = float(rng.uniform(0.05, 2.0))
            X = trend.design_matrix(n, (k,), "continuous")
            idx = np.arange(n)
            cov = sigma**2 * phi ** np.abs(idx[:, None] - idx[None, :]) / (1 - phi**2)
            want = np.linalg.inv(X.T @ np.linalg.solve(cov, X))[2, 2]
            got = trend.contrast_sd(n, k, phi, sigma) ** 2
            assert got == pytest.approx(want, abs=1e-8, rel=1e-8)

    def test_published_values(self):
        # the worked example: sd ~ 0.0065 at N=54 and ~ 0.0025 at N=71
        assert trend.contrast_sd(54, 43, 0.0865, 0.0944) == pytest.approx(0.0065, abs=1e-4)
        assert trend.contrast_sd(71, 43, 0.0865, 0.0944) == pytest.approx(0.0025, abs=1e-4)

    def test_from_fit(self):
        y = make_joinpoint(54, 43, 0.019, 0.029,
                           noise=ar1_path(0.1, 0.1, 54, seed=2))
        fit = trend.fit_at(y, Segmentation((43,)),
                           ModelSpec("continuous", "global_ar", min_seg_len=5))
        var = trend.slope_diff_variance(fit)
        assert var == pytest.approx(
            trend.contrast_sd(54, 43, float(fit.phis[0]), float(fit.sigmas[0])) ** 2)

    def test_requires_single_changepoint_continuous(self):
        y = make_joinpoint(60, 30, 0.0, 0.02, noise=ar1_path(0.1, 0.1, 60, seed=4))
        fit = trend.fit_at(y, Segmentation(()), ModelSpec("continuous", "global_ar"))
        with pytest.raises(DomainError):
            trend.slope_diff_variance(fit)
        fit2 = trend.fit_at(y, Segmentation((30,)), ModelSpec("continuous", "piecewise_ar1"))
        with pytest.raises(DomainError):
            trend.slope_diff_variance(fit2)
