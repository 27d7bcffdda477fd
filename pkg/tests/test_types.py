import numpy as np
import pytest

from surgedetect.exceptions import DomainError
from surgedetect.types import (AnnualSeries, ModelSpec, Segmentation,
                               param_count, penalty_value, regime_index)


class TestAnnualSeries:
    def test_basic_fields(self):
        s = AnnualSeries(1850, [0.1, 0.2, 0.3], label="x", baseline="1961-1990")
        assert s.n == 3
        assert s.end_year == 1852
        assert list(s.years) == [1850, 1851, 1852]

    def test_rejects_short_and_nonfinite(self):
        with pytest.raises(DomainError):
            AnnualSeries(1850, [0.1])
        with pytest.raises(DomainError):
            AnnualSeries(1850, [0.1, np.nan, 0.2])

    def test_values_read_only(self):
        s = AnnualSeries(1850, [0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            s.values[0] = 9.9

    def test_year_index_round_trip(self):
        s = AnnualSeries(1900, np.zeros(50))
        for year in (1900, 1925, 1949):
            assert s.year_of_index(s.index_of_year(year)) == year
        with pytest.raises(DomainError):
            s.index_of_year(1899)

    def test_window(self):
        s = AnnualSeries(1900, np.arange(50.0))
        w = s.window(1910, 1919)
        assert w.start_year == 1910
        assert w.n == 10
        assert w.values[0] == 10.0


class TestSegmentation:
    def test_regime_index_no_changepoints(self):
        assert regime_index(5, Segmentation(())) == 1

    def test_regime_index_boundary_convention(self):
        # a changepoint at tau belongs to the earlier regime
        seg = Segmentation((10,))
        assert regime_index(10, seg) == 1
        assert regime_index(11, seg) == 2

    def test_regime_index_matches_linear_scan(self):
        seg = Segmentation((113, 160))
        n = 174

        def scan(t):
            bounds = (0,) + seg.taus + (n,)
            for i in range(len(bounds) - 1):
                if bounds[i] < t <= bounds[i + 1]:
                    return i + 1

        for t in range(1, n + 1):
            assert regime_index(t, seg) == scan(t)
        assert regime_index(174, seg) == 3

    def test_regime_index_nondecreasing_and_surjective(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(10, 120))
            m = int(rng.integers(0, 4))
            taus = tuple(sorted(rng.choice(np.arange(1, n), size=m, replace=False).tolist()))
            seg = Segmentation(taus)
            r = [regime_index(t, seg) for t in range(1, n + 1)]
            assert all(b - a >= 0 for a, b in zip(r, r[1:]))
            assert set(r) == set(range(1, seg.m + 2))

    def test_boundary_round_trip(self):
        n = 60
        seg = Segmentation((12, 40))
        r = [regime_index(t, seg) for t in range(1, n + 1)]
        recovered = tuple(t for t in range(1, n) if r[t] != r[t - 1])
        assert recovered == seg.taus

    def test_invalid(self):
        with pytest.raises(DomainError):
            Segmentation((5, 5))
        with pytest.raises(DomainError):
            Segmentation((0,))
        with pytest.raises(DomainError):
            regime_index(0, Segmentation(()))
        with pytest.raises(DomainError):
            Segmentation((50,)).validate(50)
        with pytest.raises(DomainError):
            Segmentation((5,)).validate(60, min_seg_len=10)


class TestModelSpec:
    def test_validation(self):
        with pytest.raises(DomainError):
            ModelSpec(trend="wiggly")
        with pytest.raises(DomainError):
            ModelSpec(errors="global_ar", ar_order=0)
        with pytest.raises(DomainError):
            ModelSpec(penalty="aicc")
        assert ModelSpec(errors="independent").order == 0
        assert ModelSpec(errors="global_ar", ar_order=4).order == 4


class TestPenalty:
    @pytest.mark.parametrize("trend,errors,expected", [
        ("continuous", "global_ar", lambda m: 2 * m + 4),
        ("discontinuous", "global_ar", lambda m: 3 * m + 4),
        ("continuous", "piecewise_ar1", lambda m: 4 * m + 4),
        ("discontinuous", "piecewise_ar1", lambda m: 5 * m + 4),
    ])
    def test_table_counts(self, trend, errors, expected):
        for m in range(4):
            spec = ModelSpec(trend=trend, errors=errors)
            assert param_count(m, spec) == expected(m)

    def test_m0_collapse(self):
        # with no changepoints, every AR(1) flavour counts line + phi + sigma^2
        for trend in ("continuous", "discontinuous"):
            for errors in ("global_ar", "piecewise_ar1"):
                assert param_count(0, ModelSpec(trend=trend, errors=errors)) == 4

    def test_explicit_enumeration_m2(self):
        # m=2: 2 changepoint times are parameters, plus regression and noise
        n = 100
        m = 2
        # continuous/global: 2 taus + (alpha1, beta1..beta3) + phi + sigma2 = 8
        assert param_count(m, ModelSpec("continuous", "global_ar")) == 8
        # discontinuous/global: 2 + 3*2 + 2 = 10
        assert param_count(m, ModelSpec("discontinuous", "global_ar")) == 10
        # continuous/piecewise: 2 + 4 + 3*2 = 12
        assert param_count(m, ModelSpec("continuous", "piecewise_ar1")) == 12
        # discontinuous/piecewise: 2 + 6 + 6 = 14
        assert param_count(m, ModelSpec("discontinuous", "piecewise_ar1")) == 14
        for spec in (ModelSpec("continuous", "global_ar"),
                     ModelSpec("discontinuous", "piecewise_ar1")):
            assert penalty_value(m, spec, n) == pytest.approx(
                param_count(m, spec) * np.log(n))

    def test_example_value(self):
        spec = ModelSpec("continuous", "global_ar")
        assert penalty_value(1, spec, 174) == pytest.approx(6 * np.log(174))

    def test_independent_counts(self):
        assert param_count(0, ModelSpec("continuous", "independent")) == 3
        assert param_count(1, ModelSpec("discontinuous", "independent")) == 6

    def test_manual_penalty_charges_per_changepoint(self):
        spec = ModelSpec("continuous", "piecewise_ar1", penalty=12.5)
        assert penalty_value(0, spec, 100) == 0.0
        assert penalty_value(3, spec, 100) == pytest.approx(37.5)
