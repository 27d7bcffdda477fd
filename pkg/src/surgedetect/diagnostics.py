"""Residual model validation: weighted portmanteau and normality tests.

A fitted trend/error model is adequate when its innovation residuals look
like white Gaussian noise.  Autocorrelation is tested jointly over a lag
window with a weighted portmanteau statistic whose null distribution is a
gamma approximation matched to the statistic's first two moments (adjusted
for the number of fitted AR parameters); normality uses the Shapiro-Wilk
test.  Verdicts use the conventional 0.05 threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .ar import sample_acf
from .exceptions import DomainError
from .types import FitResult

REJECT_LEVEL = 0.05


def fisher_gallagher_test(innov_residuals, max_lag: int = 20,
                          fitted_ar_order: int = 0) -> tuple:
    """Weighted portmanteau test for joint residual autocorrelation.

    The statistic is

        N (N + 2) * sum_{k=1..m} w_k * r_k^2 / (N - k),
        w_k = (m - k + 1) / m,

    a Ljung-Box sum downweighting the higher lags.  Under the null its
    distribution is approximated by a gamma law whose shape and scale match
    the first two asymptotic moments, with ``fitted_ar_order`` degrees of
    freedom removed for parameters estimated from the residuals.

    Returns (statistic, p_value).
    """
    e = np.asarray(innov_residuals, dtype=float)
    n = e.size
    if max_lag < 1:
        raise DomainError("max_lag must be >= 1")
    if max_lag >= n / 2:
        raise DomainError(f"series too short for {max_lag} lags (N={n})")
    if fitted_ar_order < 0:
        raise DomainError("fitted_ar_order must be >= 0")
    r = sample_acf(e, max_lag)
    k = np.arange(1, max_lag + 1)
    weights = (max_lag - k + 1) / max_lag
    statistic = float(n * (n + 2.0) * np.sum(weights * r**2 / (n - k)))
    m = float(max_lag)
    denom = 2.0 * m**2 + 3.0 * m + 1.0 - 6.0 * m * fitted_ar_order
    if denom <= 0:
        raise DomainError("lag window too short for the fitted AR order")
    shape = 0.75 * m * (m + 1.0) ** 2 / denom
    scale = (2.0 / 3.0) * denom / (m * (m + 1.0))
    p_value = float(stats.gamma.sf(statistic, a=shape, scale=scale))
    return statistic, p_value


def shapiro_wilk(sample) -> tuple:
    """Shapiro-Wilk normality test; returns (W, p_value)."""
    x = np.asarray(sample, dtype=float)
    if x.size < 3 or x.size > 5000:
        raise DomainError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DomainError("constant sample")
    res = stats.shapiro(x)
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Bundle of residual diagnostics for one fit."""

    fg_statistic: float
    fg_p: float
    fg_lags: int
    sw_statistic: float
    sw_p: float
    acf: np.ndarray
    acf_band: float
    n: int
    fitted_ar_order: int
    autocorrelation_ok: bool
    normality_ok: bool

    @property
    def ok(self) -> bool:
        return self.autocorrelation_ok and self.normality_ok

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "fg": {"statistic": self.fg_statistic, "p_value": self.fg_p,
                   "lags": self.fg_lags, "fitted_ar_order": self.fitted_ar_order,
                   "pass": self.autocorrelation_ok},
            "shapiro_wilk": {"statistic": self.sw_statistic,
                             "p_value": self.sw_p, "pass": self.normality_ok},
            "acf": [float(v) for v in self.acf],
            "acf_band": self.acf_band,
            "verdict": "pass" if self.ok else "reject",
        }

    def format_table(self) -> str:
        lines = [
            f"{'test':<24}{'statistic':>12}{'p-value':>12}  verdict",
            "-" * 58,
            f"{'autocorrelation (FG)':<24}{self.fg_statistic:>12.4f}"
            f"{self.fg_p:>12.4g}  {'pass' if self.autocorrelation_ok else 'REJECT'}",
            f"{'normality (SW)':<24}{self.sw_statistic:>12.4f}"
            f"{self.sw_p:>12.4g}  {'pass' if self.normality_ok else 'REJECT'}",
        ]
        flagged = [k + 1 for k, v in enumerate(self.acf)
                   if abs(v) > self.acf_band]
        lines.append(f"lags outside +-{self.acf_band:.3f} band: "
                     + (", ".join(map(str, flagged)) if flagged else "none"))
        return "\n".join(lines)


def diagnose(fit: FitResult, max_lag: int = None) -> DiagnosticsReport:
    """Run the residual diagnostics for a converged fit.

    The lag window defaults to 20, shortened to 10 for series under 60
    observations.  Innovation residuals of piecewise fits are standardised
    by their segment innovation sd first, so scale changes between segments
    cannot masquerade as autocorrelation.
    """
    if not fit.converged:
        raise DomainError("diagnostics need a converged fit")
    innov = fit.innov.copy()
    if fit.spec.errors == "piecewise_ar1":
        for i, (a, b) in enumerate(fit.seg.segments(fit.n)):
            innov[a - 1 : b] = innov[a - 1 : b] / fit.sigmas[i]
    if max_lag is None:
        max_lag = 20 if fit.n >= 60 else 10
    order = fit.spec.order
    fg_stat, fg_p = fisher_gallagher_test(innov, max_lag, order)
    sw_stat, sw_p = shapiro_wilk(innov)
    acf = sample_acf(innov, max_lag)
    band = 2.0 / np.sqrt(fit.n)
    return DiagnosticsReport(
        fg_statistic=fg_stat, fg_p=fg_p, fg_lags=max_lag,
        sw_statistic=sw_stat, sw_p=sw_p, acf=acf, acf_band=float(band),
        n=fit.n, fitted_ar_order=order,
        autocorrelation_ok=fg_p > REJECT_LEVEL,
        normality_ok=sw_p > REJECT_LEVEL,
    )
