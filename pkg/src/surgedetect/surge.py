"""Difference-of-slopes surge testing with Monte Carlo multiplicity control.

The statistic at a candidate changepoint k is

    T_k = (beta2_hat - beta1_hat) / sd(beta2_hat - beta1_hat),

where both slopes, the AR(1) parameters and the contrast sd all come from a
joint generalised-least-squares fit of the single-changepoint continuous
trend with exact AR(1) likelihood at that k.  T_max is the largest |T_k|
over changepoint times truncated 10% from each series boundary; its null
distribution is simulated, with every simulated series pushed through the
same per-k fitting recipe as the data, so the test is calibrated by
construction.

Two-sided throughout: a surge and a slowdown are treated symmetrically.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ar, trend
from .exceptions import DomainError
from .types import AnnualSeries, ModelSpec, Segmentation

# Replicates are simulated in fixed-size chunks; chunk c draws from the
# (seed, c) stream, so results never depend on worker count or scheduling.
CHUNK = 4096
PHI_BOUND = 0.999
FIT_TOL = 1e-10
FIT_MAX_ITER = 40


@dataclass(frozen=True)
class NullParams:
    """No-surge model parameters: X_t = alpha1 + beta1 t + AR(1) noise."""

    alpha1: float
    beta1: float
    phi: float
    sigma: float
    n: int

    def __post_init__(self):
        if abs(self.phi) >= 1.0:
            raise DomainError(f"|phi| must be < 1, got {self.phi}")
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")
        if self.n < 10:
            raise DomainError("need n >= 10")


@dataclass(frozen=True)
class ChangepointFit:
    """Joint single-changepoint fit summary at a fixed k."""

    k: int
    beta1: float
    beta2: float
    phi: float
    sigma: float
    sd: float
    t: float


@dataclass(frozen=True)
class McQuantile:
    """Simulated null quantile of T_max with its Monte Carlo uncertainty."""

    q: float
    se: float
    level: float
    reps: int
    n: int


@dataclass(frozen=True)
class SurgeGrid:
    """Minimum detectable surge magnitudes over (surge year x vantage year).

    ``min_pct[i, j]`` is the percent trend change needed for the surge
    starting after ``surge_years[i]`` to be detectable by ``vantage_years[j]``
    at the grid's significance level; ``min_slope`` holds the corresponding
    post-surge slopes and ``base_slopes`` the pre-surge reference slopes.
    """

    surge_years: tuple
    vantage_years: tuple
    min_pct: np.ndarray
    min_slope: np.ndarray
    base_slopes: np.ndarray
    quantiles: tuple
    level: float
    reps: int

    def to_rows(self) -> list:
        rows = []
        for i, sy in enumerate(self.surge_years):
            for j, vy in enumerate(self.vantage_years):
                rows.append({
                    "surge_year": sy, "vantage_year": vy,
                    "min_pct": float(self.min_pct[i, j]),
                    "min_slope": float(self.min_slope[i, j]),
                })
        return rows


def admissible_range(n: int) -> tuple:
    """(l, u) = (ceil(0.1 N), floor(0.9 N)): candidate times truncated 10%."""
    return int(math.ceil(0.1 * n)), int(math.floor(0.9 * n))


def fit_changepoint(series, k: int) -> ChangepointFit:
    """Joint GLS + exact AR(1) fit of the single continuous changepoint model.

    Returns the two segment slopes, the fitted AR(1) parameters, the contrast
    sd built from them, and the resulting T_k.
    """
    y = series.values if isinstance(series, AnnualSeries) else np.asarray(series, float)
    n = y.size
    if not 2 <= k <= n - 2:
        raise DomainError(f"changepoint {k} leaves an empty segment (N={n})")
    spec = ModelSpec(trend="continuous", errors="global_ar", ar_order=1,
                     min_seg_len=2)
    fit = trend.fit_at(y, Segmentation((k,)), spec, validate_min_seg=False)
    phi = float(fit.phis[0])
    sigma = float(fit.sigmas[0])
    sd = trend.contrast_sd(n, k, phi, sigma)
    b1, b2 = float(fit.betas[0]), float(fit.betas[1])
    return ChangepointFit(k=k, beta1=b1, beta2=b2, phi=phi, sigma=sigma,
                          sd=sd, t=(b2 - b1) / sd)


def t_statistic(series, k: int) -> float:
    """T_k at a fixed candidate changepoint (1-based index).

    ``k`` must lie in the admissible (10%-truncated) range.
    """
    y = series.values if isinstance(series, AnnualSeries) else np.asarray(series, float)
    lo, hi = admissible_range(y.size)
    if not lo <= k <= hi:
        raise DomainError(f"k={k} outside admissible range {lo}..{hi}")
    return fit_changepoint(y, k).t


def t_max(series) -> tuple:
    """(T_max, k_hat): the largest |T_k| over the admissible range.

    Ties go to the earliest k.
    """
    y = series.values if isinstance(series, AnnualSeries) else np.asarray(series, float)
    n = y.size
    if n < 20:
        raise DomainError("need N >= 20 for the truncated scan")
    lo, hi = admissible_range(n)
    best_t, best_k = -np.inf, lo
    for k in range(lo, hi + 1):
        tk = abs(fit_changepoint(y, k).t)
        if tk > best_t:
            best_t, best_k = tk, k
    return float(best_t), int(best_k)


# ---------------------------------------------------------------------------
# Vectorised Monte Carlo engine.  Whitening a design X under AR(1) makes all
# cross-products quadratic polynomials in phi with fixed coefficient
# matrices, so a handful of matmuls per chunk supports the whole GLS <->
# AR(1) iteration for every candidate k at once, without ever forming
# residual vectors.  All iteration state lives in (reps, K) arrays.
# ---------------------------------------------------------------------------

class _ScanDesign:
    """Fixed matrices for the whitened normal equations of every candidate k.

    For each k the design is X_k = [1, t, (t-k)+]; the whitened Gram matrix
    is A - phi B + phi^2 C with A = X'X, B = X[1:]'X[:-1] + its transpose,
    and C = X[:-1]'X[:-1] - X_1 X_1'.  Entries are stored per k as (K,)
    arrays so every fit step is elementwise over (reps, K).
    """

    def __init__(self, n: int, ks):
        self.n = n
        self.ks = tuple(int(k) for k in ks)
        K = len(self.ks)
        t = np.arange(1.0, n + 1.0)
        self.t = t
        H = np.maximum(t[:, None] - np.asarray(self.ks, float)[None, :], 0.0)
        self.H = H
        A = np.empty((K, 3, 3))
        B = np.empty((K, 3, 3))
        C = np.empty((K, 3, 3))
        B1 = np.empty((K, 3, 3))
        xf = np.empty((K, 3))
        xl = np.empty((K, 3))
        for j, k in enumerate(self.ks):
            X = np.column_stack([np.ones(n), t, H[:, j]])
            A[j] = X.T @ X
            B1[j] = X[1:].T @ X[:-1]
            B[j] = B1[j] + B1[j].T
            C[j] = X[:-1].T @ X[:-1] - np.outer(X[0], X[0])
            xf[j] = X[0]
            xl[j] = X[-1]
        self.A, self.B, self.C, self.B1 = A, B, C, B1
        self.x_first, self.x_last = xf, xl


def _sym_solve3(m00, m01, m02, m11, m12, m22, v0, v1, v2):
    """Elementwise symmetric 3x3 solve via the adjugate.

    Returns (b0, b1, b2, inv22) where inv22 is the (2, 2) entry of the
    inverse (the contrast variance factor).
    """
    co00 = m11 * m22 - m12 * m12
    co01 = m02 * m12 - m01 * m22
    co02 = m01 * m12 - m02 * m11
    co11 = m00 * m22 - m02 * m02
    co12 = m01 * m02 - m00 * m12
    co22 = m00 * m11 - m01 * m01
    det = m00 * co00 + m01 * co01 + m02 * co02
    b0 = (co00 * v0 + co01 * v1 + co02 * v2) / det
    b1 = (co01 * v0 + co11 * v1 + co12 * v2) / det
    b2 = (co02 * v0 + co12 * v1 + co22 * v2) / det
    return b0, b1, b2, co22 / det


def _phi_profile_deriv(phi, a, b, c, n):
    q = a - 2.0 * phi * b + phi * phi * c
    return n * (2.0 * phi * c - 2.0 * b) / q + 2.0 * phi / (1.0 - phi * phi)


def _phi_ml_grid(a, b, c, n):
    """Grid bracket plus derivative bisection for the exact AR(1) ML in phi."""
    grid = np.linspace(-0.98, 0.98, 41)
    best = np.zeros_like(a)
    bestval = np.full_like(a, np.inf)
    for phi in grid:
        q = a - 2.0 * phi * b + phi * phi * c
        val = n * np.log(q) - math.log1p(-(phi * phi))
        better = val < bestval
        bestval = np.where(better, val, bestval)
        best = np.where(better, phi, best)
    lo = np.maximum(best - 0.049, -PHI_BOUND)
    hi = np.minimum(best + 0.049, PHI_BOUND)
    for _ in range(45):
        mid = 0.5 * (lo + hi)
        up = _phi_profile_deriv(mid, a, b, c, n) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return 0.5 * (lo + hi)


def _phi_ml_newton(phi, a, b, c, n):
    """Safeguarded Newton refinement of the phi ML from a nearby start."""
    for _ in range(4):
        q = a - 2.0 * phi * b + phi * phi * c
        dq = 2.0 * phi * c - 2.0 * b
        g = n * dq / q + 2.0 * phi / (1.0 - phi * phi)
        h = n * (2.0 * c * q - dq * dq) / (q * q) \
            + 2.0 * (1.0 + phi * phi) / (1.0 - phi * phi) ** 2
        step = g / np.where(h > 1e-12, h, 1e-12)
        phi = np.clip(phi - np.clip(step, -0.1, 0.1), -PHI_BOUND, PHI_BOUND)
    return phi


class _ChunkFit:
    """Joint per-k fit state for one chunk of replicate series."""

    def __init__(self, Y: np.ndarray, design: _ScanDesign):
        n = design.n
        H = design.H
        s1 = Y.sum(axis=1)
        st = Y @ design.t
        y1 = Y[:, 0]
        yn = Y[:, -1]
        SH = Y @ H
        SHa = Y[:, :-1] @ H[1:]
        SHb = Y[:, 1:] @ H[:-1]
        SHc = Y[:, :-1] @ H[:-1]
        self.n = n
        self.yy = np.einsum("ij,ij->i", Y, Y)[:, None]
        self.yly = np.einsum("ij,ij->i", Y[:, 1:], Y[:, :-1])[:, None]
        self.y1 = y1[:, None]
        self.yn = yn[:, None]
        # Cross moments of y against each design column, for the identity,
        # lag and lead weightings (phi-polynomial coefficients of X~'y~;
        # the hinge is 0 at t = 1 so P2 needs no first-term correction).
        self.P0 = ((s1)[:, None], (st)[:, None], SH)
        self.P1a = ((s1 - yn)[:, None], (st - n * yn + s1 - yn)[:, None], SHa)
        self.P1b = ((s1 - y1)[:, None], (st - s1)[:, None], SHb)
        self.P2 = ((s1 - yn - y1)[:, None], (st - n * yn - y1)[:, None], SHc)
        self.d = design

    def _gls(self, phi):
        d = self.d
        p2 = phi * phi

        def gram(i, j):
            return d.A[:, i, j] - phi * d.B[:, i, j] + p2 * d.C[:, i, j]

        def rhs(i):
            return self.P0[i] - phi * (self.P1a[i] + self.P1b[i]) + p2 * self.P2[i]

        return _sym_solve3(gram(0, 0), gram(0, 1), gram(0, 2),
                           gram(1, 1), gram(1, 2), gram(2, 2),
                           rhs(0), rhs(1), rhs(2))

    def _resid_stats(self, b0, b1, b2):
        d = self.d
        A, B1 = d.A, d.B1
        quad = (b0 * b0 * A[:, 0, 0] + b1 * b1 * A[:, 1, 1] + b2 * b2 * A[:, 2, 2]
                + 2.0 * (b0 * b1 * A[:, 0, 1] + b0 * b2 * A[:, 0, 2]
                         + b1 * b2 * A[:, 1, 2]))
        dot0 = b0 * self.P0[0] + b1 * self.P0[1] + b2 * self.P0[2]
        a_e = self.yy - 2.0 * dot0 + quad
        bilin = (b0 * (B1[:, 0, 0] * b0 + B1[:, 0, 1] * b1 + B1[:, 0, 2] * b2)
                 + b1 * (B1[:, 1, 0] * b0 + B1[:, 1, 1] * b1 + B1[:, 1, 2] * b2)
                 + b2 * (B1[:, 2, 0] * b0 + B1[:, 2, 1] * b1 + B1[:, 2, 2] * b2))
        dota = b0 * self.P1a[0] + b1 * self.P1a[1] + b2 * self.P1a[2]
        dotb = b0 * self.P1b[0] + b1 * self.P1b[1] + b2 * self.P1b[2]
        b_e = self.yly - dota - dotb + bilin
        e1 = self.y1 - (b0 * d.x_first[:, 0] + b1 * d.x_first[:, 1]
                        + b2 * d.x_first[:, 2])
        en = self.yn - (b0 * d.x_last[:, 0] + b1 * d.x_last[:, 1]
                        + b2 * d.x_last[:, 2])
        c_e = a_e - e1 * e1 - en * en
        return a_e, b_e, c_e

    def tk_abs(self) -> np.ndarray:
        """(reps, K) array of |T_k| after the joint GLS/AR iteration."""
        n = self.n
        phi = np.zeros((self.yy.shape[0], len(self.d.ks)))
        for it in range(FIT_MAX_ITER):
            b0, b1, b2, inv22 = self._gls(phi)
            a_e, b_e, c_e = self._resid_stats(b0, b1, b2)
            if it == 0:
                new_phi = _phi_ml_grid(a_e, b_e, c_e, n)
            else:
                new_phi = _phi_ml_newton(phi, a_e, b_e, c_e, n)
            delta = float(np.max(np.abs(new_phi - phi)))
            phi = new_phi
            if delta < FIT_TOL:
                break
        b0, b1, b2, inv22 = self._gls(phi)
        a_e, b_e, c_e = self._resid_stats(b0, b1, b2)
        s2 = (a_e - 2.0 * phi * b_e + phi * phi * c_e) / n
        return np.abs(b2) / np.sqrt(s2 * inv22)


def _tmax_chunk(null: NullParams, n: int, design: _ScanDesign, reps: int,
                seed: int, chunk_index: int) -> np.ndarray:
    rng = ar.rng_stream(seed, chunk_index)
    eps = ar.simulate_ar1_matrix(ar.ArModel((null.phi,) if null.phi else (),
                                            null.sigma), n, reps, rng)
    Y = null.alpha1 + null.beta1 * design.t + eps
    return _ChunkFit(Y, design).tk_abs().max(axis=1)


def simulate_tmax(null: NullParams, n: int = None, reps: int = 10000,
                  seed: int = 0, threads: int = 1) -> np.ndarray:
    """Simulated null T_max sample (one value per replicate).

    Replicate c*CHUNK+i always sees the same noise for a given seed, so the
    returned sample is invariant to ``threads``.
    """
    n = null.n if n is None else int(n)
    if n < 20:
        raise DomainError("need n >= 20")
    if reps < 1:
        raise DomainError("need reps >= 1")
    lo, hi = admissible_range(n)
    design = _ScanDesign(n, range(lo, hi + 1))
    sizes = [CHUNK] * (reps // CHUNK)
    if reps % CHUNK:
        sizes.append(reps % CHUNK)
    jobs = [(null, n, design, size, seed, idx)
            for idx, size in enumerate(sizes)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda args: _tmax_chunk(*args), jobs))
    else:
        parts = [_tmax_chunk(*args) for args in jobs]
    return np.concatenate(parts)


def mc_null_quantile(null: NullParams, n: int = None, reps: int = 100000,
                     level: float = 0.95, seed: int = 0,
                     threads: int = 1) -> McQuantile:
    """Simulated level-quantile Q_N of the null T_max distribution.

    The quantile uses linear order-statistic interpolation; the reported
    ``se`` comes from the distribution-free order-statistic confidence
    interval for the quantile.
    """
    if reps < 1000:
        raise DomainError("need reps >= 1000 for a stable tail quantile")
    if not 0.0 < level < 1.0:
        raise DomainError("level must be in (0, 1)")
    n = null.n if n is None else int(n)
    sample = np.sort(simulate_tmax(null, n, reps, seed, threads))
    q = float(np.quantile(sample, level))
    half = 1.959964 * math.sqrt(level * (1.0 - level) / reps)
    ilo = min(max(int(math.floor((level - half) * reps)), 0), reps - 1)
    ihi = min(max(int(math.ceil((level + half) * reps)), 0), reps - 1)
    se = float((sample[ihi] - sample[ilo]) / (2.0 * 1.959964))
    return McQuantile(q=q, se=se, level=level, reps=reps, n=n)


def min_detectable_slope(null: NullParams, k: int, n_v: int, q: float) -> tuple:
    """Smallest post-changepoint slope declarable as a surge.

    Inverts T_k = q for the second-segment slope: beta2_min = beta1 +
    q * sd(beta2 - beta1), with the contrast sd built from the segment
    lengths implied by (k, n_v) and the AR(1) parameters carried by
    ``null``.  Returns (beta2_min, pct_change).
    """
    if n_v - k < 3:
        raise DomainError("second segment needs at least 3 observations")
    lo, hi = admissible_range(n_v)
    if not lo <= k <= hi:
        raise DomainError(f"k={k} outside admissible range {lo}..{hi} for N={n_v}")
    if q < 0:
        raise DomainError("quantile must be nonnegative")
    sd = trend.contrast_sd(n_v, k, null.phi, null.sigma)
    beta2 = null.beta1 + q * sd
    pct = 100.0 * (beta2 - null.beta1) / null.beta1
    return float(beta2), float(pct)


def surge_grid(null: NullParams, surge_years, vantage_years, reps: int = 100000,
               seed: int = 0, level: float = 0.95, threads: int = 1,
               start_year: int = 1970, per_year_params: dict = None) -> SurgeGrid:
    """Minimum detectable surge magnitude over a (surge year x vantage year) grid.

    For each vantage year the null T_max quantile is separately simulated at
    the extended series length (AR parameters stay at their observed-period
    estimates); each cell then solves for the minimally significant slope
    assuming the scan statistic lands on that surge year.

    ``per_year_params`` optionally maps a surge year to (beta1, phi, sigma)
    estimated from data at that changepoint; cells fall back to the constant
    ``null`` parameters when absent.
    """
    surge_years = tuple(int(y) for y in surge_years)
    vantage_years = tuple(int(y) for y in vantage_years)
    if not surge_years or not vantage_years:
        raise DomainError("empty grid ranges")
    S, V = len(surge_years), len(vantage_years)
    min_pct = np.empty((S, V))
    min_slope = np.empty((S, V))
    base = np.empty(S)
    quantiles = []
    for j, vy in enumerate(vantage_years):
        n_v = vy - start_year + 1
        mc = mc_null_quantile(null, n=n_v, reps=reps, level=level,
                              seed=seed + j, threads=threads)
        quantiles.append(mc.q)
        for i, sy in enumerate(surge_years):
            k = sy - start_year + 1
            if per_year_params and sy in per_year_params:
                b1, phi, sig = per_year_params[sy]
            else:
                b1, phi, sig = null.beta1, null.phi, null.sigma
            cell = NullParams(null.alpha1, b1, phi, sig, null.n)
            beta2, pct = min_detectable_slope(cell, k, n_v, mc.q)
            min_slope[i, j] = beta2
            min_pct[i, j] = pct
            base[i] = b1
    return SurgeGrid(surge_years=surge_years, vantage_years=vantage_years,
                     min_pct=min_pct, min_slope=min_slope, base_slopes=base,
                     quantiles=tuple(quantiles), level=level, reps=reps)


def surge_grid_from_series(series: AnnualSeries, surge_years, vantage_years,
                           reps: int = 100000, seed: int = 0,
                           level: float = 0.95, threads: int = 1) -> SurgeGrid:
    """Grid driven by a fitted series: the no-surge simulation parameters
    come from the single-line AR(1) fit and each surge year's reference
    slope and AR parameters come from the changepoint fit at that year."""
    null = null_params_from_series(series)
    per_year = {}
    for sy in surge_years:
        k = series.index_of_year(int(sy))
        cf = fit_changepoint(series, k)
        per_year[int(sy)] = (cf.beta1, cf.phi, cf.sigma)
    return surge_grid(null, surge_years, vantage_years, reps=reps, seed=seed,
                      level=level, threads=threads,
                      start_year=series.start_year, per_year_params=per_year)


def null_params_from_series(series: AnnualSeries) -> NullParams:
    """Single-line exact AR(1) ML fit: the no-surge simulation parameters."""
    spec = ModelSpec(trend="continuous", errors="global_ar", ar_order=1,
                     min_seg_len=2)
    fit = trend.fit_at(series.values, Segmentation(()), spec)
    return NullParams(alpha1=float(fit.alphas[0]), beta1=float(fit.betas[0]),
                      phi=float(fit.phis[0]), sigma=float(fit.sigmas[0]),
                      n=series.n)
