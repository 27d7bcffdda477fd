"""Maximum-likelihood piecewise linear trend fitting at a fixed segmentation.

The regression and AR parameters are estimated jointly by iterating
generalised-least-squares on a whitened design against exact AR refits on
the residuals, until the log-likelihood stabilises.  Continuity is imposed
algebraically through a hinge basis, so continuous fits satisfy the join
restrictions to machine precision by construction.
"""

from __future__ import annotations

import math

import numpy as np

from . import ar
from .exceptions import ConvergenceError, DomainError
from .types import AnnualSeries, FitResult, ModelSpec, Segmentation, penalty_value

GLS_TOL = 1e-8
GLS_MAX_ITER = 100


def design_matrix(n: int, taus, trend: str) -> np.ndarray:
    """Trend basis for a given changepoint configuration.

    Continuous fits use the hinge basis [1, t, (t - tau_1)+, ...] with
    m + 2 columns; discontinuous fits use per-segment intercept and slope
    indicators with 2(m + 1) columns.
    """
    t = np.arange(1, n + 1, dtype=float)
    taus = tuple(int(x) for x in taus)
    if trend == "continuous":
        cols = [np.ones(n), t]
        cols += [np.maximum(t - tau, 0.0) for tau in taus]
        return np.column_stack(cols)
    bounds = (0,) + taus + (n,)
    cols = []
    for a, b in zip(bounds, bounds[1:]):
        ind = np.zeros(n)
        ind[a:b] = 1.0
        cols.append(ind)
        cols.append(ind * t)
    return np.column_stack(cols)


def coeffs_to_segments(coeffs: np.ndarray, taus, trend: str) -> tuple:
    """Convert basis coefficients to per-segment (alphas, betas)."""
    m = len(taus)
    if trend == "continuous":
        a, b = coeffs[0], coeffs[1]
        d = coeffs[2:]
        alphas = np.empty(m + 1)
        betas = np.empty(m + 1)
        alphas[0], betas[0] = a, b
        for i in range(m):
            betas[i + 1] = betas[i] + d[i]
            alphas[i + 1] = alphas[i] - d[i] * taus[i]
        return alphas, betas
    return coeffs[0::2].copy(), coeffs[1::2].copy()


def _whiten_blocks(mat: np.ndarray, segments, phis, sigmas) -> np.ndarray:
    """Per-segment AR(1) whitening with rows scaled to unit variance."""
    out = np.empty_like(mat)
    for (a, b), phi, sig in zip(segments, phis, sigmas):
        block = mat[a - 1 : b]
        w, _ = ar.whiten(block, (phi,) if phi != 0.0 else ())
        out[a - 1 : b] = w / sig
    return out


def _gls_solve(Xw: np.ndarray, yw: np.ndarray) -> np.ndarray:
    coeffs, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < Xw.shape[1]:
        raise DomainError(
            f"rank-deficient design (rank {rank} < {Xw.shape[1]} columns); "
            "every segment needs at least two observations"
        )
    return coeffs


def fit_at(series, seg: Segmentation, spec: ModelSpec,
           validate_min_seg: bool = True) -> FitResult:
    """Fit the trend model at a fixed changepoint configuration.

    Parameters
    ----------
    series : AnnualSeries or 1-D array
        Observations X_1..X_N.
    seg : Segmentation
        Changepoint times (may be empty).
    spec : ModelSpec
        Trend form, error model and penalty.
    validate_min_seg : bool
        Enforce ``spec.min_seg_len`` on the segmentation.  Internal callers
        that manage their own admissibility (the surge test allows short
        trailing segments) can switch this off; 2 observations per segment
        is always required.

    Returns
    -------
    FitResult

    Raises
    ------
    DomainError
        Rank-deficient design or invalid segmentation.
    ConvergenceError
        Iteration cap reached; the last iterate rides on the exception.
    """
    y = series.values if isinstance(series, AnnualSeries) else np.asarray(series, float)
    n = y.size
    seg.validate(n, spec.min_seg_len if validate_min_seg else 2)
    X = design_matrix(n, seg.taus, spec.trend)
    m = seg.m
    segments = seg.segments(n)
    penalty = penalty_value(m, spec, n)

    if spec.errors == "independent":
        coeffs = _gls_solve(X, y)
        resid = y - X @ coeffs
        s2 = float(np.dot(resid, resid)) / n
        if s2 <= 0:
            s2 = np.finfo(float).tiny
        loglik = -0.5 * n * (ar.LOG_2PI + math.log(s2) + 1.0)
        alphas, betas = coeffs_to_segments(coeffs, seg.taus, spec.trend)
        return FitResult(spec=spec, seg=seg, alphas=alphas, betas=betas,
                         phis=np.empty(0), sigmas=np.array([math.sqrt(s2)]),
                         loglik=loglik, objective=-2.0 * loglik + penalty,
                         resid=resid, innov=resid.copy(), n=n, n_iter=1)

    piecewise = spec.errors == "piecewise_ar1"
    p = spec.order
    n_units = m + 1 if piecewise else 1
    phis = [np.zeros(1 if piecewise else p) for _ in range(n_units)]
    sigmas = np.ones(n_units)

    # An exact (noise-free) fit degenerates the AR step; treat it as the
    # independent-noise limit so parameter recovery still works.
    coeffs0 = _gls_solve(X, y)
    resid0 = y - X @ coeffs0
    scale = max(1.0, float(np.max(np.abs(y))))
    if float(np.dot(resid0, resid0)) < n * (1e-12 * scale) ** 2:
        s = math.sqrt(max(float(np.dot(resid0, resid0)) / n, np.finfo(float).tiny))
        alphas, betas = coeffs_to_segments(coeffs0, seg.taus, spec.trend)
        loglik = -0.5 * n * (ar.LOG_2PI + 2.0 * math.log(s) + 1.0)
        return FitResult(spec=spec, seg=seg, alphas=alphas, betas=betas,
                         phis=np.zeros(n_units if piecewise else p),
                         sigmas=np.full(n_units, s), loglik=loglik,
                         objective=-2.0 * loglik + penalty, resid=resid0,
                         innov=resid0.copy(), n=n, n_iter=1)

    loglik = -np.inf
    coeffs = None
    converged = False
    for it in range(1, GLS_MAX_ITER + 1):
        if piecewise:
            Xw = _whiten_blocks(X, segments, [f[0] for f in phis], sigmas)
            yw = _whiten_blocks(y[:, None], segments, [f[0] for f in phis], sigmas)[:, 0]
        else:
            Xw, _ = ar.whiten(X, phis[0]) if np.any(phis[0]) else (X, 0.0)
            yw, _ = ar.whiten(y, phis[0]) if np.any(phis[0]) else (y, 0.0)
        coeffs = _gls_solve(Xw, yw)
        resid = y - X @ coeffs
        new_loglik = 0.0
        if piecewise:
            for i, (a, b) in enumerate(segments):
                phi, sig, ll = ar.fit_ar1_exact(resid[a - 1 : b])
                phis[i] = np.array([phi])
                sigmas[i] = sig
                new_loglik += ll
        else:
            model, ll = ar.fit_ar(resid, p)
            phis[0] = np.asarray(model.phis)
            sigmas[0] = model.sigma
            new_loglik = ll
        if abs(new_loglik - loglik) < GLS_TOL:
            loglik = new_loglik
            converged = True
            break
        loglik = new_loglik

    alphas, betas = coeffs_to_segments(coeffs, seg.taus, spec.trend)
    if piecewise:
        phi_arr = np.array([f[0] for f in phis])
        sig_arr = sigmas.copy()
        innov = np.empty(n)
        for i, (a, b) in enumerate(segments):
            innov[a - 1 : b] = ar.whiten(resid[a - 1 : b], (phi_arr[i],))[0]
    else:
        phi_arr = phis[0]
        sig_arr = np.array([sigmas[0]])
        innov = ar.whiten(resid, phi_arr)[0]
    result = FitResult(spec=spec, seg=seg, alphas=alphas, betas=betas,
                       phis=phi_arr, sigmas=sig_arr, loglik=loglik,
                       objective=-2.0 * loglik + penalty, resid=resid,
                       innov=innov, n=n, n_iter=it, converged=converged)
    if not result.converged:
        raise ConvergenceError(
            f"GLS/AR iteration did not converge in {GLS_MAX_ITER} steps", result)
    return result


def residuals(fit: FitResult) -> tuple:
    """(trend residuals, innovation residuals) of a converged fit."""
    return fit.resid.copy(), fit.innov.copy()


def contrast_sd(n: int, k: int, phi: float, sigma: float) -> float:
    """Standard deviation of the slope difference in the single-changepoint
    continuous model, for given series length and AR(1) parameters.

    This is the GLS contrast sd sqrt(c' (X' Sigma^-1 X)^-1 c) with c picking
    the hinge coefficient (= beta_2 - beta_1); it depends only on the two
    segment lengths and (phi, sigma).
    """
    if abs(phi) >= 1.0:
        raise DomainError(f"|phi| must be < 1, got {phi}")
    if not 1 <= k < n:
        raise DomainError(f"changepoint {k} outside 1..{n - 1}")
    X = design_matrix(n, (k,), "continuous")
    Xw, _ = ar.whiten(X, (phi,) if phi != 0.0 else ())
    G = np.linalg.inv(Xw.T @ Xw)
    return float(sigma * math.sqrt(G[2, 2]))


def slope_diff_variance(fit: FitResult, k: int = None) -> float:
    """Var(beta_2_hat - beta_1_hat) for a fitted single-changepoint
    continuous model, using the fit's own AR(1) parameters."""
    if fit.spec.trend != "continuous" or fit.m != 1:
        raise DomainError("requires a continuous fit with exactly one changepoint")
    if fit.spec.errors == "piecewise_ar1":
        raise DomainError("slope-difference variance needs a single AR(1) process")
    if fit.spec.errors == "global_ar" and fit.spec.ar_order != 1:
        raise DomainError("slope-difference variance is defined for AR(1) errors")
    tau = fit.seg.taus[0]
    if k is not None and k != tau:
        raise DomainError(f"k={k} does not match the fitted changepoint {tau}")
    phi = float(fit.phis[0]) if fit.phis.size else 0.0
    return contrast_sd(fit.n, tau, phi, float(fit.sigmas[0])) ** 2
