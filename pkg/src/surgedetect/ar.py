"""AR(p) estimation, exact Gaussian likelihood, simulation, and sample ACF.

The likelihood is always the *exact* stationary Gaussian likelihood (the
first p observations get their stationary joint distribution), not the
conditional least-squares approximation: the series handled here are short
and conditioning discards information that visibly shifts test quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import ConvergenceError, DomainError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ArModel:
    """A causal AR(p) process with Gaussian innovations.

    ``phis`` are the coefficients of eps_t = phi_1 eps_{t-1} + ... + Z_t;
    ``sigma`` is the innovation standard deviation.  ``order`` 0 means
    independent noise.
    """

    phis: tuple = ()
    sigma: float = 1.0

    def __post_init__(self):
        phis = tuple(float(p) for p in self.phis)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.sigma <= 0:
            raise DomainError(f"innovation sd must be positive, got {self.sigma}")
        if phis and not is_stationary(phis):
            raise DomainError(f"AR coefficients {phis} are not stationary")

    @property
    def order(self) -> int:
        return len(self.phis)


def is_stationary(phis) -> bool:
    """True if all roots of 1 - phi_1 z - ... - phi_p z^p are outside the unit circle."""
    phis = np.asarray(phis, dtype=float)
    if phis.size == 0:
        return True
    if phis.size == 1:
        return abs(phis[0]) < 1.0
    # roots of z^p - phi_1 z^{p-1} - ... - phi_p  (reciprocal polynomial)
    roots = np.roots(np.concatenate([[1.0], -phis]))
    return bool(np.all(np.abs(roots) < 1.0))


def ar_autocov(phis, sigma: float, nlags: int) -> np.ndarray:
    """Theoretical autocovariances gamma_0..gamma_nlags of a stationary AR(p).

    Solves the Yule-Walker system for the first p+1 lags and extends by the
    AR recursion gamma_k = sum_j phi_j gamma_{k-j}.
    """
    phis = np.asarray(phis, dtype=float)
    p = phis.size
    s2 = float(sigma) ** 2
    if p == 0:
        g = np.zeros(nlags + 1)
        g[0] = s2
        return g
    if not is_stationary(phis):
        raise DomainError("autocovariance requested for nonstationary model")
    # Unknowns gamma_0..gamma_p from:
    #   gamma_0 = sum_j phi_j gamma_j + sigma^2
    #   gamma_k = sum_j phi_j gamma_{|k-j|},  k = 1..p
    A = np.zeros((p + 1, p + 1))
    b = np.zeros(p + 1)
    A[0, 0] = 1.0
    A[0, 1:] = -phis
    b[0] = s2
    for k in range(1, p + 1):
        A[k, k] += 1.0
        for j in range(1, p + 1):
            A[k, abs(k - j)] -= phis[j - 1]
        b[k] = 0.0
    g = np.linalg.solve(A, b)
    out = np.empty(nlags + 1)
    out[: min(p, nlags) + 1] = g[: min(p, nlags) + 1]
    for k in range(p + 1, nlags + 1):
        out[k] = np.dot(phis, out[k - 1 : k - p - 1 : -1])
    return out


def _initial_block(phis) -> tuple:
    """Cholesky factor of the unit-innovation stationary covariance of the
    first p observations, plus its log-determinant."""
    phis = np.asarray(phis, dtype=float)
    p = phis.size
    g = ar_autocov(phis, 1.0, p)
    V = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            V[i, j] = g[abs(i - j)]
    L = np.linalg.cholesky(V)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return L, logdet


def whiten(x: np.ndarray, phis) -> tuple:
    """Transform a series (or design column) so a stationary AR(p) with unit
    innovation sd becomes iid unit noise.

    Returns (w, logdet_V) where w = L^{-1} x for the exact covariance factor
    and logdet_V is the log-determinant of the unit-innovation covariance of
    the initial p-block (needed by the likelihood).  Works on 1-D or 2-D
    arrays (columns transformed independently).
    """
    x = np.asarray(x, dtype=float)
    phis = np.asarray(phis, dtype=float)
    p = phis.size
    if p == 0:
        return x.copy(), 0.0
    one_d = x.ndim == 1
    X = x[:, None] if one_d else x
    n = X.shape[0]
    if n <= p:
        raise DomainError(f"series of length {n} too short for AR({p}) whitening")
    W = np.empty_like(X)
    if p == 1:
        phi = phis[0]
        W[0] = math.sqrt(1.0 - phi * phi) * X[0]
        W[1:] = X[1:] - phi * X[:-1]
        logdet = -math.log(1.0 - phi * phi)
    else:
        L, logdet = _initial_block(phis)
        W[:p] = np.linalg.solve(L, X[:p])
        W[p:] = X[p:]
        for j in range(1, p + 1):
            W[p:] = W[p:] - phis[j - 1] * X[p - j : n - j]
    return (W[:, 0] if one_d else W), logdet


def ar_loglik(eps: np.ndarray, model: ArModel) -> float:
    """Exact Gaussian log-likelihood of a residual series under ``model``.

    Uses the prediction-error decomposition: the first p observations get
    their stationary joint density, the rest contribute one-step innovation
    terms (eps_t - sum_j phi_j eps_{t-j}) with variance sigma^2.
    """
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    p = model.order
    if n <= p:
        raise DomainError(f"need more than {p} observations for AR({p}) likelihood")
    if p == 0:
        s2 = model.sigma**2
        return -0.5 * (n * (LOG_2PI + math.log(s2)) + float(np.dot(eps, eps)) / s2)
    w, logdet = whiten(eps, model.phis)
    s2 = model.sigma**2
    qform = float(np.dot(w, w))
    return -0.5 * (n * (LOG_2PI + math.log(s2)) + logdet + qform / s2)


def _ar1_profile_stats(eps: np.ndarray) -> tuple:
    """Sufficient statistics (a, b, c) with quadratic form Q(phi) = a - 2 phi b + phi^2 c."""
    a = float(np.dot(eps, eps))
    b = float(np.dot(eps[1:], eps[:-1]))
    c = a - float(eps[0] ** 2) - float(eps[-1] ** 2)
    return a, b, c


def ar1_profile_neg2ll(phi, a, b, c, n):
    """-2 ln L profiled over sigma^2, up to the constant n(1 + ln 2pi - ln n)."""
    q = a - 2.0 * phi * b + phi**2 * c
    return n * np.log(q) - np.log1p(-(phi**2))


def fit_ar1_exact(eps: np.ndarray) -> tuple:
    """Exact ML fit of a stationary AR(1) to a residual series.

    Profiles sigma^2 out analytically (sigma_hat^2 = Q(phi)/n) and solves the
    1-D problem in phi by grid bracketing plus bisection on the derivative.
    Returns (phi_hat, sigma_hat, loglik).
    """
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    if n < 3:
        raise DomainError("need at least 3 observations to fit an AR(1)")
    a, b, c = _ar1_profile_stats(eps)
    if a <= 0:
        raise DomainError("degenerate residual series (zero variance)")
    grid = np.linspace(-0.995, 0.995, 81)
    vals = ar1_profile_neg2ll(grid, a, b, c, n)
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]

    def deriv(phi):
        q = a - 2.0 * phi * b + phi**2 * c
        return n * (2.0 * phi * c - 2.0 * b) / q + 2.0 * phi / (1.0 - phi**2)

    dlo, dhi = deriv(lo), deriv(hi)
    if dlo > 0 or dhi < 0:
        phi = grid[i]
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if deriv(mid) > 0:
                hi = mid
            else:
                lo = mid
        phi = 0.5 * (lo + hi)
    q = a - 2.0 * phi * b + phi**2 * c
    s2 = q / n
    if s2 <= 0 or not np.isfinite(s2):
        raise DomainError("degenerate residual series (zero innovation variance)")
    ll = -0.5 * (n * (LOG_2PI + math.log(s2)) + math.log(1.0 / (1.0 - phi**2)) + n)
    return float(phi), float(math.sqrt(s2)), float(ll)


def yule_walker(eps: np.ndarray, p: int) -> np.ndarray:
    """Yule-Walker AR(p) coefficient estimate (biased ACF denominator)."""
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    e = eps - eps.mean()
    g = np.array([float(np.dot(e[: n - k], e[k:])) / n for k in range(p + 1)])
    if g[0] <= 0:
        raise DomainError("degenerate series (zero variance)")
    R = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            R[i, j] = g[abs(i - j)]
    return np.linalg.solve(R, g[1 : p + 1])


def _pacf_to_ar(kappas: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations to AR coefficients."""
    phis = np.array([kappas[0]])
    for k in range(1, kappas.size):
        prev = phis
        phis = np.empty(k + 1)
        phis[k] = kappas[k]
        phis[:k] = prev - kappas[k] * prev[::-1]
    return phis


def _ar_to_pacf(phis: np.ndarray) -> np.ndarray:
    """Inverse Durbin-Levinson map (AR coefficients to partials)."""
    phis = np.asarray(phis, dtype=float)
    p = phis.size
    kappas = np.empty(p)
    work = phis.copy()
    for k in range(p - 1, -1, -1):
        kappas[k] = work[k]
        if k > 0:
            denom = 1.0 - work[k] ** 2
            if denom <= 0:
                raise DomainError("coefficients on the stationarity boundary")
            work = (work[:k] + work[k] * work[:k][::-1]) / denom
    return kappas


def fit_ar(eps: np.ndarray, p: int) -> tuple:
    """Exact ML fit of a stationary AR(p); returns (ArModel, loglik).

    The optimiser works in the partial-autocorrelation parametrisation
    (each partial mapped through tanh), which keeps every iterate inside
    the stationary region; the Yule-Walker estimate seeds the search.
    """
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    if p < 0:
        raise DomainError("order must be nonnegative")
    if n < p + 2:
        raise DomainError(f"need at least {p + 2} observations for AR({p})")
    if float(np.dot(eps, eps)) == 0.0:
        raise DomainError("degenerate residual series (all zeros)")
    if p == 0:
        s2 = float(np.dot(eps, eps)) / n
        model = ArModel((), math.sqrt(s2))
        return model, ar_loglik(eps, model)
    if p == 1:
        phi, sigma, ll = fit_ar1_exact(eps)
        return ArModel((phi,), sigma), ll

    def neg2_profile(z):
        kappas = np.tanh(z)
        phis = _pacf_to_ar(kappas)
        w, logdet = whiten(eps, phis)
        q = float(np.dot(w, w))
        return n * math.log(q / n) + logdet

    try:
        phis0 = yule_walker(eps, p)
        if not is_stationary(phis0):
            phis0 = phis0 * 0.5
        k0 = _ar_to_pacf(phis0)
        k0 = np.clip(k0, -0.98, 0.98)
    except (DomainError, np.linalg.LinAlgError):
        k0 = np.zeros(p)
    res = optimize.minimize(neg2_profile, np.arctanh(k0), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    kappas = np.tanh(res.x)
    if np.any(np.abs(kappas) > 0.9999):
        raise ConvergenceError("AR fit terminated at the stationarity boundary")
    phis = _pacf_to_ar(kappas)
    w, logdet = whiten(eps, phis)
    s2 = float(np.dot(w, w)) / n
    if s2 <= 0:
        raise DomainError("degenerate residual series (zero innovation variance)")
    model = ArModel(tuple(phis), math.sqrt(s2))
    return model, ar_loglik(eps, model)


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for a (seed, stream) pair.

    Streams derived from the same seed are statistically independent, and a
    stream depends only on its index, never on execution order or worker
    count.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def simulate_ar1(model: ArModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Simulate a strictly stationary Gaussian AR(1) path of length n.

    eps_1 is drawn from the stationary distribution N(0, sigma^2/(1-phi^2));
    later values follow eps_t = phi eps_{t-1} + Z_t.  Bit-reproducible for a
    fixed generator state.
    """
    if model.order > 1:
        raise DomainError("simulate_ar1 handles orders 0 and 1 only")
    if n < 1:
        raise DomainError("need n >= 1")
    phi = model.phis[0] if model.order == 1 else 0.0
    z = rng.standard_normal(n) * model.sigma
    eps = np.empty(n)
    eps[0] = z[0] / math.sqrt(1.0 - phi**2)
    for t in range(1, n):
        eps[t] = phi * eps[t - 1] + z[t]
    return eps


def simulate_ar1_matrix(model: ArModel, n: int, reps: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Simulate ``reps`` independent stationary AR(1) paths as a (reps, n) array."""
    if model.order > 1:
        raise DomainError("simulate_ar1_matrix handles orders 0 and 1 only")
    phi = model.phis[0] if model.order == 1 else 0.0
    z = rng.standard_normal((reps, n)) * model.sigma
    eps = np.empty((reps, n))
    eps[:, 0] = z[:, 0] / math.sqrt(1.0 - phi**2)
    for t in range(1, n):
        eps[:, t] = phi * eps[:, t - 1] + z[:, t]
    return eps


def sample_acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations r_1..r_max_lag (biased N-denominator estimator)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if max_lag >= n:
        raise DomainError(f"max_lag {max_lag} must be < series length {n}")
    if max_lag < 1:
        raise DomainError("max_lag must be >= 1")
    e = x - x.mean()
    g0 = float(np.dot(e, e)) / n
    if g0 == 0.0:
        raise DomainError("constant series has no autocorrelation")
    return np.array([float(np.dot(e[: n - k], e[k:])) / n / g0
                     for k in range(1, max_lag + 1)])
