"""Penalized-likelihood optimisation over changepoint number and locations.

Three strategies share one objective, O(m; taus) = -2 ln L + penalty:

- ``pelt_search``: pruned-exact dynamic programming.  Requires a
  segment-additive cost, i.e. a discontinuous trend with per-segment error
  parameters; other specs are rejected with a pointer to ``exact_dp_search``.
- ``exact_dp_search``: exact optimisation for the coupled (continuous or
  global-error) models.  Uses segment-neighbourhood dynamic programming on
  an additive relaxation to bound and prune a depth-first enumeration where
  a sound bound exists, plain enumeration otherwise.
- ``exhaustive_search``: direct enumeration of every admissible
  configuration, kept as the slow reference strategy.

Ties are broken toward smaller m, then toward the lexicographically
earliest changepoint vector, so results are deterministic.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import ar, trend
from .exceptions import ConvergenceError, DomainError
from .types import (AnnualSeries, FitResult, ModelSpec, Segmentation,
                    param_count, penalty_value)

bic_penalty = penalty_value


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, AnnualSeries) else np.asarray(series, float)


def _line_ar1_cost(y: np.ndarray) -> float:
    """-2 max ln L of an unconstrained line with exact AR(1) errors on one segment."""
    n = y.size
    t = np.arange(1.0, n + 1.0)
    X = np.column_stack([np.ones(n), t])
    phi = 0.0
    prev = np.inf
    for _ in range(trend.GLS_MAX_ITER):
        if phi != 0.0:
            Xw, _ = ar.whiten(X, (phi,))
            yw, _ = ar.whiten(y, (phi,))
        else:
            Xw, yw = X, y
        coeffs, _, _, _ = np.linalg.lstsq(Xw, yw, rcond=None)
        resid = y - X @ coeffs
        rss = float(np.dot(resid, resid))
        if rss < n * (1e-12 * max(1.0, float(np.max(np.abs(y))))) ** 2:
            s2 = max(rss / n, np.finfo(float).tiny)
            return n * (ar.LOG_2PI + math.log(s2) + 1.0)
        phi, _, ll = ar.fit_ar1_exact(resid)
        cur = -2.0 * ll
        if abs(prev - cur) < trend.GLS_TOL:
            return cur
        prev = cur
    return prev


def _ols_rss_table(y: np.ndarray, min_len: int) -> np.ndarray:
    """rss[a, b] = per-segment OLS line RSS on 1-based inclusive interval (a, b).

    Computed from prefix sums in O(N^2); entries for intervals shorter than
    ``min_len`` are +inf.
    """
    n = y.size
    t = np.arange(1.0, n + 1.0)
    c1 = np.concatenate([[0.0], np.cumsum(np.ones(n))])
    ct = np.concatenate([[0.0], np.cumsum(t)])
    ctt = np.concatenate([[0.0], np.cumsum(t * t)])
    cy = np.concatenate([[0.0], np.cumsum(y)])
    cty = np.concatenate([[0.0], np.cumsum(t * y)])
    cyy = np.concatenate([[0.0], np.cumsum(y * y)])
    rss = np.full((n + 2, n + 1), np.inf)
    for a in range(1, n + 1):
        b = np.arange(a, n + 1)
        s1 = c1[b] - c1[a - 1]
        st = ct[b] - ct[a - 1]
        stt = ctt[b] - ctt[a - 1]
        sy = cy[b] - cy[a - 1]
        sty = cty[b] - cty[a - 1]
        syy = cyy[b] - cyy[a - 1]
        det = s1 * stt - st * st
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = (s1 * sty - st * sy) / det
            alpha = (sy - beta * st) / s1
            val = syy - alpha * sy - beta * sty
        val = np.where(b - a + 1 >= max(min_len, 2), np.maximum(val, 0.0), np.inf)
        rss[a, a:] = val
    return rss


def _ar1_cost_table(y: np.ndarray, min_len: int) -> np.ndarray:
    """cost[a, b] = -2 max ln L of line + exact AR(1) per interval; inf if too short."""
    n = y.size
    cost = np.full((n + 2, n + 1), np.inf)
    lo = max(min_len, 3)
    for a in range(1, n + 1):
        for b in range(a + lo - 1, n + 1):
            cost[a, b] = _line_ar1_cost(y[a - 1 : b])
    return cost


def _dp_additive(costs: np.ndarray, n: int, max_segments: int,
                 min_len: int) -> tuple:
    """Segment-neighbourhood DP on an additive interval cost.

    Returns (best, back) where best[r, s] is the minimal cost of splitting
    s..N into r segments and back[r, s] the first-segment end achieving it.
    """
    best = np.full((max_segments + 1, n + 2), np.inf)
    back = np.zeros((max_segments + 1, n + 2), dtype=int)
    best[1, 1 : n + 1] = costs[1 : n + 1, n]
    for r in range(2, max_segments + 1):
        for s in range(n - r * min_len + 1, 0, -1):
            # first segment s..e, remainder split into r-1 segments
            es = np.arange(s + min_len - 1, n - (r - 1) * min_len + 1)
            if es.size == 0:
                continue
            vals = costs[s, es] + best[r - 1, es + 1]
            i = int(np.argmin(vals))
            best[r, s] = vals[i]
            back[r, s] = es[i]
    return best, back


def _dp_config(back: np.ndarray, r: int) -> tuple:
    """Extract the changepoint vector for an r-segment DP solution."""
    taus = []
    s = 1
    for level in range(r, 1, -1):
        e = int(back[level, s])
        taus.append(e)
        s = e + 1
    return tuple(taus)


def _iter_configs(n: int, m: int, min_len: int):
    """Lexicographic generator of admissible changepoint vectors."""
    def rec(prefix, start, remaining):
        if remaining == 0:
            yield tuple(prefix)
            return
        # leave room for `remaining` further segments of min_len
        for tau in range(start, n - remaining * min_len + 1):
            prefix.append(tau)
            yield from rec(prefix, tau + min_len, remaining - 1)
            prefix.pop()

    yield from rec([], min_len, m)


def _objective_at(y: np.ndarray, taus, spec: ModelSpec) -> tuple:
    """(-2 ln L, objective, fit) at a configuration; non-convergence keeps the last iterate."""
    try:
        fit = trend.fit_at(y, Segmentation(taus), spec)
    except ConvergenceError as err:
        fit = err.last_result
    return -2.0 * fit.loglik, fit.objective, fit


def _additive_tables(y: np.ndarray, spec: ModelSpec):
    """Additive relaxation cost table for bounding, or None if no sound bound."""
    if spec.errors == "piecewise_ar1":
        return _ar1_cost_table(y, spec.min_seg_len)
    if spec.errors == "independent":
        return _ols_rss_table(y, spec.min_seg_len)
    return None


def _max_feasible_m(n: int, max_m: int, min_len: int) -> int:
    return min(max_m, n // min_len - 1)


def exhaustive_search(series, spec: ModelSpec,
                      max_m: Optional[int] = None) -> Segmentation:
    """Brute-force enumeration of every admissible configuration with m <= max_m."""
    y = _values(series)
    n = y.size
    max_m = spec.max_m if max_m is None else max_m
    mmax = _max_feasible_m(n, max_m, spec.min_seg_len)
    if mmax < 0:
        raise DomainError(f"series of length {n} shorter than min_seg_len")
    best_obj = np.inf
    best_taus = ()
    for m in range(0, mmax + 1):
        for taus in _iter_configs(n, m, spec.min_seg_len):
            _, obj, _ = _objective_at(y, taus, spec)
            if obj < best_obj:
                best_obj = obj
                best_taus = taus
    return Segmentation(best_taus)


def exact_dp_search(series, spec: ModelSpec,
                    max_m: Optional[int] = None) -> Segmentation:
    """Exact minimiser of the penalized objective among all segmentations
    with m <= max_m and segment lengths >= spec.min_seg_len.

    For specs whose likelihood decomposes over segments (discontinuous trend
    with per-segment error parameters, or profiled independent errors) this
    is pure dynamic programming.  For coupled specs with a sound additive
    lower bound (continuity restrictions over piecewise AR(1) or independent
    errors) a branch-and-bound enumeration prunes against the bound.  Global
    AR error models have no sound additive bound and fall back to plain
    enumeration.
    """
    y = _values(series)
    n = y.size
    max_m = spec.max_m if max_m is None else max_m
    min_len = spec.min_seg_len
    mmax = _max_feasible_m(n, max_m, min_len)
    if mmax < 0:
        raise DomainError(
            f"infeasible: no segmentation of N={n} with min_seg_len={min_len}")

    # Fully additive case: discontinuous + per-segment parameters.
    if spec.trend == "discontinuous" and spec.errors == "piecewise_ar1":
        costs = _ar1_cost_table(y, min_len)
        best_dp, back = _dp_additive(costs, n, mmax + 1, min_len)
        best_obj, best_taus = np.inf, ()
        for m in range(0, mmax + 1):
            if not np.isfinite(best_dp[m + 1, 1]):
                continue
            obj = best_dp[m + 1, 1] + penalty_value(m, spec, n)
            if obj < best_obj:
                best_obj = obj
                best_taus = _dp_config(back, m + 1)
        return Segmentation(best_taus)

    # Profiled-variance additive case: discontinuous + independent errors.
    if spec.trend == "discontinuous" and spec.errors == "independent":
        rss = _ols_rss_table(y, min_len)
        best_dp, back = _dp_additive(rss, n, mmax + 1, min_len)
        best_obj, best_taus = np.inf, ()
        for m in range(0, mmax + 1):
            if not np.isfinite(best_dp[m + 1, 1]):
                continue
            s2 = max(best_dp[m + 1, 1] / n, np.finfo(float).tiny)
            obj = n * (ar.LOG_2PI + math.log(s2) + 1.0) + penalty_value(m, spec, n)
            if obj < best_obj:
                best_obj = obj
                best_taus = _dp_config(back, m + 1)
        return Segmentation(best_taus)

    bound_costs = _additive_tables(y, spec) if spec.trend == "continuous" else None
    use_rss_scale = spec.errors == "independent"
    if bound_costs is not None:
        comp, _ = _dp_additive(bound_costs, n, mmax + 1, min_len)

    best_obj = np.inf
    best_taus = ()
    for m in range(0, mmax + 1):
        pen = penalty_value(m, spec, n)
        if m == 0:
            neg2ll, obj, _ = _objective_at(y, (), spec)
            if obj < best_obj:
                best_obj, best_taus = obj, ()
            continue

        if bound_costs is None:
            for taus in _iter_configs(n, m, min_len):
                _, obj, _ = _objective_at(y, taus, spec)
                if obj < best_obj:
                    best_obj, best_taus = obj, taus
            continue

        # Bound the whole m-level first, then branch and bound depth-first.
        def level_bound(raw):
            if use_rss_scale:
                s2 = max(raw / n, np.finfo(float).tiny)
                return n * (ar.LOG_2PI + math.log(s2) + 1.0) + pen
            return raw + pen

        if not np.isfinite(comp[m + 1, 1]) or level_bound(comp[m + 1, 1]) >= best_obj:
            continue

        # Seed the incumbent with the relaxation's own optimum.
        _, back_m = _dp_additive(bound_costs, n, m + 1, min_len)
        seed = _dp_config(back_m, m + 1)
        _, obj, _ = _objective_at(y, seed, spec)
        if obj < best_obj:
            best_obj, best_taus = obj, seed

        stack = [((), 0.0, min_len)]
        while stack:
            prefix, fixed_cost, start = stack.pop()
            depth = len(prefix)
            if depth == m:
                if prefix != seed:
                    _, obj, _ = _objective_at(y, prefix, spec)
                    if obj < best_obj:
                        best_obj, best_taus = obj, prefix
                continue
            remaining = m - depth
            children = []
            for tau in range(start, n - remaining * min_len + 1):
                prev = prefix[-1] if prefix else 0
                seg_cost = bound_costs[prev + 1, tau]
                lb = fixed_cost + seg_cost + comp[remaining, tau + 1]
                if np.isfinite(lb) and level_bound(lb) < best_obj:
                    children.append((prefix + (tau,), fixed_cost + seg_cost, tau + min_len))
            stack.extend(reversed(children))
    return Segmentation(best_taus)


def pelt_search(series, spec: ModelSpec) -> Segmentation:
    """Pruned exact linear-time search for segment-additive specs.

    Only a discontinuous trend with per-segment error parameters gives a
    segment-additive cost; any other spec is rejected (use
    ``exact_dp_search``).
    """
    if not (spec.trend == "discontinuous" and spec.errors == "piecewise_ar1"):
        raise DomainError(
            "PELT needs a segment-additive cost (discontinuous trend with "
            "per-segment AR parameters); use exact_dp_search for this spec")
    y = _values(series)
    n = y.size
    min_len = max(spec.min_seg_len, 3)
    if n < min_len:
        raise DomainError(f"series of length {n} shorter than min_seg_len")
    costs = _ar1_cost_table(y, min_len)
    if spec.penalty == "bic":
        # p = 5m + 4: each changepoint adds 5 parameters.
        beta = 5.0 * math.log(n)
    else:
        beta = float(spec.penalty)

    F = np.full(n + 1, np.inf)
    F[0] = -beta
    prev = np.full(n + 1, -1, dtype=int)
    candidates = [0]
    for j in range(min_len, n + 1):
        best_val, best_s = np.inf, -1
        for s in candidates:
            if j - s < min_len:
                continue
            val = F[s] + costs[s + 1, j] + beta
            if val < best_val:
                best_val, best_s = val, s
        F[j] = best_val
        prev[j] = best_s
        keep = [s for s in candidates
                if j - s < min_len or F[s] + costs[s + 1, j] <= F[j]]
        keep.append(j)
        candidates = keep

    taus = []
    j = n
    while j > 0:
        s = prev[j]
        if s > 0:
            taus.append(s)
        j = s
    return Segmentation(tuple(sorted(taus)))


def detect(series, spec: ModelSpec,
           max_m: Optional[int] = None) -> tuple:
    """Search for the best segmentation under ``spec`` and fit it.

    Dispatches on ``spec.search``: ``pelt`` and ``exact_dp`` force a
    strategy, ``exhaustive`` brute-forces, and ``auto`` picks PELT for
    additive specs and the exact search otherwise.

    Returns (Segmentation, FitResult).
    """
    y = _values(series)
    strategy = spec.search
    if strategy == "auto":
        additive = spec.trend == "discontinuous" and spec.errors == "piecewise_ar1"
        strategy = "pelt" if additive else "exact_dp"
    if strategy == "pelt":
        seg = pelt_search(y, spec)
    elif strategy == "exact_dp":
        seg = exact_dp_search(y, spec, max_m)
    else:
        seg = exhaustive_search(y, spec, max_m)
    try:
        fit = trend.fit_at(y, seg, spec)
    except ConvergenceError as err:
        fit = err.last_result
    return seg, fit
