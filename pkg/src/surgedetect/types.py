"""Core domain types: annual series, segmentations, model specifications, fits.

Time is indexed 1..N internally; calendar years exist only at the ingestion
and reporting boundaries.  A changepoint at tau means the new regime starts
at tau + 1.  All types are immutable after construction and safe to share
across concurrent tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .exceptions import DomainError

TREND_KINDS = ("continuous", "discontinuous")
ERROR_KINDS = ("independent", "global_ar", "piecewise_ar1")
SEARCH_KINDS = ("auto", "pelt", "exact_dp", "exhaustive")


def _frozen_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AnnualSeries:
    """A gap-free, year-indexed vector of annual anomalies.

    Parameters
    ----------
    start_year : int
        Calendar year of the first observation.
    values : array-like of float
        One anomaly per year (degC), length N >= 2, no missing entries.
    label : str
        Dataset name, informational.
    baseline : str
        Anomaly reference period, informational (never used numerically).
    """

    start_year: int
    values: np.ndarray
    label: str = ""
    baseline: str = ""

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.ndim != 1 or arr.size < 2:
            raise DomainError("series needs at least 2 values in a 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise DomainError("series contains missing or non-finite values")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "start_year", int(self.start_year))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def end_year(self) -> int:
        return self.start_year + self.n - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.n)

    def index_of_year(self, year: int) -> int:
        """1-based time index of a calendar year."""
        if not self.start_year <= year <= self.end_year:
            raise DomainError(
                f"year {year} outside series range "
                f"{self.start_year}-{self.end_year}"
            )
        return year - self.start_year + 1

    def year_of_index(self, t: int) -> int:
        if not 1 <= t <= self.n:
            raise DomainError(f"index {t} outside 1..{self.n}")
        return self.start_year + t - 1

    def window(self, from_year: Optional[int] = None,
               to_year: Optional[int] = None) -> "AnnualSeries":
        """Sub-series over an inclusive calendar range."""
        a = self.start_year if from_year is None else from_year
        b = self.end_year if to_year is None else to_year
        if a > b:
            raise DomainError(f"empty window {a}-{b}")
        i, j = self.index_of_year(a) - 1, self.index_of_year(b)
        return AnnualSeries(a, self.values[i:j], self.label, self.baseline)


@dataclass(frozen=True)
class Segmentation:
    """Changepoint times tau_1 < ... < tau_m partitioning 1..N.

    The boundary convention is half-open: segment i covers
    tau_{i-1}+1 .. tau_i with tau_0 = 0 and tau_{m+1} = N.
    """

    taus: tuple = ()

    def __post_init__(self):
        taus = tuple(int(t) for t in self.taus)
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise DomainError(f"changepoint times must be strictly increasing: {taus}")
        if taus and taus[0] < 1:
            raise DomainError("changepoint times must be >= 1")
        object.__setattr__(self, "taus", taus)

    @property
    def m(self) -> int:
        return len(self.taus)

    def boundaries(self, n: int) -> tuple:
        """(tau_0, ..., tau_{m+1}) = (0, taus..., n)."""
        return (0,) + self.taus + (n,)

    def segments(self, n: int) -> list:
        """Inclusive 1-based (start, end) pairs for each segment."""
        b = self.boundaries(n)
        return [(b[i] + 1, b[i + 1]) for i in range(len(b) - 1)]

    def validate(self, n: int, min_seg_len: int = 1) -> None:
        if self.taus and self.taus[-1] >= n:
            raise DomainError(f"changepoint {self.taus[-1]} must be < N={n}")
        b = self.boundaries(n)
        for a, c in zip(b, b[1:]):
            if c - a < min_seg_len:
                raise DomainError(
                    f"segment length {c - a} below minimum {min_seg_len}"
                )


def regime_index(t: int, seg: Segmentation) -> int:
    """Segment index r(t): r(t) = i iff tau_{i-1} < t <= tau_i.

    ``t`` is a 1-based time index; a changepoint at tau belongs to the
    *earlier* regime, the later regime starts at tau + 1.
    """
    if t < 1:
        raise DomainError(f"time index {t} out of range (must be >= 1)")
    i = 1
    for tau in seg.taus:
        if t <= tau:
            return i
        i += 1
    return i


@dataclass(frozen=True)
class ModelSpec:
    """Trend form x error model x penalty x search settings.

    ``errors`` is one of:

    - ``"independent"``: iid Gaussian errors;
    - ``"global_ar"``: one AR(``ar_order``) process for the whole series;
    - ``"piecewise_ar1"``: a separate AR(1) per segment, with the AR
      changepoints constrained to coincide with the trend changepoints.
    """

    trend: str = "continuous"
    errors: str = "piecewise_ar1"
    ar_order: int = 1
    penalty: Union[str, float] = "bic"
    min_seg_len: int = 10
    search: str = "auto"
    max_m: int = 5

    def __post_init__(self):
        if self.trend not in TREND_KINDS:
            raise DomainError(f"unknown trend kind {self.trend!r}")
        if self.errors not in ERROR_KINDS:
            raise DomainError(f"unknown error model {self.errors!r}")
        if self.errors == "global_ar" and self.ar_order < 1:
            raise DomainError("global_ar requires ar_order >= 1")
        if self.errors == "piecewise_ar1" and self.ar_order != 1:
            raise DomainError("piecewise_ar1 is first-order by definition")
        if isinstance(self.penalty, str):
            if self.penalty != "bic":
                raise DomainError(f"unknown penalty {self.penalty!r}")
        elif float(self.penalty) < 0:
            raise DomainError("manual penalty must be nonnegative")
        if self.min_seg_len < 2:
            raise DomainError("min_seg_len must be >= 2")
        if self.search not in SEARCH_KINDS:
            raise DomainError(f"unknown search strategy {self.search!r}")
        if self.max_m < 0:
            raise DomainError("max_m must be >= 0")

    @property
    def order(self) -> int:
        """Effective AR order (0 for independent errors)."""
        if self.errors == "independent":
            return 0
        if self.errors == "piecewise_ar1":
            return 1
        return self.ar_order


def param_count(m: int, spec: ModelSpec) -> int:
    """Total free parameters for a fit with m changepoints.

    Counts the m changepoint times, the free regression parameters
    (m + 2 under continuity, 2(m + 1) without), and the error-model
    parameters (AR coefficients plus innovation variances, per segment
    when the autocorrelation changes at each changepoint).
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    regression = (m + 2) if spec.trend == "continuous" else 2 * (m + 1)
    if spec.errors == "independent":
        noise = 1
    elif spec.errors == "global_ar":
        noise = spec.ar_order + 1
    else:
        noise = 2 * (m + 1)
    return m + regression + noise


def penalty_value(m: int, spec: ModelSpec, n: int) -> float:
    """Penalty charge C(m) added to -2 ln L.

    BIC charges param_count * ln(N); a manual penalty charges its value
    once per changepoint (the constant part of the count is irrelevant to
    the minimiser and is omitted).
    """
    if n < 2:
        raise DomainError("need N >= 2")
    if spec.penalty == "bic":
        return param_count(m, spec) * float(np.log(n))
    return float(spec.penalty) * m


@dataclass(frozen=True)
class FitResult:
    """A fitted piecewise linear trend with its error-model parameters.

    ``alphas``/``betas`` hold per-segment intercepts and slopes in the
    native 1..N time index.  ``phis`` holds one AR coefficient vector for
    global error models and one AR(1) coefficient per segment for
    ``piecewise_ar1`` (empty for independent errors); ``sigmas`` follows
    the same layout for innovation standard deviations.  ``resid`` are
    trend residuals and ``innov`` the innovation residuals.
    """

    spec: ModelSpec
    seg: Segmentation
    alphas: np.ndarray
    betas: np.ndarray
    phis: np.ndarray
    sigmas: np.ndarray
    loglik: float
    objective: float
    resid: np.ndarray
    innov: np.ndarray
    n: int
    n_iter: int = 0
    converged: bool = True

    def __post_init__(self):
        for name in ("alphas", "betas", "phis", "sigmas", "resid", "innov"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def m(self) -> int:
        return self.seg.m

    def trend_values(self) -> np.ndarray:
        """Fitted E[X_t] for t = 1..N."""
        t = np.arange(1, self.n + 1)
        out = np.empty(self.n)
        for i, (a, b) in enumerate(self.seg.segments(self.n)):
            sl = slice(a - 1, b)
            out[sl] = self.alphas[i] + self.betas[i] * t[sl]
        return out

    def continuity_gaps(self) -> np.ndarray:
        """|alpha_i + beta_i tau_i - alpha_{i+1} - beta_{i+1} tau_i| per changepoint."""
        gaps = []
        for i, tau in enumerate(self.seg.taus):
            left = self.alphas[i] + self.betas[i] * tau
            right = self.alphas[i + 1] + self.betas[i + 1] * tau
            gaps.append(abs(left - right))
        return np.asarray(gaps)

    def segment_table(self, start_year: int) -> list:
        """Per-segment summary with calendar years (for reports)."""
        rows = []
        for i, (a, b) in enumerate(self.seg.segments(self.n)):
            row = {
                "segment": i + 1,
                "from_year": start_year + a - 1,
                "to_year": start_year + b - 1,
                "slope": float(self.betas[i]),
                "intercept": float(self.alphas[i]),
            }
            if self.spec.errors == "piecewise_ar1":
                row["phi"] = float(self.phis[i])
                row["sigma"] = float(self.sigmas[i])
            rows.append(row)
        return rows

    def to_dict(self, start_year: int = 1) -> dict:
        """JSON-ready representation of the fit."""
        d = {
            "trend": self.spec.trend,
            "errors": self.spec.errors,
            "ar_order": self.spec.order,
            "n": self.n,
            "m": self.m,
            "changepoints": [int(t) for t in self.seg.taus],
            "changepoint_years": [start_year + t - 1 for t in self.seg.taus],
            "segments": self.segment_table(start_year),
            "loglik": float(self.loglik),
            "objective": float(self.objective),
            "converged": bool(self.converged),
        }
        if self.spec.errors == "global_ar":
            d["phi"] = [float(p) for p in self.phis]
            d["sigma"] = float(self.sigmas[0])
        return d
