"""Static SVG figures for CLI reports.

Output is deterministic: SVG ids are salted with a fixed string and the
date metadata is suppressed, so re-running a command reproduces the file
byte for byte.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .types import AnnualSeries, FitResult  # noqa: E402
from .surge import SurgeGrid  # noqa: E402

plt.rcParams["svg.hashsalt"] = "surgedetect"
_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def plot_fit(series: AnnualSeries, fit: FitResult, path) -> None:
    """Anomalies with the fitted segment trends superimposed."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    years = series.years
    ax.plot(years, series.values, color="0.45", lw=0.9, marker="o", ms=2.2,
            label=series.label or "anomaly")
    trend_vals = fit.trend_values()
    for i, (a, b) in enumerate(fit.seg.segments(fit.n)):
        sl = slice(a - 1, b)
        ax.plot(years[sl], trend_vals[sl], lw=2.2,
                color="tab:red" if i % 2 == 0 else "tab:orange")
    for tau in fit.seg.taus:
        ax.axvline(series.start_year + tau - 1, color="tab:blue", lw=0.8,
                   ls="--", alpha=0.7)
    ax.set_xlabel("year")
    ax.set_ylabel("anomaly (°C)")
    title = f"{series.label or 'series'}: {fit.spec.trend} trend, {fit.spec.errors}"
    if fit.seg.taus:
        cps = ", ".join(str(series.start_year + t - 1) for t in fit.seg.taus)
        title += f" (changepoints: {cps})"
    ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_acf(acf: np.ndarray, band: float, path, title: str = "residual ACF") -> None:
    """Stem plot of sample autocorrelations with pointwise significance bands."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    lags = np.arange(1, acf.size + 1)
    ax.vlines(lags, 0, acf, color="0.3")
    ax.plot(lags, acf, "o", ms=3, color="0.2")
    ax.axhline(0, color="k", lw=0.7)
    ax.axhline(band, color="tab:blue", ls="--", lw=0.9)
    ax.axhline(-band, color="tab:blue", ls="--", lw=0.9)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_grid(grid: SurgeGrid, path, label: str = "") -> None:
    """Heatmap of minimum detectable surge magnitudes (%), annotated per cell."""
    fig, ax = plt.subplots(figsize=(9, 6))
    pct = grid.min_pct
    im = ax.imshow(pct, aspect="auto", origin="upper", cmap="viridis")
    ax.set_xticks(range(len(grid.vantage_years)))
    ax.set_xticklabels(grid.vantage_years, rotation=90, fontsize=7)
    ax.set_yticks(range(len(grid.surge_years)))
    ax.set_yticklabels(grid.surge_years, fontsize=7)
    ax.set_xlabel("vantage year (series end)")
    ax.set_ylabel("surge start year")
    small = pct.size <= 30 * 20
    if small:
        for i in range(pct.shape[0]):
            for j in range(pct.shape[1]):
                ax.text(j, i, f"{pct[i, j]:.0f}\n{grid.min_slope[i, j]:.3f}",
                        ha="center", va="center", fontsize=5,
                        color="white" if pct[i, j] > np.median(pct) else "black")
    cbar = fig.colorbar(im, ax=ax)
    cbar.set_label("minimum detectable surge (%)")
    title = "minimum detectable trend change"
    if label:
        title += f" ({label})"
    ax.set_title(title + f", {int(round(grid.level * 100))}% level", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
