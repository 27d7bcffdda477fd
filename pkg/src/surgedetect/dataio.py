"""Ingestion of annual temperature-anomaly files and the normalized format.

Each supported source has its own adapter targeting the current public
layout of that agency's annual export; all adapters funnel into one
validation path that rejects gaps, duplicate years, and non-annual files
outright (no silent interpolation).  The normalized format is a two-column
``year,anomaly`` CSV that round-trips exactly.
"""

from __future__ import annotations

import io
import urllib.request
from dataclasses import dataclass
from typing import Optional

from .exceptions import DomainError, IngestError
from .types import AnnualSeries

SOURCES = ("hadcrut", "noaa", "berkeley", "nasa", "normalized")
YEAR_MIN, YEAR_MAX = 1850, 2100

_BASELINES = {
    "hadcrut": "1961-1990",
    "noaa": "1901-2000",
    "berkeley": "1951-1980",
    "nasa": "1951-1980",
}


@dataclass(frozen=True)
class DatasetDescriptor:
    """Where a dataset lives and how to parse it."""

    source: str
    path_or_url: str
    year_range: Optional[tuple] = None
    baseline: str = ""

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DomainError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if self.year_range is not None:
            a, b = self.year_range
            if not (YEAR_MIN <= a <= b <= YEAR_MAX):
                raise DomainError(
                    f"year_range {self.year_range} outside {YEAR_MIN}-{YEAR_MAX}")


def _parse_year(tok: str, path, lineno) -> int:
    tok = tok.strip()
    try:
        year = int(tok)
    except ValueError:
        raise IngestError(f"non-integer year {tok!r}", path, lineno) from None
    return year


def _parse_value(tok: str, path, lineno) -> float:
    tok = tok.strip()
    try:
        value = float(tok)
    except ValueError:
        raise IngestError(f"non-numeric anomaly {tok!r}", path, lineno) from None
    return value


def _rows_normalized(lines, path):
    rows = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if lineno == 1:
            if line.lower().replace(" ", "") != "year,anomaly":
                raise IngestError("expected 'year,anomaly' header", path, 1)
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise IngestError(f"expected 2 fields, got {len(parts)}", path, lineno)
        rows.append((_parse_year(parts[0], path, lineno),
                     _parse_value(parts[1], path, lineno), lineno))
    return rows


def _rows_hadcrut(lines, path):
    rows = []
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if not header_seen:
            if not line.lower().startswith("time,"):
                raise IngestError("expected a 'Time,...' header", path, lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) < 2:
            raise IngestError("expected at least 2 fields", path, lineno)
        time_tok = parts[0].strip()
        if "-" in time_tok:
            raise IngestError("monthly resolution not supported; use the "
                              "annual export", path, lineno)
        rows.append((_parse_year(time_tok, path, lineno),
                     _parse_value(parts[1], path, lineno), lineno))
    return rows


def _rows_noaa(lines, path):
    rows = []
    in_data = False
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if not in_data:
            if line.lower().replace(" ", "").startswith("year,"):
                in_data = True
            continue
        parts = line.split(",")
        if len(parts) < 2:
            raise IngestError("expected 'Year,Value' row", path, lineno)
        year_tok = parts[0].strip()
        if len(year_tok) == 6 and year_tok.isdigit():
            raise IngestError("monthly resolution not supported; use the "
                              "annual export", path, lineno)
        value = _parse_value(parts[1], path, lineno)
        if value <= -999.0:
            raise IngestError("missing value sentinel", path, lineno)
        rows.append((_parse_year(year_tok, path, lineno), value, lineno))
    if not in_data:
        raise IngestError("no 'Year,Value' header found", path)
    return rows


def _rows_berkeley(lines, path):
    rows = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%") or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise IngestError("expected whitespace-separated year and anomaly",
                              path, lineno)
        rows.append((_parse_year(parts[0], path, lineno),
                     _parse_value(parts[1], path, lineno), lineno))
    return rows


def _rows_nasa(lines, path):
    rows = []
    in_data = False
    col = 1
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if not in_data:
            if line.lower().startswith("year"):
                header = [h.strip().lower() for h in line.split(",")]
                if "jan" in header:
                    raise IngestError("monthly table not supported; use the "
                                      "annual (zonal means) export", path, lineno)
                if "glob" in header:
                    col = header.index("glob")
                in_data = True
            continue
        parts = line.split(",")
        if len(parts) <= col:
            raise IngestError(f"expected at least {col + 1} fields", path, lineno)
        tok = parts[col].strip()
        if tok in ("*****", "****", ""):
            raise IngestError("missing value marker", path, lineno)
        rows.append((_parse_year(parts[0], path, lineno),
                     _parse_value(tok, path, lineno), lineno))
    if not in_data:
        raise IngestError("no 'Year,...' header found", path)
    return rows


_PARSERS = {
    "normalized": _rows_normalized,
    "hadcrut": _rows_hadcrut,
    "noaa": _rows_noaa,
    "berkeley": _rows_berkeley,
    "nasa": _rows_nasa,
}


def _build_series(rows, path, label, baseline) -> AnnualSeries:
    if len(rows) < 2:
        raise IngestError("need at least 2 annual values", path)
    years = [r[0] for r in rows]
    seen = {}
    for year, _, lineno in rows:
        if year in seen:
            raise IngestError(f"duplicate year {year} (first at line {seen[year]})",
                              path, lineno)
        seen[year] = lineno
    expected = range(years[0], years[0] + len(years))
    for got, want, row in zip(years, expected, rows):
        if got != want:
            raise IngestError(f"gap in years: expected {want}, found {got}",
                              path, row[2])
    return AnnualSeries(start_year=years[0], values=[r[1] for r in rows],
                        label=label, baseline=baseline)


def parse_text(text: str, source: str, path=None, label: str = "",
               baseline: str = "") -> AnnualSeries:
    """Parse file content already in memory."""
    if source not in _PARSERS:
        raise DomainError(f"unknown source {source!r}")
    rows = _PARSERS[source](io.StringIO(text), path)
    if not baseline:
        baseline = _BASELINES.get(source, "")
    return _build_series(rows, path, label or source, baseline)


def ingest(descriptor: DatasetDescriptor) -> AnnualSeries:
    """Read and validate an annual series per its descriptor.

    Local paths are read directly; ``http(s)://`` locations are fetched
    with :func:`fetch`.  The optional year_range restricts the result.
    """
    loc = descriptor.path_or_url
    if loc.startswith("http://") or loc.startswith("https://"):
        text = fetch(loc)
    else:
        try:
            with open(loc, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise IngestError(f"cannot read file: {err}", loc) from err
    label = descriptor.source
    series = parse_text(text, descriptor.source, loc, label, descriptor.baseline)
    if descriptor.year_range is not None:
        series = series.window(*descriptor.year_range)
    return series


def ingest_path(path: str, source: str = "normalized",
                year_range: Optional[tuple] = None) -> AnnualSeries:
    """Convenience wrapper around :func:`ingest` for a local file."""
    return ingest(DatasetDescriptor(source=source, path_or_url=str(path),
                                    year_range=year_range))


def fetch(url: str, timeout: float = 30.0) -> str:
    """Minimal HTTP fetch: explicit timeout, no retries."""
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read().decode("utf-8")
    except Exception as err:
        raise IngestError(f"download failed: {err}", url) from err


def export_normalized(series: AnnualSeries, path) -> None:
    """Write the normalized 'year,anomaly' CSV (6 decimals, LF endings)."""
    lines = ["year,anomaly"]
    for year, value in zip(series.years, series.values):
        lines.append(f"{year},{value:.6f}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
