"""Ingestion of cumulative count files into daily-increment panels.

The input is a long-format CSV with one row per (date, region) carrying
cumulative totals. The output panels are wide: one column per
(region, feature) series, one row per calendar day.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

LOG_SCALE_FLOOR = 1e-6


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Feature(enum.Enum):
    CASES = "Cases"
    DEATHS = "Deaths"
    RECOVERED = "Recovered"

    @classmethod
    def parse(cls, value):
        for member in cls:
            if value.strip().lower() in (member.value.lower(), member.name.lower()):
                return member
        raise DataError(f"unknown feature {value!r}")


FEATURES = tuple(Feature)


@dataclass(frozen=True)
class SeriesKey:
    region: str
    feature: Feature
    flat_index: int

    @property
    def label(self):
        return f"{self.region}/{self.feature.value}"


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the logical columns in a cumulative CSV.

    ``cases`` may list several source columns; their values are summed
    (the historical file splits cases by test type).
    """

    date: str = "FECHA"
    region: str = "CCAA"
    cases: tuple = ("PCR+", "TestAc+")
    deaths: tuple = ("Fallecidos",)
    recovered: tuple = ("Recuperados",)
    date_format: str = "%d/%m/%Y"

    def feature_columns(self):
        return {
            Feature.CASES: tuple(self.cases),
            Feature.DEATHS: tuple(self.deaths),
            Feature.RECOVERED: tuple(self.recovered),
        }

    @classmethod
    def from_dict(cls, values):
        kwargs = {}
        for name in ("date", "region", "date_format"):
            if name in values:
                kwargs[name] = values[name]
        for name in ("cases", "deaths", "recovered"):
            if name in values:
                kwargs[name] = tuple(c.strip() for c in values[name].split("+") if c.strip())
        return cls(**kwargs)


ISO_MAPPING = ColumnMapping(
    date="date",
    region="region",
    cases=("cases",),
    deaths=("deaths",),
    recovered=("recovered",),
    date_format="%Y-%m-%d",
)


@dataclass
class CumulativePanel:
    dates: list
    keys: list
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass
class CountPanel:
    dates: list
    keys: list
    values: np.ndarray
    clamped: int = field(default=0, compare=False)

    @property
    def shape(self):
        return self.values.shape

    @property
    def regions(self):
        return list(dict.fromkeys(k.region for k in self.keys))

    def index_of(self, region, feature):
        for key in self.keys:
            if key.region == region and key.feature is feature:
                return key.flat_index
        raise KeyError(f"no series for region {region!r}, feature {feature.value}")

    def with_values(self, values):
        return CountPanel(list(self.dates), list(self.keys), values, self.clamped)


def _parse_number(text, line):
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"unparseable number {text!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise DataError(f"invalid count {text!r}", line)
    return value


def parse_cumulative_csv(raw, mapping=None):
    """Parse a cumulative-count CSV into a dense, date-sorted panel.

    ``raw`` is bytes, text, or a binary/text file object. Missing
    (date, region) rows and empty cells are forward-filled from the
    previous date (0 before the first report). A (region, feature) pair
    with no value anywhere is dropped from the keys.
    """
    mapping = mapping or ColumnMapping()
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(raw))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty file") from None
    if not any(header):
        raise DataError("empty file")

    position = {name: i for i, name in enumerate(header)}
    for required in (mapping.date, mapping.region):
        if required not in position:
            raise DataError(f"missing required column {required!r}", 1)
    feature_cols = {}
    for feature, cols in mapping.feature_columns().items():
        present = [position[c] for c in cols if c in position]
        if present:
            feature_cols[feature] = present

    records = {}
    regions = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", line)
        date_text = row[position[mapping.date]].strip()
        try:
            date = dt.datetime.strptime(date_text, mapping.date_format).date()
        except ValueError:
            raise DataError(f"unparseable date {date_text!r}", line) from None
        region = row[position[mapping.region]].strip()
        if not region:
            raise DataError("empty region code", line)
        if (date, region) in records:
            raise DataError(f"duplicate row for date {date.isoformat()}, region {region!r}", line)
        values = {}
        for feature, cols in feature_cols.items():
            parts = [_parse_number(row[c], line) for c in cols]
            parts = [p for p in parts if p is not None]
            values[feature] = sum(parts) if parts else None
        records[(date, region)] = values
        regions.setdefault(region, None)

    if not records:
        raise DataError("no data rows")

    first = min(d for d, _ in records)
    last = max(d for d, _ in records)
    dates = [first + dt.timedelta(days=i) for i in range((last - first).days + 1)]

    keys = []
    columns = []
    for region in regions:
        for feature in FEATURES:
            if feature not in feature_cols:
                continue
            seen = [
                records[(d, region)][feature]
                for d in dates
                if (d, region) in records
            ]
            if all(v is None for v in seen):
                continue
            column = np.empty(len(dates))
            current = 0.0
            for t, d in enumerate(dates):
                value = records.get((d, region), {}).get(feature)
                if value is not None:
                    current = value
                column[t] = current
            keys.append(SeriesKey(region, feature, len(keys)))
            columns.append(column)
    if not keys:
        raise DataError("no count columns found")

    values = np.rint(np.column_stack(columns)).astype(np.int64)
    return CumulativePanel(dates, keys, values)


def to_daily_increments(cum):
    """First differences of a cumulative panel, negatives clamped to 0.

    Row 0 is the first cumulative row. The number of clamped cells is
    kept on the result for reporting.
    """
    values = np.asarray(cum.values, dtype=np.int64)
    diffs = np.diff(values, axis=0)
    clamped = int(np.count_nonzero(diffs < 0))
    daily = np.vstack([values[:1], np.maximum(diffs, 0)])
    return CountPanel(list(cum.dates), list(cum.keys), daily, clamped)


def write_panel_csv(panel, path_or_buf):
    """Write a panel in the canonical long format ``date,region,feature,count``."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "region", "feature", "count"])
        for t, date in enumerate(panel.dates):
            for key in panel.keys:
                writer.writerow([date.isoformat(), key.region, key.feature.value,
                                 int(panel.values[t, key.flat_index])])
    finally:
        if own:
            fh.close()


def read_panel_csv(path_or_buf):
    """Read a canonical panel CSV back into a :class:`CountPanel`."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="", encoding="utf-8") if own else path_or_buf
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "region", "feature", "count"]:
            raise DataError("not a canonical panel file", 1)
        cells = {}
        dates = {}
        key_order = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"expected 4 fields, got {len(row)}", line)
            try:
                date = dt.date.fromisoformat(row[0])
                count = int(row[3])
            except ValueError:
                raise DataError(f"bad row {row!r}", line) from None
            feature = Feature.parse(row[2])
            dates.setdefault(date, None)
            key_order.setdefault((row[1], feature), None)
            cells[(date, row[1], feature)] = count
    finally:
        if own:
            fh.close()
    if not cells:
        raise DataError("empty panel file")
    date_list = sorted(dates)
    keys = [SeriesKey(r, f, i) for i, (r, f) in enumerate(key_order)]
    values = np.zeros((len(date_list), len(keys)), dtype=np.int64)
    for t, date in enumerate(date_list):
        for key in keys:
            values[t, key.flat_index] = cells.get((date, key.region, key.feature), 0)
    return CountPanel(date_list, keys, values)


@dataclass(frozen=True)
class NormalizationSpec:
    location: np.ndarray
    scale: np.ndarray


def fit_normalizer(panel):
    values = panel.values if isinstance(panel, CountPanel) else panel
    logs = np.log1p(np.asarray(values, dtype=float))
    if logs.shape[0] < 2:
        raise DataError("need at least two days to fit a normalizer")
    return NormalizationSpec(
        location=logs.mean(axis=0),
        scale=np.maximum(logs.std(axis=0), LOG_SCALE_FLOOR),
    )


def normalize(values, spec):
    values = values.values if isinstance(values, CountPanel) else values
    return (np.log1p(np.asarray(values, dtype=float)) - spec.location) / spec.scale


def denormalize(z, spec):
    return np.maximum(0.0, np.expm1(np.asarray(z, dtype=float) * spec.scale + spec.location))


class LogCountScaler(TransformerMixin, BaseEstimator):
    """Per-series z-scoring of ``log(1 + y)``.

    Works on a ``(n_days, n_series)`` array of non-negative counts.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if np.any(X < 0):
            raise ValueError("counts must be non-negative")
        spec = fit_normalizer(X)
        self.location_ = spec.location
        self.scale_ = spec.scale
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def spec_(self):
        check_is_fitted(self, "location_")
        return NormalizationSpec(self.location_, self.scale_)

    def transform(self, X):
        X = check_array(X, dtype=float)
        self._check_width(X)
        return normalize(X, self.spec_)

    def inverse_transform(self, X):
        X = check_array(X, dtype=float)
        self._check_width(X)
        return denormalize(X, self.spec_)

    def _check_width(self, X):
        if X.shape[1] != self.spec_.location.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} series, scaler was fitted on {self.n_features_in_}"
            )


@dataclass
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    target_day: int


def make_windows(normalized, k):
    """All ``(k preceding rows, next row)`` pairs of a normalized matrix."""
    normalized = np.asarray(normalized, dtype=float)
    T = normalized.shape[0]
    if T <= k:
        raise DataError(f"insufficient history: {T} days for lookback {k}")
    return [WindowSample(normalized[t - k:t], normalized[t], t) for t in range(k, T)]
