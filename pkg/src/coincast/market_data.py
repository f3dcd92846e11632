"""OHLCV ingestion, validation, scaling, and supervised window construction.

Input files are CSVs with one row per (asset, day) carrying the columns
SNo, Name, Symbol, Date, High, Low, Open, Close, Volume, Marketcap
(header match is case-insensitive; extra columns are ignored). Rows are
validated on the way in: parse failures, duplicate dates, negative values
and OHLC ordering violations all raise with the 1-based line number.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from datetime import date, datetime

import numpy as np

from .errors import (
    DomainError,
    SchemaError,
    ShapeError,
    SizingError,
    StateError,
    ValidationError,
)

REQUIRED_COLUMNS = (
    "sno", "name", "symbol", "date", "high", "low", "open", "close", "volume", "marketcap",
)

# Numeric fields a PriceSeries can expose as a feature column.
PRICE_FIELDS = ("open", "high", "low", "close", "volume", "marketcap")

DEFAULT_FEATURES = ("open", "high", "low", "close", "volume")


@dataclass(frozen=True)
class OhlcvRecord:
    day: date
    open: float
    high: float
    low: float
    close: float
    volume: float
    marketcap: float


@dataclass(frozen=True)
class PriceSeries:
    """A single asset's daily history, strictly ascending by date."""

    symbol: str
    name: str
    records: tuple[OhlcvRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def dates(self) -> list[date]:
        return [r.day for r in self.records]

    def column(self, field: str) -> np.ndarray:
        """Values of one numeric field as a float64 vector."""
        if field not in PRICE_FIELDS:
            raise SchemaError(f"unknown price field {field!r}; expected one of {PRICE_FIELDS}")
        return np.array([getattr(r, field) for r in self.records], dtype=np.float64)


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _parse_day(raw: str, line_no: int) -> date:
    s = raw.strip()
    try:
        return datetime.fromisoformat(s).date()
    except ValueError:
        pass
    try:
        return datetime.strptime(s, "%Y-%m-%d %H:%M:%S").date()
    except ValueError:
        raise ValidationError(f"line {line_no}: cannot parse date {raw!r}") from None


def _parse_number(raw: str, column: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(
            f"line {line_no}: cannot parse {column} value {raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise ValidationError(f"line {line_no}: non-finite {column} value {raw!r}")
    return value


def parse_csv(source) -> PriceSeries:
    """Parse one asset's history from CSV text, bytes, or a file object.

    Rows may arrive in any order; the result is sorted ascending by date.
    Raises SchemaError for header problems and ValidationError (with line
    numbers) for bad rows.
    """
    text = _as_text(source)
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file: header row is missing") from None
    cols: dict[str, int] = {}
    for idx, name in enumerate(header):
        key = name.strip().lower()
        if key and key not in cols:
            cols[key] = idx
    missing = [c for c in REQUIRED_COLUMNS if c not in cols]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    symbol = ""
    asset_name = ""
    records: list[OhlcvRecord] = []
    first_line: dict[date, int] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ValidationError(
                f"line {line_no}: expected {len(header)} fields, got {len(row)}"
            )
        day = _parse_day(row[cols["date"]], line_no)
        if day in first_line:
            raise ValidationError(
                f"duplicate date {day.isoformat()} (lines {first_line[day]} and {line_no})"
            )
        first_line[day] = line_no
        values = {
            field: _parse_number(row[cols[field]], field, line_no)
            for field in PRICE_FIELDS
        }
        for field in ("open", "high", "low", "close"):
            if values[field] < 0:
                raise ValidationError(f"line {line_no}: negative {field} price {values[field]}")
        if values["volume"] < 0:
            raise ValidationError(f"line {line_no}: negative volume {values['volume']}")
        if values["marketcap"] < 0:
            raise ValidationError(f"line {line_no}: negative marketcap {values['marketcap']}")
        lo, hi = values["low"], values["high"]
        if lo > min(values["open"], values["close"]) or hi < max(values["open"], values["close"]):
            raise ValidationError(
                "line {}: OHLC ordering violated (open={}, high={}, low={}, close={})".format(
                    line_no, values["open"], hi, lo, values["close"]
                )
            )
        if not symbol:
            symbol = row[cols["symbol"]].strip()
            asset_name = row[cols["name"]].strip()
        records.append(OhlcvRecord(day=day, **values))
    if not records:
        raise ValidationError("file contains a header but no data rows")
    records.sort(key=lambda r: r.day)
    return PriceSeries(symbol=symbol, name=asset_name, records=tuple(records))


def load_csv(path) -> PriceSeries:
    """Read and parse one asset CSV from disk."""
    with open(path, "rb") as fh:
        return parse_csv(fh)


def series_to_features(series: PriceSeries, feature_names) -> np.ndarray:
    """Stack the named fields into a (T, d) feature matrix, column order as given."""
    names = tuple(feature_names)
    if not names:
        raise SchemaError("feature list is empty")
    return np.column_stack([series.column(n) for n in names])


def rebase_to_100(series: PriceSeries, field: str = "close") -> np.ndarray:
    """Scale a price column so the first observation equals exactly 100."""
    values = series.column(field)
    first = values[0]
    if first <= 0:
        raise DomainError(
            f"cannot rebase {series.symbol or 'series'}: first {field} value is {first}"
        )
    return values / first * 100.0


def align_on_dates(series_list) -> tuple[list[date], list[PriceSeries]]:
    """Restrict several assets to their common calendar dates.

    Returns the sorted shared dates and, in input order, each series reduced
    to exactly those dates. Raises SizingError when the intersection is empty.
    """
    series_list = list(series_list)
    if not series_list:
        raise SizingError("no series given")
    common = set(series_list[0].dates())
    for s in series_list[1:]:
        common &= set(s.dates())
    if not common:
        raise SizingError("series share no common dates")
    ordered = sorted(common)
    aligned = []
    for s in series_list:
        keep = tuple(r for r in s.records if r.day in common)
        aligned.append(replace(s, records=keep))
    return ordered, aligned


class MinMaxScaler:
    """Per-feature affine map onto [0, 1], fit on training rows only.

    A constant feature (zero range) maps to 0.5 everywhere and inverts back
    to its original value, so degenerate fixtures remain usable.
    """

    def __init__(self):
        self.feature_names: tuple[str, ...] | None = None
        self.mins: np.ndarray | None = None
        self.maxs: np.ndarray | None = None

    def fit(self, rows, feature_names=None) -> "MinMaxScaler":
        m = np.asarray(rows, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"expected a 2-D row matrix, got {m.ndim} dimension(s)")
        if m.shape[0] < 2:
            raise SizingError(f"need at least 2 rows to fit a scaler, got {m.shape[0]}")
        if not np.all(np.isfinite(m)):
            raise DomainError("cannot fit scaler: non-finite values present")
        self.mins = m.min(axis=0)
        self.maxs = m.max(axis=0)
        if feature_names is not None:
            names = tuple(feature_names)
            if len(names) != m.shape[1]:
                raise ShapeError(
                    f"{len(names)} feature names for {m.shape[1]} columns"
                )
            self.feature_names = names
        return self

    def _check_fitted(self):
        if self.mins is None or self.maxs is None:
            raise StateError("scaler used before fit")

    def _check_width(self, m: np.ndarray):
        if m.shape[-1] != self.mins.shape[0]:
            raise ShapeError(
                f"scaler was fit on {self.mins.shape[0]} feature(s), got {m.shape[-1]}"
            )

    def apply(self, rows) -> np.ndarray:
        """Map rows into [0, 1] feature-wise (values outside the fit range extrapolate)."""
        self._check_fitted()
        m = np.asarray(rows, dtype=np.float64)
        self._check_width(m)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (m - self.mins) / safe
        return np.where(span > 0, out, 0.5)

    def invert(self, rows) -> np.ndarray:
        """Undo :meth:`apply`; exact for constant features."""
        self._check_fitted()
        m = np.asarray(rows, dtype=np.float64)
        self._check_width(m)
        return self.mins + m * (self.maxs - self.mins)

    def apply_column(self, col: int, values) -> np.ndarray:
        self._check_fitted()
        v = np.asarray(values, dtype=np.float64)
        span = self.maxs[col] - self.mins[col]
        if span > 0:
            return (v - self.mins[col]) / span
        return np.full_like(v, 0.5)

    def invert_column(self, col: int, values) -> np.ndarray:
        """Undo scaling for a single feature column (any array shape)."""
        self._check_fitted()
        v = np.asarray(values, dtype=np.float64)
        return self.mins[col] + v * (self.maxs[col] - self.mins[col])

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "mins": [float(x) for x in self.mins],
            "maxs": [float(x) for x in self.maxs],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MinMaxScaler":
        scaler = cls()
        scaler.mins = np.asarray(payload["mins"], dtype=np.float64)
        scaler.maxs = np.asarray(payload["maxs"], dtype=np.float64)
        names = payload.get("feature_names")
        scaler.feature_names = tuple(names) if names else None
        return scaler


@dataclass
class WindowedDataset:
    """Supervised sliding windows: X[i] holds n_in consecutive feature rows,
    Y[i] the next n_out values of the target column."""

    X: np.ndarray  # (N, n_in, d)
    Y: np.ndarray  # (N, n_out)
    feature_names: tuple[str, ...]
    target_col: int
    scaler: MinMaxScaler | None = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps_in(self) -> int:
        return self.X.shape[1]

    @property
    def n_features(self) -> int:
        return self.X.shape[2]

    @property
    def n_steps_out(self) -> int:
        return self.Y.shape[1]


def make_windows(
    features,
    target_col: int,
    n_steps_in: int,
    n_steps_out: int,
    feature_names=None,
    scaler: MinMaxScaler | None = None,
) -> WindowedDataset:
    """Slide a window of length n_steps_in over (T, d) rows.

    Sample i uses feature rows [i, i + n_steps_in) and target-column rows
    [i + n_steps_in, i + n_steps_in + n_steps_out), giving
    N = T - n_steps_in - n_steps_out + 1 samples.
    """
    mat = np.asarray(features, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got {mat.ndim} dimension(s)")
    T, d = mat.shape
    if not 0 <= target_col < d:
        raise ShapeError(f"target column {target_col} out of range for {d} feature(s)")
    if n_steps_in < 1 or n_steps_out < 1:
        raise SizingError(
            f"window sizes must be at least 1, got n_steps_in={n_steps_in}, n_steps_out={n_steps_out}"
        )
    if T < n_steps_in + n_steps_out:
        raise SizingError(
            f"need at least {n_steps_in + n_steps_out} rows for one window, got {T}"
        )
    N = T - n_steps_in - n_steps_out + 1
    X = np.stack([mat[i : i + n_steps_in] for i in range(N)])
    target = mat[:, target_col]
    Y = np.stack([target[i + n_steps_in : i + n_steps_in + n_steps_out] for i in range(N)])
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{j}" for j in range(d)
    )
    if len(names) != d:
        raise ShapeError(f"{len(names)} feature names for {d} columns")
    return WindowedDataset(X=X, Y=Y, feature_names=names, target_col=target_col, scaler=scaler)


def chrono_split(dataset: WindowedDataset, train_fraction: float):
    """Split windows chronologically; train size is floor(N * train_fraction).

    Both parts must be non-empty, otherwise SizingError.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train fraction must be in (0, 1), got {train_fraction}")
    N = dataset.n_samples
    n_train = int(N * train_fraction)
    if n_train < 1 or N - n_train < 1:
        raise SizingError(
            f"train fraction {train_fraction} leaves an empty split for {N} sample(s)"
        )
    train = replace(dataset, X=dataset.X[:n_train], Y=dataset.Y[:n_train])
    test = replace(dataset, X=dataset.X[n_train:], Y=dataset.Y[n_train:])
    return train, test


def train_row_count(n_train_windows: int, n_steps_in: int, n_steps_out: int) -> int:
    """Number of leading raw rows touched by the first ``n_train_windows`` windows."""
    return n_train_windows + n_steps_in + n_steps_out - 1


def windows_to_csv(dataset: WindowedDataset, fh) -> None:
    """Dump windows sample-major: one row per sample, features then targets."""
    writer = csv.writer(fh, lineterminator="\n")
    header = ["sample"]
    for t in range(dataset.n_steps_in):
        for name in dataset.feature_names:
            header.append(f"x{t}_{name}")
    for s in range(dataset.n_steps_out):
        header.append(f"y{s}")
    writer.writerow(header)
    for i in range(dataset.n_samples):
        row = [str(i)]
        row.extend(repr(float(v)) for v in dataset.X[i].ravel())
        row.extend(repr(float(v)) for v in dataset.Y[i])
        writer.writerow(row)
