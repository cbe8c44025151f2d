"""Daily time-series panel with per-cell masking, regimes and rolling windows."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

ROLES = (
    "price_lambda",
    "price_differential",
    "renewable_forecast",
    "load_forecast",
    "gas_price",
    "gas_generation",
    "weather_pc",
    "control_harmonic",
    "control_trend",
    "control_weekend",
)
CONTROL_ROLES = ("control_harmonic", "control_trend", "control_weekend")

PEAK_HOURS = range(6, 22)
WARM_MONTHS = (5, 6, 7, 8, 9, 10)
COOL_MONTHS = (11, 12, 1, 2, 3, 4)


class DatasetError(ValueError):
    """Raised for malformed panels or invalid mask/window requests."""


@dataclass(frozen=True)
class VariableMeta:
    name: str
    role: str | None = None
    units: str = ""

    def __post_init__(self):
        if self.role is not None and self.role not in ROLES:
            raise DatasetError(f"unknown role {self.role!r} for variable {self.name!r}")

    @property
    def is_control(self) -> bool:
        return self.role in CONTROL_ROLES

    def to_dict(self) -> dict:
        return {"name": self.name, "role": self.role, "units": self.units}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableMeta":
        return cls(name=d["name"], role=d.get("role"), units=d.get("units", ""))


def load_schema(path) -> list[VariableMeta]:
    """Read a JSON list of ``{name, role, units}`` records."""
    with open(path) as fh:
        records = json.load(fh)
    return [VariableMeta.from_dict(r) for r in records]


def save_schema(variables: Sequence[VariableMeta], path) -> None:
    with open(path, "w") as fh:
        json.dump([v.to_dict() for v in variables], fh, indent=2)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class TimeSeriesDataset:
    """Immutable daily panel of ``T`` rows and ``k`` variables.

    ``mask[t, j]`` is True when the cell is excluded as an effect sample.
    Masked cells may hold any value, including NaN. All mask operations
    return a new dataset; arrays are read-only so slices taken from a
    dataset behave as snapshots.
    """

    def __init__(self, timestamps, values, mask=None, variables=None):
        ts = np.asarray(timestamps, dtype="datetime64[D]")
        vals = np.array(values, dtype=float, copy=True)
        if vals.ndim != 2:
            raise DatasetError("values must be a T x k matrix")
        T, k = vals.shape
        if ts.shape != (T,):
            raise DatasetError(f"{ts.shape[0]} timestamps for {T} rows")
        if mask is None:
            msk = np.zeros((T, k), dtype=bool)
        else:
            msk = np.array(mask, dtype=bool, copy=True)
            if msk.shape != (T, k):
                raise DatasetError(f"mask shape {msk.shape} != values shape {(T, k)}")
        if variables is None:
            variables = [VariableMeta(f"X{j}") for j in range(k)]
        variables = [v if isinstance(v, VariableMeta) else VariableMeta(str(v)) for v in variables]
        if len(variables) != k:
            raise DatasetError(f"{len(variables)} variables for {k} columns")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise DatasetError("variable names must be unique")
        if T > 1:
            steps = np.diff(ts).astype(int)
            if np.any(steps != 1):
                bad = int(np.argmax(steps != 1)) + 1
                raise DatasetError(
                    f"timestamps must be consecutive days; break at row {bad} ({ts[bad]})"
                )
        bad = ~np.isfinite(vals) & ~msk
        if bad.any():
            t, j = np.argwhere(bad)[0]
            raise DatasetError(f"non-finite unmasked value at {ts[t]} in column {names[j]!r}")
        self.timestamps = _readonly(ts)
        self.values = _readonly(vals)
        self.mask = _readonly(msk)
        self.variables = tuple(variables)

    # -- basic accessors -------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DatasetError(f"unknown variable {name!r}") from None

    def __repr__(self):
        start = self.timestamps[0] if self.T else None
        end = self.timestamps[-1] if self.T else None
        return (
            f"TimeSeriesDataset(T={self.T}, k={self.k}, {start}..{end}, "
            f"masked={int(self.mask.sum())})"
        )

    def replace(self, values=None, mask=None) -> "TimeSeriesDataset":
        return TimeSeriesDataset(
            self.timestamps,
            self.values if values is None else values,
            self.mask if mask is None else mask,
            self.variables,
        )

    def with_mask(self, extra) -> "TimeSeriesDataset":
        """Union of the current mask and ``extra`` (monotone, order-free)."""
        extra = np.asarray(extra, dtype=bool)
        return self.replace(mask=self.mask | extra)

    def slice_dates(self, start, end) -> "TimeSeriesDataset":
        """Rows with ``start <= date <= end``; shares storage with ``self``."""
        start = np.datetime64(start, "D")
        end = np.datetime64(end, "D")
        lo = int(np.searchsorted(self.timestamps, start, side="left"))
        hi = int(np.searchsorted(self.timestamps, end, side="right"))
        view = object.__new__(TimeSeriesDataset)
        view.timestamps = self.timestamps[lo:hi]
        view.values = self.values[lo:hi]
        view.mask = self.mask[lo:hi]
        view.variables = self.variables
        return view

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.names)
        df = df.where(~self.mask)
        df.insert(0, "date", pd.to_datetime(self.timestamps))
        return df

    def to_csv(self, path) -> None:
        """Write the ``date`` + variable CSV; masked cells are left empty."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date"] + self.names)
            for t in range(self.T):
                row = [str(self.timestamps[t])]
                for j in range(self.k):
                    v = self.values[t, j]
                    row.append("" if self.mask[t, j] or not math.isfinite(v) else repr(float(v)))
                w.writerow(row)

    def save_mask_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date"] + self.names)
            for t in range(self.T):
                w.writerow([str(self.timestamps[t])] + [int(m) for m in self.mask[t]])


def load_csv(path, schema: Sequence[VariableMeta] | None = None) -> TimeSeriesDataset:
    """Load a daily CSV with an ISO-8601 ``date`` column.

    Empty cells become masked NaN. Rows are sorted by date and calendar
    gaps are filled with fully masked rows so that lags line up with days.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "date" not in header:
        raise DatasetError(f"{path}: missing 'date' column")
    date_col = header.index("date")
    columns = [h for i, h in enumerate(header) if i != date_col]
    if schema is None:
        schema = [VariableMeta(c) for c in columns]
    declared = [v.name for v in schema]
    for c in columns:
        if c not in declared:
            raise DatasetError(f"{path}: unknown column {c!r}")
    for c in declared:
        if c not in columns:
            raise DatasetError(f"{path}: declared variable {c!r} missing from header")
    col_pos = [header.index(c) for c in declared]

    dates, data = [], []
    seen = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        raw = row[date_col].strip()
        try:
            d = np.datetime64(raw, "D")
            if np.isnat(d):
                raise ValueError
        except ValueError:
            raise DatasetError(f"{path}: malformed date {raw!r} on line {lineno}") from None
        if d in seen:
            raise DatasetError(f"{path}: duplicate date {d} on lines {seen[d]} and {lineno}")
        seen[d] = lineno
        vals = []
        for name, p in zip(declared, col_pos):
            cell = row[p].strip() if p < len(row) else ""
            if cell == "":
                vals.append(np.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DatasetError(
                    f"{path}: non-numeric value {cell!r} in column {name!r} on line {lineno}"
                ) from None
        dates.append(d)
        data.append(vals)

    if not dates:
        raise DatasetError(f"{path}: no data rows")
    order = np.argsort(np.array(dates))
    dates = np.array(dates)[order]
    values = np.array(data, dtype=float).reshape(len(dates), len(declared))[order]
    full = np.arange(dates[0], dates[-1] + np.timedelta64(1, "D"), dtype="datetime64[D]")
    if len(full) != len(dates):
        out = np.full((len(full), len(declared)), np.nan)
        out[(dates - dates[0]).astype(int)] = values
        values = out
    return TimeSeriesDataset(full, values, ~np.isfinite(values), list(schema))


# -- regimes -------------------------------------------------------------

@dataclass(frozen=True)
class RegimeSpec:
    hours: str = "peak"
    season: str = "warm"

    def __post_init__(self):
        if self.hours not in ("peak", "offpeak"):
            raise DatasetError(f"hours must be 'peak' or 'offpeak', got {self.hours!r}")
        if self.season not in ("warm", "cool"):
            raise DatasetError(f"season must be 'warm' or 'cool', got {self.season!r}")

    @property
    def label(self) -> str:
        return f"{self.hours}-{self.season}"

    @property
    def months(self) -> tuple[int, ...]:
        return WARM_MONTHS if self.season == "warm" else COOL_MONTHS

    @classmethod
    def parse(cls, label: str) -> "RegimeSpec":
        hours, _, season = label.partition("-")
        return cls(hours, season)


ALL_REGIMES = tuple(RegimeSpec(h, s) for h in ("peak", "offpeak") for s in ("cool", "warm"))


def in_season(timestamps, season: str) -> np.ndarray:
    months = pd.DatetimeIndex(np.asarray(timestamps, dtype="datetime64[D]")).month
    keep = WARM_MONTHS if season == "warm" else COOL_MONTHS
    return np.isin(months, keep)


def build_regime_mask(dataset: TimeSeriesDataset, regime: RegimeSpec) -> TimeSeriesDataset:
    """Mask out-of-season rows on every non-control variable."""
    out_rows = ~in_season(dataset.timestamps, regime.season)
    cols = np.array([not v.is_control for v in dataset.variables], dtype=bool)
    return dataset.with_mask(np.outer(out_rows, cols))


def apply_event_mask(
    dataset: TimeSeriesDataset,
    start_date,
    end_date,
    propagate_days: int = 7,
    columns: Iterable[str] | None = None,
) -> TimeSeriesDataset:
    """Mask ``[start_date, end_date + propagate_days]`` on all (or the given) columns.

    The propagation window keeps event rows out of lagged regressors of
    unmasked targets up to ``propagate_days``.
    """
    start = np.datetime64(start_date, "D")
    end = np.datetime64(end_date, "D")
    if start > end:
        raise DatasetError(f"event start {start} after end {end}")
    if propagate_days < 0:
        raise DatasetError("propagate_days must be >= 0")
    first, last = dataset.timestamps[0], dataset.timestamps[-1]
    if start < first or end > last:
        raise DatasetError(f"event {start}..{end} outside dataset range {first}..{last}")
    stop = end + np.timedelta64(propagate_days, "D")
    rows = (dataset.timestamps >= start) & (dataset.timestamps <= stop)
    if columns is None:
        cols = np.ones(dataset.k, dtype=bool)
    else:
        cols = np.zeros(dataset.k, dtype=bool)
        for c in columns:
            cols[dataset.index(c)] = True
    return dataset.with_mask(np.outer(rows, cols))


def propagate_missing(dataset: TimeSeriesDataset, column: str, propagate_days: int = 7):
    """Mask the ``propagate_days`` rows after every missing value of ``column``."""
    j = dataset.index(column)
    miss = ~np.isfinite(dataset.values[:, j])
    rows = miss.copy()
    for d in range(1, propagate_days + 1):
        rows[d:] |= miss[:-d]
    return dataset.with_mask(np.outer(rows, np.ones(dataset.k, dtype=bool)))


# -- rolling windows -------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    """Calendar-year windows over ``start_year..end_year`` (inclusive)."""

    start_year: int
    end_year: int
    length_years: int = 2
    step_years: int = 1

    def __post_init__(self):
        if self.length_years < 1 or self.step_years < 1:
            raise DatasetError("window length and step must be >= 1")
        if self.end_year - self.start_year + 1 < self.length_years:
            raise DatasetError(
                f"window of {self.length_years} years longer than "
                f"{self.start_year}..{self.end_year}"
            )

    def windows(self) -> list[tuple[int, int]]:
        n = (self.end_year - self.start_year + 1 - self.length_years) // self.step_years + 1
        return [
            (y, y + self.length_years - 1)
            for y in range(self.start_year, self.start_year + n * self.step_years, self.step_years)
        ]

    @classmethod
    def parse(cls, text: str) -> "WindowSpec":
        """``start:end[:length[:step]]``, e.g. ``2019:2024:2:1``."""
        parts = [int(p) for p in text.split(":")]
        if len(parts) < 2 or len(parts) > 4:
            raise DatasetError(f"bad window spec {text!r}; expected start:end[:length[:step]]")
        return cls(*parts)


def window_label(window: tuple[int, int]) -> str:
    return f"{window[0]}-{window[1]}"


def rolling_windows(dataset: TimeSeriesDataset, spec: WindowSpec) -> list[tuple[str, TimeSeriesDataset]]:
    """Slice ``dataset`` into the windows of ``spec`` as ``(label, view)`` pairs."""
    years = pd.DatetimeIndex(dataset.timestamps).year
    if dataset.T == 0 or years.min() > spec.start_year or years.max() < spec.end_year:
        span = f"{years.min()}..{years.max()}" if dataset.T else "empty"
        raise DatasetError(
            f"dataset spans {span}, window spec needs {spec.start_year}..{spec.end_year}"
        )
    out = []
    for w in spec.windows():
        view = dataset.slice_dates(f"{w[0]}-01-01", f"{w[1]}-12-31")
        out.append((window_label(w), view))
    return out
