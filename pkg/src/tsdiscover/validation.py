"""Input coercion helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataset import TimeSeriesDataset, VariableMeta


def check_dataset(X, mask=None, start="2000-01-01", variables=None) -> TimeSeriesDataset:
    """Coerce ``X`` into a :class:`TimeSeriesDataset`.

    Accepts a dataset (returned as is unless ``mask`` is given, in which
    case the masks are combined), a DataFrame with a ``date`` column or a
    DatetimeIndex, or a 2-D array (rows become consecutive days from
    ``start``). Non-finite cells are masked.
    """
    if isinstance(X, TimeSeriesDataset):
        return X if mask is None else X.with_mask(mask)
    if isinstance(X, pd.DataFrame):
        df = X
        if "date" in df.columns:
            dates = pd.to_datetime(df["date"]).to_numpy().astype("datetime64[D]")
            df = df.drop(columns="date")
        elif isinstance(df.index, pd.DatetimeIndex):
            dates = df.index.to_numpy().astype("datetime64[D]")
        else:
            dates = None
        names = [str(c) for c in df.columns]
        values = df.to_numpy(dtype=float)
    else:
        values = np.asarray(X, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {values.shape}")
        names = [f"X{j}" for j in range(values.shape[1])]
        dates = None
    if dates is None:
        dates = np.datetime64(start, "D") + np.arange(values.shape[0])
    if variables is None:
        variables = [VariableMeta(n) for n in names]
    bad = ~np.isfinite(values)
    if mask is not None:
        bad = bad | np.asarray(mask, dtype=bool)
    return TimeSeriesDataset(dates, values, bad, variables)


def check_probability(value, name: str, open_interval: bool = True) -> float:
    value = float(value)
    lo_ok = value > 0 if open_interval else value >= 0
    hi_ok = value < 1 if open_interval else value <= 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {value}")
    return value
