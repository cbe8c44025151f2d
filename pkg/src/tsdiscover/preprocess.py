"""From hourly market inputs to the daily analysis panel."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import PEAK_HOURS, RegimeSpec, TimeSeriesDataset, VariableMeta


class PreprocessError(ValueError):
    pass


AGGREGATION_RULES = ("mean", "sum", "daily_close", "daily_value")


def decompose_prices(hub_price, lam):
    """Price differential ``hub - lambda`` (scalar or array).

    Rounded so that ``lam + result == hub`` holds exactly in float64: when
    plain subtraction does not re-add exactly, the nearest neighbouring
    float that does is used.
    """
    hub = np.asarray(hub_price, dtype=float)
    lam = np.asarray(lam, dtype=float)
    hub, lam = np.broadcast_arrays(hub, lam)
    out = np.array(hub - lam, dtype=float)
    flat_out, flat_hub, flat_lam = out.reshape(-1), hub.reshape(-1), lam.reshape(-1)
    for i in np.flatnonzero((flat_lam + flat_out != flat_hub) & np.isfinite(flat_out)):
        flat_out[i] = _exact_difference(flat_hub[i], flat_lam[i], flat_out[i])
    return float(out) if out.ndim == 0 else out


def _exact_difference(h: float, l: float, d: float) -> float:
    down = up = d
    for _ in range(64):
        down = np.nextafter(down, -np.inf)
        up = np.nextafter(up, np.inf)
        for cand in (up, down):
            if l + cand == h:
                return float(cand)
    return d


# -- hourly to daily --------------------------------------------------------------

def _hourly_frame(panel: pd.DataFrame) -> pd.DataFrame:
    if "timestamp" in panel.columns:
        idx = pd.DatetimeIndex(pd.to_datetime(panel["timestamp"]))
        frame = panel.drop(columns="timestamp").set_axis(idx, axis=0)
    elif isinstance(panel.index, pd.DatetimeIndex):
        frame = panel
    else:
        raise PreprocessError("hourly panel needs a 'timestamp' column or a DatetimeIndex")
    if frame.index.has_duplicates:
        dup = frame.index[frame.index.duplicated()][0]
        raise PreprocessError(f"duplicate hourly timestamp {dup}")
    frame = frame.sort_index()
    if len(frame) > 1:
        gaps = np.diff(frame.index.values).astype("timedelta64[m]").astype(int)
        if np.any(gaps % 60 != 0) or np.any(gaps <= 0):
            raise PreprocessError("hourly panel timestamps are not on an hourly grid")
    return frame.astype(float)


def _hours_of(regime) -> str:
    if isinstance(regime, RegimeSpec):
        return regime.hours
    if regime in ("peak", "offpeak"):
        return regime
    raise PreprocessError(f"unknown regime {regime!r}; expected 'peak', 'offpeak' or a RegimeSpec")


def aggregate_daily(panel: pd.DataFrame, regime, rules: dict, variables=None) -> TimeSeriesDataset:
    """One row per calendar day.

    ``mean`` and ``sum`` use the regime's hours (peak is 06:00-21:00
    inclusive, off-peak the rest); ``daily_close`` takes the last observed
    value of the day and ``daily_value`` the first, both ignoring hours.
    A day with nothing to aggregate becomes a masked cell.
    """
    frame = _hourly_frame(panel)
    missing = [c for c in frame.columns if c not in rules]
    if missing:
        raise PreprocessError(f"no aggregation rule for columns {missing}")
    bad = {c: r for c, r in rules.items() if r not in AGGREGATION_RULES}
    if bad:
        raise PreprocessError(f"unknown aggregation rules {bad}")
    unknown = [c for c in rules if c not in frame.columns]
    if unknown:
        raise PreprocessError(f"rules name columns absent from the panel: {unknown}")

    hours = _hours_of(regime)
    in_peak = frame.index.hour.isin(list(PEAK_HOURS))
    in_regime = in_peak if hours == "peak" else ~in_peak
    day = frame.index.normalize()
    days = pd.date_range(day.min(), day.max(), freq="D")
    out = {}
    for col in frame.columns:
        s = frame[col]
        rule = rules[col]
        if rule in ("mean", "sum"):
            g = s[in_regime].groupby(day[in_regime])
            agg = g.mean() if rule == "mean" else g.sum(min_count=1)
        elif rule == "daily_close":
            agg = s.groupby(day).last()
        else:
            agg = s.groupby(day).first()
        out[col] = agg.reindex(days)
    daily = pd.DataFrame(out, index=days)
    names = list(frame.columns)
    if variables is None:
        variables = [VariableMeta(n) for n in names]
    values = daily.to_numpy(dtype=float)
    return TimeSeriesDataset(days.values.astype("datetime64[D]"), values, ~np.isfinite(values), variables)


# -- gap filling --------------------------------------------------------------------

def fill_gas_prices(series):
    """Forward fill; a leading gap has no predecessor and stays missing (NaN)."""
    s = pd.Series(np.asarray(series, dtype=float))
    return s.ffill().to_numpy()


def fill_temperature(avg, tmin=None, tmax=None):
    """Fill average temperature from the min/max midpoint, then by linear interpolation.

    Gaps at either end of the series are left missing.
    """
    a = np.array(avg, dtype=float)
    if tmin is not None and tmax is not None:
        mid = (np.asarray(tmin, dtype=float) + np.asarray(tmax, dtype=float)) / 2.0
        use = ~np.isfinite(a) & np.isfinite(mid)
        a[use] = mid[use]
    return pd.Series(a).interpolate(method="linear", limit_area="inside").to_numpy()


# -- weather PCA --------------------------------------------------------------------

class WeatherPCA(TransformerMixin, BaseEstimator):
    """Correlation-matrix PCA with Kaiser-Guttman retention.

    Columns are standardized with the population standard deviation, the
    correlation matrix is eigendecomposed, and components whose eigenvalue
    is strictly greater than one are kept. Each loading vector is signed so
    that its largest-magnitude entry is positive.
    """

    def __init__(self, threshold: float = 1.0):
        self.threshold = threshold

    def fit(self, X, y=None, columns=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise PreprocessError("PCA input must be a 2-D matrix")
        n, p = X.shape
        cols = list(columns) if columns is not None else [f"x{j}" for j in range(p)]
        if not np.all(np.isfinite(X)):
            raise PreprocessError("PCA input contains missing values; fill first")
        if n < p + 1:
            raise PreprocessError(f"PCA needs at least {p + 1} rows for {p} columns, got {n}")
        means = X.mean(axis=0)
        scales = X.std(axis=0)
        flat = np.flatnonzero(scales <= 1e-12 * np.maximum(1.0, np.abs(means)))
        if flat.size:
            raise PreprocessError(f"zero-variance column {cols[flat[0]]!r}")
        Zs = (X - means) / scales
        corr = Zs.T @ Zs / n
        evals, evecs = np.linalg.eigh(corr)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        lead = np.argmax(np.abs(evecs), axis=0)
        evecs = evecs * np.sign(evecs[lead, np.arange(p)])
        m = int(np.sum(evals > self.threshold))
        self.columns_ = cols
        self.means_ = means
        self.scales_ = scales
        self.eigenvalues_ = evals
        self.components_ = evecs
        self.n_components_ = m
        self.loadings_ = evecs[:, :m]
        self.explained_variance_ratio_ = evals[:m] / p
        return self

    def transform(self, X):
        check_is_fitted(self, "loadings_")
        X = np.asarray(X, dtype=float)
        return ((X - self.means_) / self.scales_) @ self.loadings_

    def to_dict(self) -> dict:
        check_is_fitted(self, "loadings_")
        return {
            "threshold": self.threshold,
            "columns": self.columns_,
            "means": self.means_.tolist(),
            "scales": self.scales_.tolist(),
            "eigenvalues": self.eigenvalues_.tolist(),
            "components": self.components_.tolist(),
            "n_components": self.n_components_,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeatherPCA":
        model = cls(threshold=d["threshold"])
        model.columns_ = list(d["columns"])
        model.means_ = np.asarray(d["means"])
        model.scales_ = np.asarray(d["scales"])
        model.eigenvalues_ = np.asarray(d["eigenvalues"])
        model.components_ = np.asarray(d["components"])
        model.n_components_ = int(d["n_components"])
        model.loadings_ = model.components_[:, : model.n_components_]
        model.explained_variance_ratio_ = model.eigenvalues_[: model.n_components_] / len(model.columns_)
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "WeatherPCA":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def pca_weather(inputs, columns=None):
    """Fit :class:`WeatherPCA` and return ``(model, scores)``."""
    model = WeatherPCA().fit(inputs, columns=columns)
    return model, model.transform(inputs)


# -- controls -------------------------------------------------------------------------

HARMONIC_PERIODS = {"annual": 365.25, "semiannual": 182.625, "weekly": 7.0}


def gen_controls(dates) -> tuple[pd.DataFrame, list[VariableMeta]]:
    """Seasonal harmonics, linear trend and weekend indicator.

    Phase is anchored at the first date (day index 0); the trend runs
    from 0 on the first date to 1 on the last.
    """
    d = np.asarray(dates, dtype="datetime64[D]")
    if d.size == 0:
        raise PreprocessError("no dates")
    t = (d - d[0]).astype(float)
    cols, meta = {}, []
    for name, period in HARMONIC_PERIODS.items():
        w = 2 * np.pi * t / period
        for fn, f in (("sin", np.sin), ("cos", np.cos)):
            cols[f"{name}_{fn}"] = f(w)
            meta.append(VariableMeta(f"{name}_{fn}", "control_harmonic"))
    span = t[-1] - t[0]
    cols["trend"] = (t - t[0]) / span if span > 0 else np.zeros_like(t)
    meta.append(VariableMeta("trend", "control_trend"))
    weekday = pd.DatetimeIndex(d).dayofweek
    cols["weekend"] = (weekday >= 5).astype(float)
    meta.append(VariableMeta("weekend", "control_weekend"))
    return pd.DataFrame(cols, index=pd.DatetimeIndex(d)), meta


# -- pipeline ---------------------------------------------------------------------------

@dataclass
class PreprocessConfig:
    """Column roles and rules for :func:`build_daily_panel`.

    ``hubs`` are hub price columns turned into ``<hub>_diff`` differentials
    against ``lambda_column``; ``temperature`` maps an average-temperature
    column to its ``[tmin, tmax]`` columns; ``weather`` lists the PCA inputs,
    which are replaced by ``weather_pc<n>`` scores.
    """

    lambda_column: str
    hubs: list = field(default_factory=list)
    rules: dict = field(default_factory=dict)
    roles: dict = field(default_factory=dict)
    gas: list = field(default_factory=list)
    temperature: dict = field(default_factory=dict)
    weather: list = field(default_factory=list)
    controls: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise PreprocessError(f"unknown preprocess config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def build_daily_panel(panel: pd.DataFrame, regime, config: PreprocessConfig):
    """Full hourly-to-daily pipeline: ``(dataset, fitted WeatherPCA or None)``."""
    frame = _hourly_frame(panel).copy()
    lam = config.lambda_column
    if lam not in frame.columns:
        raise PreprocessError(f"lambda column {lam!r} missing")
    rules = dict(config.rules)
    roles = dict(config.roles)
    for hub in config.hubs:
        if hub not in frame.columns:
            raise PreprocessError(f"hub column {hub!r} missing")
        frame[f"{hub}_diff"] = decompose_prices(frame[hub].to_numpy(), frame[lam].to_numpy())
        rules.setdefault(f"{hub}_diff", rules.get(hub, "mean"))
        roles.setdefault(f"{hub}_diff", "price_differential")
        frame = frame.drop(columns=hub)
        rules.pop(hub, None)
    rules.setdefault(lam, "mean")
    roles.setdefault(lam, "price_lambda")
    daily = aggregate_daily(frame, regime, rules)
    df = daily.to_frame().set_index("date")
    for col in config.gas:
        df[col] = fill_gas_prices(df[col].to_numpy())
    for avg, (tmin, tmax) in config.temperature.items():
        df[avg] = fill_temperature(df[avg].to_numpy(), df[tmin].to_numpy(), df[tmax].to_numpy())
        df = df.drop(columns=[c for c in (tmin, tmax) if c not in config.weather])
    model = None
    if config.weather:
        W = df[config.weather].to_numpy(dtype=float)
        complete = np.all(np.isfinite(W), axis=1)
        model = WeatherPCA().fit(W[complete], columns=config.weather)
        scores = np.full((len(df), model.n_components_), np.nan)
        scores[complete] = model.transform(W[complete])
        df = df.drop(columns=config.weather)
        for c in range(model.n_components_):
            df[f"weather_pc{c + 1}"] = scores[:, c]
            roles[f"weather_pc{c + 1}"] = "weather_pc"
    variables = [VariableMeta(c, roles.get(c)) for c in df.columns]
    if config.controls:
        ctrl, meta = gen_controls(df.index.values)
        df = pd.concat([df, ctrl.set_axis(df.index, axis=0)], axis=1)
        variables += meta
    values = df.to_numpy(dtype=float)
    ds = TimeSeriesDataset(df.index.values.astype("datetime64[D]"), values, ~np.isfinite(values), variables)
    return ds, model
