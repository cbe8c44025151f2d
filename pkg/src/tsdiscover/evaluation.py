"""Scoring against ground truth, the Granger baseline and cross-graph summaries."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator

from .dataset import TimeSeriesDataset
from .engine import EngineConfig, SuiteResult
from .graph import BIDIRECTED, DIRECTED, TemporalCausalGraph
from .validation import check_dataset


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class RecoveryMetrics:
    precision: float
    recall: float
    f1: float
    orientation_accuracy: float
    false_bidirected_rate: float
    n_found: int
    n_true: int
    n_true_positive: int
    time_order_violations: int

    def to_dict(self) -> dict:
        return asdict(self)


def _unordered(key):
    i, j, lag = key
    return key if lag > 0 else (min(i, j), max(i, j), 0)


def edge_precision_recall(found: TemporalCausalGraph, truth: TemporalCausalGraph) -> RecoveryMetrics:
    """Adjacency precision/recall/F1 plus mark agreement on the true positives.

    An empty found set has precision 1.0 (no claims, no false claims). With
    no true positives, orientation accuracy is 1.0 and the false-bidirected
    rate 0.0 since there is nothing to misorient.
    """
    if found.k != truth.k:
        raise EvaluationError(f"graphs differ in size: k={found.k} vs k={truth.k}")
    if found.tau_max != truth.tau_max:
        raise EvaluationError(f"graphs differ in tau_max: {found.tau_max} vs {truth.tau_max}")
    f = {_unordered(key) for key in found.adjacencies()}
    t = {_unordered(key) for key in truth.adjacencies()}
    tp = f & t
    precision = len(tp) / len(f) if f else 1.0
    recall = len(tp) / len(t) if t else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    same = false_bi = 0
    for key in tp:
        fk, tk = found.get_link(*key).kind, truth.get_link(*key).kind
        same += fk == tk
        false_bi += fk == BIDIRECTED and tk != BIDIRECTED
    n = len(tp)
    violations = sum(1 for p in found.validate() if "time order" in p)
    return RecoveryMetrics(
        precision, recall, f1,
        same / n if n else 1.0,
        false_bi / n if n else 0.0,
        len(f), len(t), n, violations,
    )


# -- Granger baseline ---------------------------------------------------------------

def _granger_design(dataset: TimeSeriesDataset, j: int, tau_max: int):
    """Rows with an unmasked target and finite lags; columns ordered (var, lag)."""
    T, k = dataset.shape
    t = np.arange(tau_max, T)
    y = dataset.values[t, j]
    ok = np.isfinite(y) & ~dataset.mask[t, j]
    cols = []
    for v in range(k):
        for lag in range(1, tau_max + 1):
            c = dataset.values[t - lag, v]
            ok &= np.isfinite(c)
            cols.append(c)
    X = np.column_stack(cols)
    return y[ok], X[ok]


def granger_baseline(dataset, config: EngineConfig | None = None) -> TemporalCausalGraph:
    """Full-conditional linear Granger tests for every ordered pair ``i != j``.

    The target is regressed on lags ``1..tau_max`` of all variables; the
    lags of ``i`` are dropped jointly for the F-test. A significant pair
    yields one ``-->`` link at the lag with the largest ``|t|``, carrying
    that coefficient's partial correlation and the F-test p-value.
    """
    config = config or EngineConfig()
    dataset = check_dataset(dataset)
    k, tau = dataset.k, config.tau_max
    if tau < 1:
        raise EvaluationError("Granger tests need tau_max >= 1")
    g = TemporalCausalGraph(k, tau, dataset.names)
    for j in range(k):
        y, X = _granger_design(dataset, j, tau)
        n = y.shape[0]
        p_full = k * tau + 1
        df_full = n - p_full
        if df_full < 1:
            raise EvaluationError(f"{n} samples are too few for {p_full} Granger regressors")
        A = np.column_stack([np.ones(n), X])
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ beta
        rss_full = float(resid @ resid)
        sigma2 = rss_full / df_full
        cov = sigma2 * np.linalg.pinv(A.T @ A)
        for i in range(k):
            if i == j:
                continue
            cols = 1 + i * tau + np.arange(tau)
            keep = np.setdiff1d(np.arange(A.shape[1]), cols)
            br, *_ = np.linalg.lstsq(A[:, keep], y, rcond=None)
            rr = y - A[:, keep] @ br
            rss_r = float(rr @ rr)
            F = ((rss_r - rss_full) / tau) / sigma2
            p = float(stats.f.sf(F, tau, df_full))
            if p < config.pc_alpha:
                tvals = beta[cols] / np.sqrt(np.diag(cov)[cols])
                best = int(np.argmax(np.abs(tvals)))
                tv = float(tvals[best])
                g.set_link(i, j, best + 1, DIRECTED, tv / np.sqrt(tv * tv + df_full), p)
    return g.freeze()


class GrangerBaseline(BaseEstimator):
    def __init__(self, pc_alpha=0.05, tau_max=7):
        self.pc_alpha = pc_alpha
        self.tau_max = tau_max

    def fit(self, X, y=None, mask=None):
        ds = check_dataset(X, mask=mask)
        self.graph_ = granger_baseline(ds, EngineConfig(pc_alpha=self.pc_alpha, tau_max=self.tau_max))
        self.variables_ = ds.names
        return self


# -- effect tables -------------------------------------------------------------------

class EffectTable:
    """Effect strengths per ``(regime, window)`` cell.

    Each cell holds a list of ``(source, lag, value)``; an empty or missing
    cell means no detected effect.
    """

    def __init__(self, cells=None):
        self.cells: dict[tuple[str, str], list] = {}
        for key, effects in (cells or {}).items():
            for source, lag, value in effects:
                self.add(key[0], key[1], source, lag, value)

    def add(self, regime: str, window: str, source: str, lag, value: float):
        value = float(value)
        if not -1.0 <= value <= 1.0:
            raise EvaluationError(f"effect {value} outside [-1, 1] for {source} in {regime} {window}")
        self.cells.setdefault((regime, window), []).append((source, lag, value))

    def __len__(self):
        return sum(len(v) for v in self.cells.values())

    def keys(self):
        return sorted(k for k, v in self.cells.items() if v)

    def effects(self, regime: str, window: str) -> list:
        return list(self.cells.get((regime, window), []))

    @classmethod
    def from_csv(cls, path, table: str | None = None) -> "EffectTable":
        """Read ``window,regime,source,lag,value`` rows (plus an optional ``table`` filter column)."""
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if table is not None and row.get("table") != table:
                    continue
                lag = int(row["lag"]) if row.get("lag") not in (None, "") else None
                out.add(row["regime"], row["window"], row["source"], lag, row["value"])
        return out

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"regime": r, "window": w, "source": s, "lag": lag, "value": v}
            for (r, w), eff in sorted(self.cells.items()) for s, lag, v in eff
        ]
        return pd.DataFrame(rows, columns=["regime", "window", "source", "lag", "value"])

    @classmethod
    def from_graphs(cls, graphs: dict, sources, target: str) -> "EffectTable":
        """Strengths of ``-->`` links from ``sources`` into ``target`` in suite graphs."""
        out = cls()
        for (regime, window), g in sorted(graphs.items()):
            if target not in g.variables:
                continue
            j = g.variables.index(target)
            for name in sources:
                if name not in g.variables:
                    continue
                i = g.variables.index(name)
                for lag in range(g.tau_max + 1):
                    m = g.get_link(i, j, lag)
                    if m is not None and m.kind == DIRECTED and m.strength is not None:
                        out.add(regime, window, name, lag, m.strength)
        return out


REFERENCE_EFFECTS = "wind_gas_lambda_effects.csv"


def load_reference_effects() -> tuple[EffectTable, EffectTable]:
    """The shipped wind and gas-hub effects on system lambda: ``(wind, gas)``."""
    path = resources.files("tsdiscover") / "data" / REFERENCE_EFFECTS
    with resources.as_file(path) as p:
        return EffectTable.from_csv(p, "wind"), EffectTable.from_csv(p, "gas")


def effect_ratio_periods(wind: EffectTable, gas: EffectTable) -> pd.DataFrame:
    """One row per cell with a gas effect: ``|wind| / max |gas|``."""
    rows = []
    for key in gas.keys():
        w = wind.effects(*key)
        if not w:
            raise EvaluationError(f"no wind effect for {key}; tables are not aligned")
        if len(w) > 1:
            raise EvaluationError(f"several wind effects for {key}")
        g = max(abs(v) for _, _, v in gas.effects(*key))
        if g == 0:
            continue
        wv = abs(w[0][2])
        rows.append({"regime": key[0], "window": key[1], "wind": wv, "gas": g, "ratio": wv / g})
    return pd.DataFrame(rows, columns=["regime", "window", "wind", "gas", "ratio"])


def effect_ratio_summary(wind: EffectTable, gas: EffectTable) -> float:
    """Mean over periods with a gas effect of ``|wind| / max_hub |gas|``."""
    periods = effect_ratio_periods(wind, gas)
    if periods.empty:
        raise EvaluationError("no period has a gas effect")
    return float(periods["ratio"].mean())


# -- stability across suite cells --------------------------------------------------------

def stability_report(graphs) -> pd.DataFrame:
    """Presence, mark, sign and strength of every link in any suite graph.

    One row per ``(link, regime, window)``; links never present are
    omitted. Use :func:`stability_matrix` for the regime x window view.
    """
    if isinstance(graphs, SuiteResult):
        graphs = graphs.graphs
    keys = set()
    for g in graphs.values():
        for i, j, lag, _ in g.links():
            keys.add((g.variables[i], g.variables[j], lag))
    rows = []
    for (regime, window), g in sorted(graphs.items()):
        for src, tgt, lag in sorted(keys):
            m = None
            if src in g.variables and tgt in g.variables:
                m = g.get_link(g.variables.index(src), g.variables.index(tgt), lag)
            s = None if m is None else m.strength
            rows.append({
                "source": src, "target": tgt, "lag": lag, "regime": regime, "window": window,
                "present": m is not None,
                "mark": None if m is None else m.kind,
                "strength": s,
                "sign": 0 if s is None else int(np.sign(s)),
            })
    return pd.DataFrame(
        rows, columns=["source", "target", "lag", "regime", "window", "present", "mark", "strength", "sign"]
    )


def stability_matrix(report: pd.DataFrame, source: str, target: str, lag: int, value: str = "sign"):
    """Regime x window table of one link's ``value`` column."""
    sel = report[(report.source == source) & (report.target == target) & (report.lag == lag)]
    return sel.pivot(index="regime", columns="window", values=value)
