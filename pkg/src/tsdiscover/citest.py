"""Robust partial correlation test on rank-to-normal transformed data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri, stdtr
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin

from .dataset import TimeSeriesDataset


class CITestError(ValueError):
    """Base class for failures of a single conditional independence test."""


class InsufficientSamplesError(CITestError):
    pass


class ConstantColumnError(CITestError):
    pass


class CollinearConditioningError(CITestError):
    pass


@dataclass(frozen=True)
class CITestResult:
    statistic: float
    p_value: float
    df: int
    n_samples: int
    cond_set: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": self.df,
            "n_samples": self.n_samples,
            "cond_set": [list(c) for c in self.cond_set],
        }


def rank_normal_transform(x) -> np.ndarray:
    """Map values to normal scores ``ndtri(rank / (n + 1))``; ties get average ranks."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError("rank transform needs at least 2 values")
    if np.all(x == x[0]):
        raise ConstantColumnError("cannot rank-transform a constant column")
    return ndtri(rankdata(x) / (n + 1.0))


class RankNormalTransformer(TransformerMixin, BaseEstimator):
    """Column-wise normal-scores transform for use in sklearn pipelines.

    Stateless: each call ranks the columns of the data it is given.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.n_features_in_ = X.shape[1] if X.ndim == 2 else 1
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return rank_normal_transform(X)
        return np.column_stack([rank_normal_transform(X[:, j]) for j in range(X.shape[1])])


def partial_correlation(x, y, Z=None) -> float:
    """Pearson correlation of the residuals of ``x`` and ``y`` regressed on ``[1, Z]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if Z is None:
        Z = np.empty((n, 0))
    Z = np.asarray(Z, dtype=float).reshape(n, -1)
    m = Z.shape[1]
    if n <= m + 2:
        raise InsufficientSamplesError(f"{n} samples for a conditioning set of size {m}")
    design = np.column_stack([np.ones(n), Z])
    if np.linalg.matrix_rank(design) < m + 1:
        raise CollinearConditioningError("conditioning set is collinear")
    coef, *_ = np.linalg.lstsq(design, np.column_stack([x, y]), rcond=None)
    res = np.column_stack([x, y]) - design @ coef
    rx, ry = res[:, 0], res[:, 1]
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        raise ConstantColumnError("residual has zero variance")
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


def t_test_pvalue(rho: float, df: int) -> float:
    """Two-sided Student-t p-value of a (partial) correlation with ``df`` degrees of freedom."""
    if abs(rho) >= 1.0:
        return 0.0
    t = abs(rho) * math.sqrt(df / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stdtr(df, -t)))


def lagged_samples(dataset: TimeSeriesDataset, nodes, tau_max: int | None = None):
    """Lag-aligned columns for ``nodes`` (``(var, lag)`` pairs).

    A target time ``t`` enters when every lag-0 node is unmasked at ``t``
    and every node value is finite. Lagged values come from any row,
    masked or not. Returns ``(matrix n x len(nodes), row_indices)``.
    """
    nodes = [(int(v), int(l)) for v, l in nodes]
    if tau_max is None:
        tau_max = max(l for _, l in nodes)
    T = dataset.T
    t = np.arange(tau_max, T)
    ok = np.ones(t.shape[0], dtype=bool)
    cols = []
    for v, l in nodes:
        col = dataset.values[t - l, v]
        ok &= np.isfinite(col)
        if l == 0:
            ok &= ~dataset.mask[t, v]
        cols.append(col)
    X = np.column_stack(cols) if cols else np.empty((t.shape[0], 0))
    return X[ok], t[ok]


def robust_parcorr_test(dataset: TimeSeriesDataset, x, y, Z=(), tau_max: int | None = None) -> CITestResult:
    """Test ``x _||_ y | Z`` with the rank-based partial correlation.

    ``x`` and members of ``Z`` are ``(var, lag)``; ``y`` is the lag-0
    target ``(var, 0)``. Each column is transformed on the selected
    samples before the residual correlation is computed; the p-value uses
    a Student-t with ``n - |Z| - 2`` degrees of freedom.
    """
    Z = tuple((int(v), int(l)) for v, l in Z)
    if y[1] != 0:
        raise ValueError("target must be at lag 0")
    nodes = [tuple(x), tuple(y), *Z]
    if tau_max is None:
        tau_max = max(l for _, l in nodes)
    data, _ = lagged_samples(dataset, nodes, tau_max)
    n = data.shape[0]
    df = n - len(Z) - 2
    if df < 1:
        raise InsufficientSamplesError(f"{n} effective samples for |Z|={len(Z)}")
    tr = np.column_stack([rank_normal_transform(data[:, c]) for c in range(data.shape[1])])
    rho = partial_correlation(tr[:, 0], tr[:, 1], tr[:, 2:])
    return CITestResult(rho, t_test_pvalue(rho, df), df, n, Z)


class LaggedCITester:
    """Cached rank-based partial correlation tests over one dataset.

    Normal scores and their inner products are cached per effective sample
    set, so each test only inverts a ``(2+|Z|)`` square matrix. Results
    agree with :func:`robust_parcorr_test` to rounding.
    """

    def __init__(self, dataset: TimeSeriesDataset, tau_max: int):
        self.dataset = dataset
        self.tau_max = int(tau_max)
        T = dataset.T
        self._t = np.arange(self.tau_max, T)
        self._finite = np.isfinite(dataset.values)
        self._cache: dict[bytes, dict] = {}
        self.n_tests = 0

    def _rows(self, nodes) -> np.ndarray:
        t = self._t
        ok = np.ones(t.shape[0], dtype=bool)
        for v, l in nodes:
            ok &= self._finite[t - l, v]
            if l == 0:
                ok &= ~self.dataset.mask[t, v]
        return ok

    def _entry(self, ok: np.ndarray) -> dict:
        key = np.packbits(ok).tobytes()
        entry = self._cache.get(key)
        if entry is None:
            if len(self._cache) > 256:
                self._cache.clear()
            entry = {"rows": self._t[ok], "n": int(ok.sum()), "cols": {}, "dots": {}}
            self._cache[key] = entry
        return entry

    def _col(self, entry, node):
        col = entry["cols"].get(node)
        if col is None:
            v, l = node
            raw = self.dataset.values[entry["rows"] - l, v]
            col = rank_normal_transform(raw)
            col = col - col.mean()
            entry["cols"][node] = col
        return col

    def _dot(self, entry, a, b):
        key = (a, b) if a <= b else (b, a)
        d = entry["dots"].get(key)
        if d is None:
            d = float(self._col(entry, a) @ self._col(entry, b))
            entry["dots"][key] = d
        return d

    def run(self, x, y, Z=()) -> CITestResult:
        x = (int(x[0]), int(x[1]))
        y = (int(y[0]), int(y[1]))
        Z = tuple((int(v), int(l)) for v, l in Z)
        nodes = (x, y) + Z
        entry = self._entry(self._rows(nodes))
        n = entry["n"]
        df = n - len(Z) - 2
        if df < 1:
            raise InsufficientSamplesError(f"{n} effective samples for |Z|={len(Z)}")
        self.n_tests += 1
        m = len(nodes)
        C = np.empty((m, m))
        for a in range(m):
            for b in range(a, m):
                C[a, b] = C[b, a] = self._dot(entry, nodes[a], nodes[b])
        if Z:
            czz = C[2:, 2:]
            scale = np.sqrt(np.diag(czz))
            ev = np.linalg.eigvalsh(czz / np.outer(scale, scale))
            if ev[0] < 1e-10:
                raise CollinearConditioningError("conditioning set is collinear")
            P = np.linalg.inv(C)
            denom = P[0, 0] * P[1, 1]
            rho = -P[0, 1] / math.sqrt(denom) if denom > 0 else 0.0
        else:
            rho = C[0, 1] / math.sqrt(C[0, 0] * C[1, 1])
        rho = float(min(1.0, max(-1.0, rho)))
        return CITestResult(rho, t_test_pvalue(rho, df), df, n, Z)
