"""Linear Gaussian structural VAR models with known ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import TimeSeriesDataset, VariableMeta
from .graph import TemporalCausalGraph


class SimulationError(ValueError):
    pass


@dataclass
class GroundTruthSCM:
    """``X_t = sum coef * X_{t-lag}[source] + noise`` over observed and latent variables.

    ``links`` holds ``(source, target, lag, coef)`` over the full variable
    index ``0..k_observed + k_latent - 1``; ``observed_mask[i]`` says whether
    variable ``i`` is emitted by :func:`sample`.
    """

    k_observed: int
    k_latent: int
    links: list
    noise_scales: np.ndarray
    observed_mask: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        k = self.k
        self.links = [(int(s), int(t), int(l), float(c)) for s, t, l, c in self.links]
        self.noise_scales = np.asarray(self.noise_scales, dtype=float).reshape(k)
        self.observed_mask = np.asarray(self.observed_mask, dtype=bool).reshape(k)
        if int(self.observed_mask.sum()) != self.k_observed:
            raise SimulationError("observed_mask does not match k_observed")
        if not self.names:
            obs = iter(range(self.k_observed))
            lat = iter(range(self.k_latent))
            self.names = [f"X{next(obs)}" if o else f"L{next(lat)}" for o in self.observed_mask]
        for s, t, l, c in self.links:
            if not (0 <= s < k and 0 <= t < k) or l < 0:
                raise SimulationError(f"bad link {(s, t, l)}")
            if c == 0.0:
                raise SimulationError(f"zero coefficient on declared link {(s, t, l)}")
            if l == 0 and s == t:
                raise SimulationError("contemporaneous self-link")
        if np.any(self.noise_scales <= 0):
            raise SimulationError("noise scales must be positive")
        self._contemporaneous_order()

    @property
    def k(self) -> int:
        return self.k_observed + self.k_latent

    @property
    def lag_max(self) -> int:
        return max((l for _, _, l, _ in self.links), default=0)

    @property
    def observed_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.observed_mask)]

    def coefficient_matrices(self) -> np.ndarray:
        """``A[lag, target, source]`` for lags ``0..lag_max``."""
        A = np.zeros((self.lag_max + 1, self.k, self.k))
        for s, t, l, c in self.links:
            A[l, t, s] += c
        return A

    def _contemporaneous_order(self) -> list[int]:
        A0 = self.coefficient_matrices()[0] != 0
        indeg = A0.sum(axis=1)
        order, ready = [], [i for i in range(self.k) if indeg[i] == 0]
        while ready:
            i = ready.pop(0)
            order.append(i)
            for t in np.flatnonzero(A0[:, i]):
                indeg[t] -= 1
                if indeg[t] == 0:
                    ready.append(int(t))
        if len(order) != self.k:
            raise SimulationError("contemporaneous links contain a cycle")
        return order

    def companion_matrix(self) -> np.ndarray:
        A = self.coefficient_matrices()
        k, p = self.k, max(self.lag_max, 1)
        B0 = np.linalg.inv(np.eye(k) - A[0])
        comp = np.zeros((k * p, k * p))
        for l in range(1, self.lag_max + 1):
            comp[:k, (l - 1) * k : l * k] = B0 @ A[l]
        if p > 1:
            comp[k:, :-k] = np.eye(k * (p - 1))
        return comp

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion_matrix()))))

    def is_stationary(self) -> bool:
        return self.spectral_radius() < 1.0

    def to_dict(self) -> dict:
        return {
            "k_observed": self.k_observed,
            "k_latent": self.k_latent,
            "links": [list(l) for l in self.links],
            "noise_scales": self.noise_scales.tolist(),
            "observed_mask": self.observed_mask.tolist(),
            "names": list(self.names),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthSCM":
        return cls(
            d["k_observed"], d["k_latent"], [tuple(l) for l in d["links"]],
            d["noise_scales"], d["observed_mask"], d.get("names", []),
        )


def _draw_coef(rng, lo, hi):
    return float(rng.uniform(lo, hi) * rng.choice([-1.0, 1.0]))


def random_svar(
    k_observed: int,
    k_latent: int = 0,
    density: float = 0.3,
    lag_max: int = 1,
    seed: int = 0,
    n_links: int | None = None,
    coef_range: tuple[float, float] = (0.2, 0.8),
    max_tries: int = 1000,
) -> GroundTruthSCM:
    """Random stationary SVAR with self-links on every observed variable.

    Cross links between observed variables at lags ``0..lag_max`` are kept
    with probability ``density`` (or exactly ``n_links`` are drawn);
    contemporaneous links follow a random causal order. Each latent has
    two distinct observed children at random lags and no parents, which is
    the pattern :func:`expected_marks` can project. Coefficients are drawn
    from ``+-coef_range`` and redrawn until the system is stationary.
    """
    if not 0 < density <= 1:
        raise SimulationError("density must be in (0, 1]")
    if lag_max < 0 or k_observed < 1 or k_latent < 0:
        raise SimulationError("bad dimensions")
    if k_latent and k_observed < 2:
        raise SimulationError("latent confounders need two observed children")
    rng = np.random.default_rng(seed)
    order = rng.permutation(k_observed)
    rank = np.empty(k_observed, dtype=int)
    rank[order] = np.arange(k_observed)
    candidates = []
    for lag in range(lag_max + 1):
        for s in range(k_observed):
            for t in range(k_observed):
                if s == t:
                    continue
                if lag == 0 and rank[s] > rank[t]:
                    continue
                candidates.append((s, t, lag))
    if n_links is None:
        chosen = [c for c in candidates if rng.random() < density]
    else:
        if n_links > len(candidates):
            raise SimulationError(f"only {len(candidates)} candidate links for n_links={n_links}")
        idx = rng.choice(len(candidates), size=n_links, replace=False)
        chosen = [candidates[i] for i in sorted(idx)]
    structure = [(s, s, 1) for s in range(k_observed)] if lag_max >= 1 else []
    structure += chosen
    taken = {(min(s, t), max(s, t), l) if l == 0 else (s, t, l) for s, t, l in structure}
    latent_children = []
    for li in range(k_latent):
        for _ in range(100):
            a, b = rng.choice(k_observed, size=2, replace=False)
            la, lb = (int(x) for x in rng.integers(1, lag_max + 2, size=2))
            if la > lb:
                a, b, la, lb = b, a, lb, la
            d = lb - la
            key = (int(a), int(b), d) if d > 0 else (min(a, b), max(a, b), 0)
            if key not in taken:
                taken.add(key)
                latent_children.append(((int(a), la), (int(b), lb)))
                break
        else:
            raise SimulationError("could not place latent confounder")
    k = k_observed + k_latent
    lo, hi = coef_range
    for _ in range(max_tries):
        links = [(s, t, l, _draw_coef(rng, lo, hi)) for s, t, l in structure]
        for li, ((a, la), (b, lb)) in enumerate(latent_children):
            L = k_observed + li
            links.append((L, a, la - 1, _draw_coef(rng, lo, hi)))
            links.append((L, b, lb - 1, _draw_coef(rng, lo, hi)))
        scm = GroundTruthSCM(
            k_observed, k_latent, links, np.ones(k),
            np.r_[np.ones(k_observed, bool), np.zeros(k_latent, bool)],
        )
        if scm.is_stationary():
            return scm
    raise SimulationError(f"no stationary draw after {max_tries} tries")


def latent_motif(
    confounder_coefs=(0.6, 0.6),
    child_lags=(1, 2),
    autocorrelation=(0.5, 0.2),
) -> GroundTruthSCM:
    """Two autocorrelated observed series driven by one white-noise latent.

    ``L(t - child_lags[0]) -> X(t)`` and ``L(t - child_lags[1]) -> Y(t)``;
    ``X`` and ``Y`` never affect each other. With equal self-link
    coefficients and a one-step lag offset the system is unfaithful
    (``X(t-2)`` and ``Y(t)`` are exactly independent given ``X(t-1)``), so
    the defaults differ.
    """
    a, b = confounder_coefs
    la, lb = child_lags
    ax, ay = (autocorrelation, autocorrelation) if np.isscalar(autocorrelation) else autocorrelation
    links = [(2, 0, la, a), (2, 1, lb, b)]
    links += [(v, v, 1, c) for v, c in ((0, ax), (1, ay)) if c]
    return GroundTruthSCM(2, 1, links, np.ones(3), [True, True, False], ["X", "Y", "L"])


def simulate_array(scm: GroundTruthSCM, n: int, burn_in: int = 200, seed: int = 0, noise=None):
    """Full ``(burn_in + n) x k`` trajectory with burn-in removed."""
    if n < 1:
        raise SimulationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    A = scm.coefficient_matrices()
    k, p = scm.k, scm.lag_max
    B0 = np.linalg.inv(np.eye(k) - A[0])
    total = burn_in + n
    if noise is None:
        noise = rng.standard_normal((total, k))
    eps = noise * scm.noise_scales
    X = np.zeros((total + p, k))
    lagged = [(l, A[l]) for l in range(1, p + 1) if np.any(A[l])]
    for t in range(total):
        acc = eps[t].copy()
        for l, Al in lagged:
            acc += Al @ X[p + t - l]
        X[p + t] = B0 @ acc
    return X[p + burn_in :]


def sample(
    scm: GroundTruthSCM,
    n: int,
    burn_in: int = 200,
    seed: int = 0,
    start: str = "2000-01-01",
) -> TimeSeriesDataset:
    """Simulate and return the observed columns as a daily dataset."""
    X = simulate_array(scm, n, burn_in, seed)
    obs = scm.observed_indices
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)
    variables = [VariableMeta(scm.names[i]) for i in obs]
    return TimeSeriesDataset(dates, X[:, obs], None, variables)


def sample_switching(scms, regime_index, burn_in: int = 200, seed: int = 0, start: str = "2000-01-01"):
    """Simulate with the SCM ``scms[regime_index[t]]`` generating row ``t``.

    All SCMs must share the variable layout. Burn-in uses ``scms[regime_index[0]]``.
    """
    regime_index = np.asarray(regime_index, dtype=int)
    n = regime_index.shape[0]
    base = scms[0]
    p = max(s.lag_max for s in scms)
    mats = []
    for s in scms:
        A = np.zeros((p + 1, s.k, s.k))
        A[: s.lag_max + 1] = s.coefficient_matrices()
        mats.append((np.linalg.inv(np.eye(s.k) - A[0]), A, s.noise_scales))
    rng = np.random.default_rng(seed)
    k = base.k
    full_idx = np.r_[np.full(burn_in, regime_index[0]), regime_index]
    eps = rng.standard_normal((full_idx.shape[0], k))
    X = np.zeros((full_idx.shape[0] + p, k))
    for t, r in enumerate(full_idx):
        B0, A, scale = mats[r]
        acc = eps[t] * scale
        for l in range(1, p + 1):
            acc = acc + A[l] @ X[p + t - l]
        X[p + t] = B0 @ acc
    X = X[p + burn_in :]
    obs = base.observed_indices
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)
    return TimeSeriesDataset(dates, X[:, obs], None, [VariableMeta(base.names[i]) for i in obs])


def expected_marks(scm: GroundTruthSCM, tau_max: int | None = None) -> TemporalCausalGraph:
    """Ground-truth marks over the observed variables.

    Observed links become ``-->``; a latent with exactly two observed
    children and no parents becomes ``<->`` between its children at the
    offset of their lags. Other latent structures are rejected.
    """
    obs = scm.observed_indices
    pos = {v: i for i, v in enumerate(obs)}
    latent = [i for i in range(scm.k) if not scm.observed_mask[i]]
    children = {L: [] for L in latent}
    edges = {}
    for s, t, l, c in scm.links:
        if s in pos and t in pos:
            edges[(pos[s], pos[t], l)] = "-->"
        elif s in children and t in pos:
            children[s].append((pos[t], l))
        else:
            raise SimulationError("general latent projection unsupported: latent variable has parents")
    bidirected = {}
    for L, ch in children.items():
        if len(ch) != 2 or ch[0][0] == ch[1][0]:
            raise SimulationError(
                "general latent projection unsupported: each latent needs exactly two distinct observed children"
            )
        (a, la), (b, lb) = sorted(ch, key=lambda x: (x[1], x[0]))
        # the child with the smaller lag sits earlier in time
        if la == lb:
            key = (min(a, b), max(a, b), 0)
        else:
            key = (a, b, lb - la)
        bidirected[key] = "<->"
    lag_needed = max([l for _, _, l in edges] + [l for _, _, l in bidirected] + [0])
    g = TemporalCausalGraph(len(obs), max(lag_needed, tau_max or 0), [scm.names[i] for i in obs])
    for (i, j, l), kind in sorted(bidirected.items()):
        if (i, j, l) in edges or (l == 0 and (j, i, 0) in edges):
            continue
        g.set_link(i, j, l, kind)
    for (i, j, l), kind in sorted(edges.items()):
        g.set_link(i, j, l, kind)
    return g
