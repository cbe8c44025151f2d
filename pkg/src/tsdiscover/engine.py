"""Two-phase constraint-based discovery for masked, autocorrelated time series.

The skeleton phase removes adjacencies between ``X^i_{t-lag}`` and ``X^j_t``
whenever a rank-based partial correlation test with some conditioning set
of size ``<= max_cond_dim`` fails to reject independence. The orientation
phase turns surviving adjacencies into partial-ancestral marks using time
order, background knowledge, unshielded colliders and FCI-style
propagation. Preliminary rounds feed the lagged parents found so far back
in as default conditions, which restores test power under autocorrelation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from graphlib import CycleError, TopologicalSorter
from itertools import combinations, islice

from sklearn.base import BaseEstimator

from .citest import (
    CITestError,
    CollinearConditioningError,
    LaggedCITester,
)
from .dataset import (
    ALL_REGIMES,
    RegimeSpec,
    TimeSeriesDataset,
    WindowSpec,
    build_regime_mask,
    rolling_windows,
)
from .graph import TemporalCausalGraph, ends_to_kind
from .knowledge import BackgroundKnowledge
from .validation import check_dataset

log = logging.getLogger(__name__)


class EngineError(ValueError):
    pass


COLLIDER_RULES = ("conservative", "majority", "standard")
KNOWLEDGE_SCOPES = ("search", "output")


@dataclass
class EngineConfig:
    """Engine settings.

    ``knowledge_scope="search"`` drops forbidden pairs before any test, which
    shrinks the search. ``"output"`` runs the adjacency search as if no
    knowledge were given and applies it to the final round only, so knowledge
    can remove or orient edges of the free run but never adds one.
    """

    pc_alpha: float = 0.05
    tau_max: int = 7
    max_cond_dim: int = 3
    n_preliminary_iterations: int = 1
    seed: int = 0
    audit_log: bool = True
    max_combinations: int | None = None
    collider_rule: str = "conservative"
    knowledge_scope: str = "search"

    def __post_init__(self):
        if self.knowledge_scope not in KNOWLEDGE_SCOPES:
            raise EngineError(f"knowledge_scope must be one of {KNOWLEDGE_SCOPES}")
        if self.collider_rule not in COLLIDER_RULES:
            raise EngineError(f"collider_rule must be one of {COLLIDER_RULES}")
        if not 0 < self.pc_alpha < 1:
            raise EngineError(f"pc_alpha must be in (0, 1), got {self.pc_alpha}")
        if self.tau_max < 0:
            raise EngineError("tau_max must be >= 0")
        if self.max_cond_dim < 0:
            raise EngineError("max_cond_dim must be >= 0")
        if self.n_preliminary_iterations < 0:
            raise EngineError("n_preliminary_iterations must be >= 0")
        if self.max_combinations is not None and self.max_combinations < 1:
            raise EngineError("max_combinations must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def pair_nodes(key):
    """``(x, y)`` nodes of a canonical link key; ``y`` sits at lag 0."""
    i, j, lag = key
    return (i, lag), (j, 0)


def candidate_keys(k: int, tau_max: int) -> list[tuple[int, int, int]]:
    keys = [(i, j, 0) for i in range(k) for j in range(i + 1, k)]
    keys += [(i, j, lag) for lag in range(1, tau_max + 1) for i in range(k) for j in range(k)]
    return sorted(keys)


class _Adjacency:
    """Neighbour lookup for window nodes ``(var, lag)``, ``0 <= lag <= tau_max``."""

    def __init__(self, keys, k: int, tau_max: int):
        self.tau_max = tau_max
        self.keys = set(keys)
        self.lag_in = [[] for _ in range(k)]
        self.lag_out = [[] for _ in range(k)]
        self.contemp = [[] for _ in range(k)]
        for i, j, lag in sorted(self.keys):
            if lag == 0:
                self.contemp[i].append(j)
                self.contemp[j].append(i)
            else:
                self.lag_in[j].append((i, lag))
                self.lag_out[i].append((j, lag))

    def neighbors(self, node):
        v, l = node
        out = [(a, l + lag) for a, lag in self.lag_in[v] if l + lag <= self.tau_max]
        out += [(b, l - lag) for b, lag in self.lag_out[v] if l - lag >= 0]
        out += [(o, l) for o in self.contemp[v]]
        return out


def _edge_key(u, v):
    """Canonical key of the window edge ``u - v`` and the key-end index of each node."""
    (a, la), (b, lb) = u, v
    d = la - lb
    if d > 0:
        return (a, b, d), 0, 1
    if d < 0:
        return (b, a, -d), 1, 0
    if a == b:
        return None, None, None
    if a < b:
        return (a, b, 0), 0, 1
    return (b, a, 0), 1, 0


def _sepset_lookup(sepsets, u, v):
    """Separating set of window nodes ``u, v`` and the lag shift of their frame."""
    key, _, _ = _edge_key(u, v)
    if key is None or key not in sepsets:
        return None, 0
    return sepsets[key], min(u[1], v[1])


@dataclass
class PairAudit:
    round: int
    key: tuple
    names: tuple
    tests: list = field(default_factory=list)
    max_p: float | None = None
    statistic: float | None = None
    decision: str = "retained"
    sepset: list | None = None
    orientation: list = field(default_factory=list)
    note: str | None = None

    def to_dict(self) -> dict:
        i, j, lag = self.key
        return {
            "round": self.round,
            "x": [i, lag],
            "y": [j, 0],
            "names": list(self.names),
            "tests": self.tests,
            "max_p": self.max_p,
            "statistic": self.statistic,
            "decision": self.decision,
            "sepset": self.sepset,
            "orientation": self.orientation,
            "note": self.note,
        }


class _Round:
    """Skeleton and orientation for one discovery round."""

    def __init__(self, tester, dataset, kb, config, round_index, default_parents=None):
        self.tester = tester
        self.names = dataset.names
        self.k = dataset.k
        self.kb = kb
        self.cfg = config
        self.round = round_index
        self.default_parents = default_parents or {}
        self.audit: dict[tuple, PairAudit] = {}
        self.sepsets: dict[tuple, tuple] = {}
        self.adj: set = set()
        self.marks: dict[tuple, list] = {}
        self.locked: set = set()

    # -- skeleton ------------------------------------------------------------
    def _names(self, key):
        i, j, lag = key
        return self.names[i], self.names[j], lag

    def _default_conditions(self, x, y):
        conds = set()
        tau = self.cfg.tau_max
        for v, l in (x, y):
            for a, lag in self.default_parents.get(v, ()):
                if l + lag <= tau:
                    conds.add((a, l + lag))
        conds.discard(x)
        conds.discard(y)
        return tuple(sorted(conds))

    def skeleton(self):
        cfg = self.cfg
        keys = candidate_keys(self.k, cfg.tau_max)
        adj = set()
        for key in keys:
            a, b, lag = self._names(key)
            rec = PairAudit(self.round, key, (a, b))
            self.audit[key] = rec
            if self.kb is not None and cfg.knowledge_scope == "search" and self.kb.adjacency_forbidden(a, b, lag):
                rec.decision = "forbidden"
                continue
            adj.add(key)
        for p in range(cfg.max_cond_dim + 1):
            index = _Adjacency(adj, self.k, cfg.tau_max)
            removals = {}
            tested_any = False
            for key in sorted(adj):
                x, y = pair_nodes(key)
                D = self._default_conditions(x, y)
                dset = set(D)
                if p == 0:
                    combos = [()]
                else:
                    pool_y = sorted(set(index.neighbors(y)) - {x} - dset)
                    pool_x = sorted(set(index.neighbors(x)) - {y} - dset)
                    if len(pool_y) < p and len(pool_x) < p:
                        continue
                    combos = _unique(combinations(pool_y, p), combinations(pool_x, p))
                    if cfg.max_combinations is not None:
                        combos = islice(combos, cfg.max_combinations)
                outcome = self._test_pair(key, x, y, combos, D)
                tested_any = tested_any or outcome != "untested"
                if outcome is not None and outcome != "untested":
                    removals[key] = outcome
            for key in removals:
                adj.discard(key)
            if p > 0 and not tested_any:
                break
        if self.kb is not None and cfg.knowledge_scope == "output":
            for key in sorted(adj):
                if self.kb.adjacency_forbidden(*self._names(key)):
                    adj.discard(key)
                    self.audit[key].decision = "forbidden"
        self.adj = adj
        return adj

    def _test_pair(self, key, x, y, combos, D):
        """Run tests until one fails to reject; returns a removal reason or ``None``."""
        rec = self.audit[key]
        alpha = self.cfg.pc_alpha
        ran = False
        for S in combos:
            Z = tuple(sorted(set(S) | set(D)))
            try:
                res = self.tester.run(x, y, Z)
            except CollinearConditioningError:
                rec.tests.append({"cond": [list(z) for z in Z], "skipped": "collinear"})
                continue
            except CITestError as exc:
                rec.decision = "insufficient_samples"
                rec.note = str(exc)
                log.warning("pair %s skipped: %s", rec.names, exc)
                return "insufficient_samples"
            ran = True
            if self.cfg.audit_log:
                rec.tests.append(
                    {"cond": [list(z) for z in Z], "statistic": res.statistic, "p": res.p_value,
                     "n": res.n_samples, "df": res.df}
                )
            if rec.max_p is None or res.p_value > rec.max_p:
                rec.max_p = res.p_value
                rec.statistic = res.statistic
            if res.p_value > alpha:
                rec.decision = "removed"
                rec.sepset = [list(z) for z in Z]
                self.sepsets[key] = frozenset(Z)
                return "removed"
        return None if ran else "untested"

    # -- orientation -----------------------------------------------------------
    def _log(self, key, entry):
        self.audit[key].orientation.append(entry)

    def _end(self, u, v):
        """Mark at ``v`` on the window edge ``u - v`` (``None`` if not adjacent)."""
        key, eu, ev = _edge_key(u, v)
        m = self.marks.get(key) if key is not None else None
        return None if m is None else m[ev]

    def _adjacent(self, u, v):
        key, _, _ = _edge_key(u, v)
        return key is not None and key in self.marks

    def _known_nonadjacent(self, u, v):
        """Non-adjacency is only known inside the lag window."""
        if abs(u[1] - v[1]) > self.cfg.tau_max:
            return False
        key, _, _ = _edge_key(u, v)
        return key is not None and key not in self.marks

    def _set(self, u, v, mark, rule):
        """Set the mark at ``v`` on edge ``u - v``; only circles are overwritten."""
        key, eu, ev = _edge_key(u, v)
        cur = self.marks[key][ev]
        if cur == mark:
            return False
        if (key, ev) in self.locked or cur != "o":
            self._log(key, {"rule": rule, "conflict": f"kept {cur!r} over {mark!r}"})
            return False
        self.marks[key][ev] = mark
        self._log(key, {"rule": rule, "end": self.names[v[0]], "mark": mark})
        return True

    def orient(self):
        cfg = self.cfg
        for key in sorted(self.adj):
            self.marks[key] = ["o", "o"] if key[2] == 0 else ["o", ">"]
            if key[2] > 0:
                self.locked.add((key, 1))
                self._log(key, {"rule": "time_order", "end": self.names[key[1]], "mark": ">"})
        if self.kb is not None:
            self._apply_knowledge()
        index = _Adjacency(self.adj, self.k, cfg.tau_max)
        nodes = [(v, l) for l in range(cfg.tau_max + 1) for v in range(self.k)]
        nbrs = {n: sorted(index.neighbors(n)) for n in nodes}
        self._colliders(nodes, nbrs, index)
        self._propagate(nodes, nbrs)
        self._break_cycles()

    def _apply_knowledge(self):
        for key in sorted(self.marks):
            a, b, lag = self._names(key)
            req = self.kb.end_constraints(a, b, lag)
            for ei, end in enumerate(("a", "b")):
                marks = req[end]
                if not marks:
                    continue
                if len(marks) > 1:
                    self._log(key, {"rule": "kb", "conflict": f"contradictory marks {sorted(marks)}"})
                    continue
                (mark,) = marks
                if lag > 0 and ei == 1 and mark != ">":
                    self._log(key, {"rule": "kb", "conflict": "tail at later variable ignored"})
                    continue
                self.marks[key][ei] = mark
                self.locked.add((key, ei))
                self._log(key, {"rule": "kb", "end": (a, b)[ei], "mark": mark})

    def _colliders(self, nodes, nbrs, index):
        heads = []
        for B in nodes:
            nb = nbrs[B]
            for A, C in combinations(nb, 2):
                if min(A[1], B[1], C[1]) != 0:
                    continue
                if not self._known_nonadjacent(A, C):
                    continue
                sep, shift = _sepset_lookup(self.sepsets, A, C)
                if sep is None:
                    continue
                if not self._is_collider(A, B, C, sep, shift, index):
                    continue
                heads.append((A, B))
                heads.append((C, B))
        for u, v in heads:
            self._set(u, v, ">", "collider")

    def _is_collider(self, A, B, C, sep, shift, index):
        """Decide the unshielded triple ``A - B - C``.

        The standard rule reads the one stored separating set. The
        conservative rule re-tests every subset of the neighbours of ``A``
        and ``C`` and orients only when no separating set contains ``B``;
        the majority rule orients when fewer than half do.
        """
        Bs = (B[0], B[1] - shift)
        if self.cfg.collider_rule == "standard" or Bs[1] < 0:
            return Bs not in sep
        a, c = (A[0], A[1] - shift), (C[0], C[1] - shift)
        D = self._default_conditions(a, c)
        dset = set(D)
        pool = sorted((set(index.neighbors(a)) | set(index.neighbors(c))) - {a, c} - dset)
        with_b = without_b = 0
        for p in range(min(self.cfg.max_cond_dim, len(pool)) + 1):
            combos = combinations(pool, p)
            if self.cfg.max_combinations is not None:
                combos = islice(combos, self.cfg.max_combinations)
            for S in combos:
                Z = tuple(sorted(set(S) | dset))
                try:
                    res = self.tester.run(a, c, Z)
                except CITestError:
                    continue
                if res.p_value > self.cfg.pc_alpha:
                    if Bs in Z:
                        with_b += 1
                    else:
                        without_b += 1
        if Bs in sep:
            with_b += 1
        else:
            without_b += 1
        if self.cfg.collider_rule == "majority":
            return with_b < without_b
        return with_b == 0

    def _propagate(self, nodes, nbrs):
        changed = True
        while changed:
            changed = False
            for B in nodes:
                nb = nbrs[B]
                # R1: A *-> B o-* C, A and C not adjacent  =>  B --> C
                for A in nb:
                    if self._end(A, B) != ">":
                        continue
                    for C in nb:
                        if C == A or self._end(C, B) != "o":
                            continue
                        if not self._known_nonadjacent(A, C):
                            continue
                        if self._end(B, C) not in ("o", ">"):
                            continue
                        changed |= self._set(B, C, ">", "R1")
                        changed |= self._set(C, B, "-", "R1")
                # R2: A --> B *-> C or A *-> B --> C, and A *-o C  =>  A *-> C
                for A in nb:
                    for C in nb:
                        if A == C or not self._adjacent(A, C) or self._end(A, C) != "o":
                            continue
                        ab, ba = self._end(A, B), self._end(B, A)
                        bc, cb = self._end(B, C), self._end(C, B)
                        if (ba == "-" and ab == ">" and bc == ">") or (ab == ">" and cb == "-" and bc == ">"):
                            changed |= self._set(A, C, ">", "R2")
                # R3: A *-> B <-* C, A *-o D o-* C, A/C not adjacent, D *-o B  =>  D *-> B
                for A, C in combinations(nb, 2):
                    if self._end(A, B) != ">" or self._end(C, B) != ">":
                        continue
                    if not self._known_nonadjacent(A, C):
                        continue
                    for D in nb:
                        if D in (A, C) or self._end(D, B) != "o":
                            continue
                        if self._end(A, D) == "o" and self._end(C, D) == "o":
                            changed |= self._set(D, B, ">", "R3")
                # R8: A --> B --> C (or A -o B --> C) and A o-> C  =>  A --> C
                for A in nb:
                    if self._end(B, A) != "-":
                        continue
                    ab = self._end(A, B)
                    for C in nb:
                        if C == A or not self._adjacent(A, C):
                            continue
                        if self._end(C, B) != "-" or self._end(B, C) != ">":
                            continue
                        if ab not in (">", "o"):
                            continue
                        if self._end(C, A) == "o" and self._end(A, C) == ">":
                            changed |= self._set(C, A, "-", "R8")

    def _break_cycles(self):
        while True:
            order = TopologicalSorter()
            for (i, j, lag), (mi, mj) in self.marks.items():
                if lag:
                    continue
                if mi == "-" and mj == ">":
                    order.add(j, i)
                elif mi == ">" and mj == "-":
                    order.add(i, j)
            try:
                order.prepare()
                return
            except CycleError as exc:
                cycle = exc.args[1]
            for a, b in zip(cycle[:-1], cycle[1:]):
                # each cycle entry is a direct cause of the next
                key = (min(a, b), max(a, b), 0)
                tail_end = 0 if key[0] == a else 1
                if (key, tail_end) in self.locked:
                    continue
                self.marks[key][tail_end] = "o"
                self._log(key, {"rule": "acyclicity", "reset": "tail to circle"})
                break
            else:
                raise EngineError("knowledge forces a contemporaneous directed cycle")

    # -- result --------------------------------------------------------------------
    def graph(self) -> TemporalCausalGraph:
        g = TemporalCausalGraph(self.k, self.cfg.tau_max, self.names)
        for key in sorted(self.marks):
            mi, mj = self.marks[key]
            if mi == "-" and mj != ">":
                mi = "o"
            rec = self.audit[key]
            g.set_link(*key, ends_to_kind(mi, mj), rec.statistic, rec.max_p)
        return g.freeze()

    def lagged_parents(self) -> dict[int, list]:
        """Lagged ``-->`` or ``o->`` sources of each variable."""
        parents = {v: [] for v in range(self.k)}
        for (i, j, lag), (mi, mj) in sorted(self.marks.items()):
            if lag > 0 and mj == ">" and mi in ("-", "o"):
                parents[j].append((i, lag))
        return parents


def _unique(*iterables):
    seen = set()
    for it in iterables:
        for item in it:
            if item not in seen:
                seen.add(item)
                yield item


def _resolve_kb(kb, dataset):
    if kb is None:
        return None
    unknown = kb.variables() - set(dataset.names)
    if unknown:
        raise EngineError(f"knowledge refers to unknown variables {sorted(unknown)}")
    conflicts = kb.check_consistency()
    if conflicts:
        raise EngineError("inconsistent background knowledge: " + "; ".join(conflicts[:5]))
    return kb


def skeleton_phase(dataset: TimeSeriesDataset, kb=None, config: EngineConfig | None = None):
    """Adjacency search only: ``(set of surviving keys, round state)``."""
    config = config or EngineConfig()
    kb = _resolve_kb(kb, dataset)
    tester = LaggedCITester(dataset, config.tau_max)
    rnd = _Round(tester, dataset, kb, config, 0)
    return rnd.skeleton(), rnd


def orientation_phase(rnd: _Round) -> TemporalCausalGraph:
    rnd.orient()
    return rnd.graph()


def discover(dataset: TimeSeriesDataset, kb: BackgroundKnowledge | None = None,
             config: EngineConfig | None = None):
    """Run all rounds and return ``(graph, audit records)``.

    Output is a deterministic function of the dataset, knowledge and
    configuration.
    """
    config = config or EngineConfig()
    kb = _resolve_kb(kb, dataset)
    min_samples = config.max_cond_dim + 3
    if dataset.T - config.tau_max < min_samples:
        raise EngineError(
            f"{dataset.T} rows leave fewer than {min_samples} samples at tau_max={config.tau_max}"
        )
    tester = LaggedCITester(dataset, config.tau_max)
    audit = []
    parents = None
    last = config.n_preliminary_iterations
    for r in range(last + 1):
        # output scope: earlier rounds run without knowledge so the data-driven search matches a free run
        round_kb = kb if config.knowledge_scope == "search" or r == last else None
        rnd = _Round(tester, dataset, round_kb, config, r, parents)
        rnd.skeleton()
        rnd.orient()
        parents = rnd.lagged_parents()
        if config.audit_log:
            audit.extend(rec.to_dict() for _, rec in sorted(rnd.audit.items()))
    graph = rnd.graph()
    problems = graph.validate()
    if problems:
        raise EngineError("engine produced an invalid graph: " + "; ".join(problems))
    return graph, audit


def write_audit(audit, path) -> None:
    with open(path, "w") as fh:
        for rec in audit:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_audit(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def final_round(audit) -> list[dict]:
    last = max(r["round"] for r in audit)
    return [r for r in audit if r["round"] == last]


def replay_adjacencies(audit, alpha: float) -> set[tuple[int, int, int]]:
    """Adjacencies of the final round that survive a stricter ``alpha``."""
    out = set()
    for rec in final_round(audit):
        if rec["decision"] != "retained" or rec["max_p"] is None:
            continue
        if rec["max_p"] <= alpha:
            out.add((rec["x"][0], rec["y"][0], rec["x"][1]))
    return out


class LPCMCI(BaseEstimator):
    """Estimator wrapper around :func:`discover`.

    ``fit`` accepts a :class:`TimeSeriesDataset`, a DataFrame or an
    array; the fitted graph is stored in ``graph_`` and the audit log in
    ``audit_``.
    """

    def __init__(self, pc_alpha=0.05, tau_max=7, max_cond_dim=3, n_preliminary_iterations=1,
                 max_combinations=None, collider_rule="conservative", knowledge_scope="search",
                 seed=0, audit_log=True, knowledge=None):
        self.pc_alpha = pc_alpha
        self.tau_max = tau_max
        self.max_cond_dim = max_cond_dim
        self.n_preliminary_iterations = n_preliminary_iterations
        self.max_combinations = max_combinations
        self.collider_rule = collider_rule
        self.knowledge_scope = knowledge_scope
        self.seed = seed
        self.audit_log = audit_log
        self.knowledge = knowledge

    def _config(self) -> EngineConfig:
        return EngineConfig(
            pc_alpha=self.pc_alpha, tau_max=self.tau_max, max_cond_dim=self.max_cond_dim,
            n_preliminary_iterations=self.n_preliminary_iterations, seed=self.seed,
            audit_log=self.audit_log, max_combinations=self.max_combinations,
            collider_rule=self.collider_rule, knowledge_scope=self.knowledge_scope,
        )

    def fit(self, X, y=None, mask=None):
        dataset = check_dataset(X, mask=mask)
        self.graph_, self.audit_ = discover(dataset, self.knowledge, self._config())
        self.variables_ = dataset.names
        return self


# -- regime suite -------------------------------------------------------------------

@dataclass
class SuiteCell:
    regime: RegimeSpec
    window: str
    graph: TemporalCausalGraph | None = None
    audit: list | None = None
    error: str | None = None

    @property
    def label(self) -> str:
        return f"{self.regime.hours}_{self.regime.season}_{self.window}"


@dataclass
class SuiteResult:
    cells: list

    @property
    def graphs(self) -> dict:
        return {(c.regime.label, c.window): c.graph for c in self.cells if c.graph is not None}

    @property
    def failures(self) -> list:
        return [c for c in self.cells if c.error is not None]

    def summary(self):
        import pandas as pd

        rows = []
        for c in self.cells:
            row = {"regime": c.regime.label, "window": c.window, "error": c.error}
            if c.graph is not None:
                g = c.graph
                strengths = [abs(m.strength) for *_, m in g.links() if m.strength is not None]
                row.update(
                    n_links=len(g),
                    n_directed=g.count("-->"),
                    n_bidirected=g.count("<->"),
                    n_partially_directed=g.count("o->"),
                    n_nondirected=g.count("o-o"),
                    mean_abs_strength=sum(strengths) / len(strengths) if strengths else 0.0,
                )
            rows.append(row)
        return pd.DataFrame(rows)


def _run_cell(dataset, regime, window_label, kb, config):
    try:
        graph, audit = discover(dataset, kb, config)
        return SuiteCell(regime, window_label, graph, audit)
    except Exception as exc:  # reported per cell, suite continues
        log.error("suite cell %s %s failed: %s", regime.label, window_label, exc)
        return SuiteCell(regime, window_label, error=f"{type(exc).__name__}: {exc}")


def suite_tasks(panels, regimes, windows: WindowSpec):
    """``(regime, window label, masked view)`` for each suite cell."""
    if isinstance(panels, TimeSeriesDataset):
        panels = {"peak": panels, "offpeak": panels}
    tasks = []
    for regime in regimes:
        if regime.hours not in panels:
            raise EngineError(f"no panel for {regime.hours!r} hours")
        masked = build_regime_mask(panels[regime.hours], regime)
        for label, view in rolling_windows(masked, windows):
            tasks.append((regime, label, view))
    return tasks


def run_regime_suite(panels, regimes=ALL_REGIMES, windows: WindowSpec | None = None,
                     kb=None, config: EngineConfig | None = None, n_jobs: int = 1) -> SuiteResult:
    """Discovery on every (regime, window) cell.

    ``panels`` maps ``"peak"``/``"offpeak"`` to daily datasets, or is a single
    dataset used for both. Cells are independent; ``n_jobs > 1`` runs them in
    a process pool without changing any result.
    """
    windows = windows or WindowSpec(2019, 2024)
    config = config or EngineConfig()
    tasks = suite_tasks(panels, regimes, windows)
    if n_jobs == 1:
        cells = [_run_cell(view, regime, label, kb, config) for regime, label, view in tasks]
    else:
        from joblib import Parallel, delayed

        cells = Parallel(n_jobs=n_jobs)(
            delayed(_run_cell)(view, regime, label, kb, config) for regime, label, view in tasks
        )
    return SuiteResult(list(cells))
