"""Background knowledge: forbidden links and orientation fixings.

Constraints are keyed by ``(source, target, lag)`` over variable names,
meaning ``source(t - lag)`` and ``target(t)``. For ``lag > 0`` a forbidden
triple removes the adjacency outright. At ``lag == 0`` a forbidden triple
says only that ``source`` does not cause ``target``; the engine enforces it
as an arrowhead at the ``source`` end. Forbidding both directions at lag 0
removes the contemporaneous adjacency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dataset import ROLES, VariableMeta
from .graph import KINDS, LAGGED_KINDS, kind_to_ends, mirror


class KnowledgeError(ValueError):
    pass


def _lags(lags, tau_max=None) -> list[int]:
    if isinstance(lags, int):
        lags = [lags]
    elif isinstance(lags, range):
        lags = list(lags)
    elif lags == "all" or lags is None:
        if tau_max is None:
            raise KnowledgeError("lags='all' needs tau_max")
        lags = list(range(tau_max + 1))
    out = sorted({int(l) for l in lags})
    if any(l < 0 for l in out):
        raise KnowledgeError(f"negative lag in {out}")
    if tau_max is not None and any(l > tau_max for l in out):
        raise KnowledgeError(f"lag above tau_max={tau_max} in {out}")
    return out


@dataclass
class BackgroundKnowledge:
    """Hard constraints consulted by the discovery engine."""

    forbidden: set = field(default_factory=set)
    required_tail: set = field(default_factory=set)
    required_arrow: set = field(default_factory=set)
    forced_mark: dict = field(default_factory=dict)
    tau_max: int | None = None

    # -- builders ------------------------------------------------------------
    def forbid_link(self, source: str, target: str, lags="all") -> "BackgroundKnowledge":
        for lag in _lags(lags, self.tau_max):
            key = (source, target, lag)
            if key in self.required_tail or key in self.required_arrow:
                raise KnowledgeError(f"cannot forbid {key}: it is required")
            forced = self._forced(source, target, lag)
            if forced is not None and (lag > 0 or forced[0] != ">"):
                raise KnowledgeError(f"cannot forbid {key}: forced mark {self.forced_mark_of(source, target, lag)}")
            self.forbidden.add(key)
        return self

    def forbid_both(self, a: str, b: str, lags="all") -> "BackgroundKnowledge":
        self.forbid_link(a, b, lags)
        self.forbid_link(b, a, lags)
        return self

    def require_tail(self, source: str, target: str, lags=0) -> "BackgroundKnowledge":
        """``source`` is an ancestor of ``target``: tail at source, arrowhead at target."""
        for lag in _lags(lags, self.tau_max):
            key = (source, target, lag)
            if key in self.forbidden:
                raise KnowledgeError(f"cannot require {key}: it is forbidden")
            self.required_tail.add(key)
        return self

    def require_arrow(self, source: str, target: str, lags=0) -> "BackgroundKnowledge":
        """Arrowhead at ``target``: ``target`` does not cause ``source``."""
        for lag in _lags(lags, self.tau_max):
            key = (source, target, lag)
            if key in self.forbidden:
                raise KnowledgeError(f"cannot require {key}: it is forbidden")
            self.required_arrow.add(key)
        return self

    def force_mark(self, source: str, target: str, lag: int, kind: str) -> "BackgroundKnowledge":
        """Fix the full mark of an adjacent pair; adjacency itself is still tested."""
        if kind not in KINDS and kind not in ("<--", "<-o"):
            raise KnowledgeError(f"unknown mark {kind!r}")
        if lag > 0 and kind not in LAGGED_KINDS:
            raise KnowledgeError(f"mark {kind!r} at lag {lag} violates time order")
        if source == target and lag == 0:
            raise KnowledgeError("contemporaneous self-link")
        if lag == 0 and source > target:
            source, target, kind = target, source, mirror(kind)
        self.forced_mark[(source, target, int(lag))] = kind
        return self

    # -- queries -------------------------------------------------------------
    def _forced(self, source, target, lag):
        """End marks ``(at source, at target)`` of a forced mark, if any."""
        if (source, target, lag) in self.forced_mark:
            return kind_to_ends(self.forced_mark[(source, target, lag)])
        if lag == 0 and (target, source, 0) in self.forced_mark:
            t, s = kind_to_ends(self.forced_mark[(target, source, 0)])
            return s, t
        return None

    def forced_mark_of(self, source, target, lag):
        if (source, target, lag) in self.forced_mark:
            return self.forced_mark[(source, target, lag)]
        if lag == 0 and (target, source, 0) in self.forced_mark:
            return mirror(self.forced_mark[(target, source, 0)])
        return None

    def adjacency_forbidden(self, source: str, target: str, lag: int) -> bool:
        """True when the engine must not test or emit this adjacency."""
        if lag > 0:
            return (source, target, lag) in self.forbidden
        return (source, target, 0) in self.forbidden and (target, source, 0) in self.forbidden

    def permits_cause(self, source: str, target: str, lag: int) -> bool:
        return (source, target, lag) not in self.forbidden

    def end_constraints(self, a: str, b: str, lag: int) -> dict:
        """Required end marks for the pair ``a(t-lag) - b(t)`` as ``{a|b: mark}``.

        Only ``"-"`` and ``">"`` are required; circles are never fixed.
        """
        req: dict[str, set] = {"a": set(), "b": set()}
        if lag == 0:
            if (a, b, 0) in self.forbidden:
                req["a"].add(">")
            if (b, a, 0) in self.forbidden:
                req["b"].add(">")
            directions = ((a, b, "a", "b"), (b, a, "b", "a"))
        else:
            directions = ((a, b, "a", "b"),)
        for s, t, end_s, end_t in directions:
            if (s, t, lag) in self.required_tail:
                req[end_s].add("-")
                req[end_t].add(">")
            if (s, t, lag) in self.required_arrow:
                req[end_t].add(">")
        forced = self._forced(a, b, lag)
        if forced is not None:
            for end, mark in zip(("a", "b"), forced):
                if mark != "o":
                    req[end].add(mark)
        return req

    def check_consistency(self) -> list[str]:
        """Conflicts between constraints; empty when the knowledge is coherent."""
        problems = []
        for key in sorted(self.forbidden & (self.required_tail | self.required_arrow)):
            problems.append(f"{key} is both forbidden and required")
        for key, kind in sorted(self.forced_mark.items()):
            s, t, lag = key
            if self.adjacency_forbidden(s, t, lag):
                problems.append(f"{key} has a forced mark {kind!r} but the adjacency is forbidden")
            if lag > 0 and kind not in LAGGED_KINDS:
                problems.append(f"{key} forced mark {kind!r} violates time order")
        pairs = set()
        for s, t, lag in self.forbidden | self.required_tail | self.required_arrow | set(self.forced_mark):
            if s == t and lag == 0:
                problems.append(f"({s!r}, {t!r}, 0) is a contemporaneous self-link")
                continue
            if lag == 0:
                pairs.add((min(s, t), max(s, t), 0))
            else:
                pairs.add((s, t, lag))
        for a, b, lag in sorted(pairs):
            if self.adjacency_forbidden(a, b, lag) or (lag == 0 and self.adjacency_forbidden(b, a, 0)):
                continue
            req = self.end_constraints(a, b, lag)
            for end, name in (("a", a), ("b", b)):
                if len(req[end]) > 1:
                    problems.append(f"({a!r}, {b!r}, {lag}): conflicting marks at {name!r}: {sorted(req[end])}")
            if req["a"] == {"-"} and req["b"] == {"-"}:
                problems.append(f"({a!r}, {b!r}, {lag}): tails at both ends")
        for s, t, lag in sorted(self.required_tail):
            if lag == 0 and (t, s, 0) in self.required_tail:
                problems.append(f"({s!r}, {t!r}, 0): required tails in both directions (cycle)")
        return problems

    def variables(self) -> set[str]:
        names = set()
        for s, t, _ in self.forbidden | self.required_tail | self.required_arrow | set(self.forced_mark):
            names.update((s, t))
        return names

    # -- serialization -------------------------------------------------------
    def to_rules(self) -> list[dict]:
        rules = [{"rule": "forbid", "source": s, "target": t, "lag": l} for s, t, l in sorted(self.forbidden)]
        rules += [{"rule": "require_tail", "source": s, "target": t, "lag": l} for s, t, l in sorted(self.required_tail)]
        rules += [{"rule": "require_arrow", "source": s, "target": t, "lag": l} for s, t, l in sorted(self.required_arrow)]
        rules += [
            {"rule": "force_mark", "source": s, "target": t, "lag": l, "mark": k}
            for (s, t, l), k in sorted(self.forced_mark.items())
        ]
        return rules

    def to_json(self) -> str:
        return json.dumps({"tau_max": self.tau_max, "rules": self.to_rules()}, indent=2)

    @classmethod
    def from_rules(cls, rules: Iterable[dict], tau_max: int | None = None) -> "BackgroundKnowledge":
        kb = cls(tau_max=tau_max)
        for r in rules:
            kind = r["rule"]
            lags = r.get("lags", r.get("lag", "all"))
            if kind == "forbid":
                kb.forbid_link(r["source"], r["target"], lags)
            elif kind == "forbid_both":
                kb.forbid_both(r["source"], r["target"], lags)
            elif kind == "require_tail":
                kb.require_tail(r["source"], r["target"], lags)
            elif kind == "require_arrow":
                kb.require_arrow(r["source"], r["target"], lags)
            elif kind == "force_mark":
                for lag in _lags(lags, tau_max):
                    kb.force_mark(r["source"], r["target"], lag, r["mark"])
            else:
                raise KnowledgeError(f"unknown rule type {kind!r}")
        return kb

    @classmethod
    def from_json(cls, text: str) -> "BackgroundKnowledge":
        d = json.loads(text)
        if isinstance(d, list):
            return cls.from_rules(d)
        return cls.from_rules(d["rules"], d.get("tau_max"))

    @classmethod
    def load(cls, path) -> "BackgroundKnowledge":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


PRICE = ("price_lambda", "price_differential")
GAS = ("gas_price", "gas_generation")
MARKET = PRICE + GAS
LOAD = ("load_forecast",)
EXOGENOUS = ("renewable_forecast", "weather_pc")
HARMONIC = ("control_harmonic",)
CONTROLS = ("control_harmonic", "control_trend", "control_weekend")


def ercot_default_knowledge(variables: Sequence[VariableMeta], tau_max: int) -> BackgroundKnowledge:
    """Day-ahead market constraints derived from variable roles.

    * renewable forecasts and weather components are never caused by
      market or load variables at any lag;
    * load forecasts are not caused by market variables at lag 0, and
      contemporaneous links between regional loads are bidirected;
    * gas prices and gas generation do not cause price components at lag 0;
    * controls act at lag 0 only, are never caused, and harmonics, trend
      and the weekend indicator are marked ``-->`` into the variables they
      may drive; trend has no link with weather components, the weekend
      indicator none with renewable forecasts or weather.
    """
    for v in variables:
        if v.role not in ROLES:
            raise KnowledgeError(f"variable {v.name!r} has unknown role {v.role!r}")
    kb = BackgroundKnowledge(tau_max=tau_max)
    lagged = range(1, tau_max + 1)
    by_role = {r: [v.name for v in variables if v.role == r] for r in ROLES}

    def names(roles):
        return [n for r in roles for n in by_role[r]]

    exo = names(EXOGENOUS)
    market_load = names(MARKET + LOAD)
    endogenous = [v.name for v in variables if v.role not in CONTROLS]

    for m in market_load:
        for e in exo:
            kb.forbid_link(m, e, "all")
    for load in names(LOAD):
        for m in names(MARKET):
            kb.forbid_link(m, load, 0)
    loads = names(LOAD)
    for a in range(len(loads)):
        for b in range(a + 1, len(loads)):
            kb.force_mark(loads[a], loads[b], 0, "<->")
    for g in names(GAS):
        for p in names(PRICE):
            kb.forbid_link(g, p, 0)

    drives = {
        "control_harmonic": endogenous,
        "control_trend": names(MARKET + LOAD + ("renewable_forecast",)),
        "control_weekend": market_load,
    }
    no_relation = {
        "control_harmonic": [],
        "control_trend": names(("weather_pc",)),
        "control_weekend": exo,
    }
    controls = names(CONTROLS)
    for role in CONTROLS:
        for c in by_role[role]:
            for x in endogenous:
                kb.forbid_link(x, c, "all")
                if x in no_relation[role]:
                    kb.forbid_link(c, x, "all")
                    continue
                kb.forbid_link(c, x, lagged)
                if x in drives[role]:
                    kb.force_mark(c, x, 0, "-->")
            for other in controls:
                if other != c:
                    kb.forbid_link(c, other, "all")
                else:
                    kb.forbid_link(c, c, lagged)
    return kb
