"""Stationary temporal causal graphs with partial-ancestral edge marks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Callable, Iterator

# A kind is written from the first (source / lower-index) variable to the second.
# End marks: "-" tail, ">" or "<" arrowhead, "o" circle.
DIRECTED = "-->"
BIDIRECTED = "<->"
PARTIALLY_DIRECTED = "o->"
NONDIRECTED = "o-o"
KINDS = (DIRECTED, BIDIRECTED, PARTIALLY_DIRECTED, NONDIRECTED)
LAGGED_KINDS = (DIRECTED, BIDIRECTED, PARTIALLY_DIRECTED)
_MIRROR = {"-->": "<--", "<--": "-->", "o->": "<-o", "<-o": "o->", "<->": "<->", "o-o": "o-o"}
ALL_KINDS = tuple(_MIRROR)


class GraphError(ValueError):
    pass


def mirror(kind: str) -> str:
    """The same edge read from the other endpoint."""
    try:
        return _MIRROR[kind]
    except KeyError:
        raise GraphError(f"unknown edge kind {kind!r}") from None


def kind_to_ends(kind: str) -> tuple[str, str]:
    """``(mark at first node, mark at second node)`` using ``- o >``."""
    first = {"-": "-", "o": "o", "<": ">"}[kind[0]]
    return first, kind[2]


def ends_to_kind(first: str, second: str) -> str:
    left = {"-": "-", "o": "o", ">": "<"}[first]
    kind = f"{left}-{second}"
    if kind not in _MIRROR:
        raise GraphError(f"marks {first!r}/{second!r} are outside the edge vocabulary")
    return kind


@dataclass(frozen=True)
class LinkMark:
    kind: str
    strength: float | None = None
    p_value: float | None = None
    lag: int = 0


_READINGS = {
    DIRECTED: "{a} has a causal effect on {b}.",
    BIDIRECTED: (
        "There is no causal effect of {a} on {b} and no causal effect of {b} on {a}; "
        "there is a latent common cause of {a} and {b}."
    ),
    PARTIALLY_DIRECTED: (
        "There is no causal effect of {b} on {a}: either {a} has a causal effect on {b} "
        "or there is a latent common cause of {a} and {b}."
    ),
    NONDIRECTED: (
        "There is a latent common cause of {a} and {b}, or {a} has a causal effect on {b}, "
        "or {b} has a causal effect on {a}."
    ),
}


def interpret(mark, a: str = "A", b: str = "B") -> str:
    """Causal reading of an edge ``a <kind> b``."""
    kind = mark.kind if isinstance(mark, LinkMark) else mark
    if kind in (None, "", "absent"):
        raise GraphError("absent links have no causal reading")
    if kind not in _MIRROR:
        raise GraphError(f"unknown edge kind {kind!r}")
    if kind not in _READINGS:
        kind, a, b = mirror(kind), b, a
    return _READINGS[kind].format(a=a, b=b)


def _diverging_color(strength: float | None) -> str:
    if strength is None:
        return "#808080"
    s = max(-1.0, min(1.0, float(strength)))
    fade = 1.0 - abs(s)
    if s >= 0:
        r, g, b = 1.0, fade, fade
    else:
        r, g, b = fade, fade, 1.0
    return "#%02x%02x%02x" % (round(r * 255), round(g * 255), round(b * 255))


class TemporalCausalGraph:
    """One mark per ``(source, target, lag)``, repeated over all time translations.

    Lagged links have the earlier variable as ``source`` and must carry an
    arrowhead at the later one. Contemporaneous links are stored once, on
    ``(min(i, j), max(i, j))``, and read back mirrored.
    """

    def __init__(self, k: int, tau_max: int, variables=None):
        if k < 1 or tau_max < 0:
            raise GraphError("need k >= 1 and tau_max >= 0")
        self.k = int(k)
        self.tau_max = int(tau_max)
        self.variables = list(variables) if variables is not None else [f"X{i}" for i in range(k)]
        if len(self.variables) != self.k:
            raise GraphError(f"{len(self.variables)} variable names for k={k}")
        self._links: dict[tuple[int, int, int], LinkMark] = {}
        self._frozen = False

    def freeze(self) -> "TemporalCausalGraph":
        self._frozen = True
        return self

    def _check_key(self, i, j, lag):
        if not (0 <= i < self.k and 0 <= j < self.k):
            raise GraphError(f"variable index out of range: ({i}, {j})")
        if not 0 <= lag <= self.tau_max:
            raise GraphError(f"lag {lag} outside [0, {self.tau_max}]")

    def set_link(self, i: int, j: int, lag: int, kind, strength=None, p_value=None):
        """Record the mark ``i(t - lag) <kind> j(t)``; ``kind=None`` removes it."""
        if self._frozen:
            raise GraphError("graph is frozen")
        i, j, lag = int(i), int(j), int(lag)
        self._check_key(i, j, lag)
        if isinstance(kind, LinkMark):
            kind, strength, p_value = kind.kind, kind.strength, kind.p_value
        if lag == 0 and i == j:
            raise GraphError("contemporaneous self-link")
        if lag == 0 and i > j:
            i, j = j, i
            kind = mirror(kind) if kind not in (None, "absent") else kind
        if kind in (None, "absent"):
            self._links.pop((i, j, lag), None)
            return self
        if kind not in _MIRROR:
            raise GraphError(f"unknown edge kind {kind!r}")
        if lag > 0 and kind not in LAGGED_KINDS:
            raise GraphError(
                f"lagged link {kind!r} at lag {lag} would put a non-arrowhead at the later "
                "variable or point into the past"
            )
        self._links[(i, j, lag)] = LinkMark(
            kind,
            None if strength is None else float(strength),
            None if p_value is None else float(p_value),
            lag,
        )
        return self

    def get_link(self, i: int, j: int, lag: int) -> LinkMark | None:
        if lag == 0 and i > j:
            m = self._links.get((j, i, 0))
            return None if m is None else LinkMark(mirror(m.kind), m.strength, m.p_value, 0)
        return self._links.get((i, j, lag))

    def links(self) -> Iterator[tuple[int, int, int, LinkMark]]:
        for key in sorted(self._links):
            yield (*key, self._links[key])

    def __len__(self):
        return len(self._links)

    def __eq__(self, other):
        return (
            isinstance(other, TemporalCausalGraph)
            and self.k == other.k
            and self.tau_max == other.tau_max
            and self.variables == other.variables
            and self._links == other._links
        )

    def adjacencies(self) -> set[tuple[int, int, int]]:
        return set(self._links)

    def count(self, kind: str) -> int:
        return sum(1 for m in self._links.values() if kind in (m.kind, mirror(m.kind)))

    def validate(self) -> list[str]:
        """List of violations: vocabulary, time order, contemporaneous cycles."""
        problems = []
        order = TopologicalSorter()
        for (i, j, lag), m in sorted(self._links.items()):
            if m.kind not in _MIRROR:
                problems.append(f"({i},{j},{lag}): unknown kind {m.kind!r}")
                continue
            if lag > 0 and m.kind not in LAGGED_KINDS:
                problems.append(f"({i},{j},{lag}): {m.kind!r} violates time order")
            if lag == 0 and i == j:
                problems.append(f"({i},{i},0): contemporaneous self-link")
            if lag == 0 and m.kind == "-->":
                order.add(j, i)
            elif lag == 0 and m.kind == "<--":
                order.add(i, j)
        try:
            order.prepare()
        except CycleError as exc:
            cycle = exc.args[1]
            names = " -> ".join(self.variables[c] for c in cycle)
            problems.append(f"contemporaneous directed cycle: {names}")
        return problems

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tau_max": self.tau_max,
            "variables": list(self.variables),
            "links": [
                {"i": i, "j": j, "lag": lag, "mark": m.kind, "strength": m.strength, "p": m.p_value}
                for i, j, lag, m in self.links()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TemporalCausalGraph":
        g = cls(d["k"], d["tau_max"], d.get("variables"))
        for rec in d["links"]:
            g.set_link(rec["i"], rec["j"], rec["lag"], rec["mark"], rec.get("strength"), rec.get("p"))
        return g

    @classmethod
    def from_json(cls, text: str) -> "TemporalCausalGraph":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TemporalCausalGraph":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dot(
        self,
        hide_self_loops: bool = False,
        strength_colormap: Callable[[float | None], str] | str | None = None,
        exclude=(),
    ) -> str:
        """Graphviz text; lagged edges are labelled with their lag, color encodes signed strength."""
        color = _resolve_colormap(strength_colormap)
        excluded = {self.variables.index(e) if isinstance(e, str) else int(e) for e in exclude}
        lines = ["digraph G {", "  rankdir=LR;", "  node [shape=ellipse];"]
        for i, name in enumerate(self.variables):
            if i not in excluded:
                lines.append(f'  n{i} [label="{_escape(name)}"];')
        for i, j, lag, m in self.links():
            if i in excluded or j in excluded:
                continue
            if hide_self_loops and i == j:
                continue
            tail, head = kind_to_ends(m.kind)
            attrs = [
                "dir=both",
                f"arrowtail={_DOT_END[tail]}",
                f"arrowhead={_DOT_END[head]}",
                f'color="{color(m.strength)}"',
            ]
            if lag > 0:
                attrs.append(f'label="{lag}"')
            lines.append(f"  n{i} -> n{j} [{', '.join(attrs)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


_DOT_END = {"-": "none", ">": "normal", "o": "odot"}


def _escape(s: str) -> str:
    return str(s).replace("\\", "\\\\").replace('"', '\\"')


def _resolve_colormap(cmap):
    if cmap is None:
        return _diverging_color
    if callable(cmap):
        return cmap
    import matplotlib as mpl
    from matplotlib.colors import to_hex

    cm = mpl.colormaps[cmap]
    return lambda s: "#808080" if s is None else to_hex(cm((max(-1.0, min(1.0, s)) + 1) / 2))
