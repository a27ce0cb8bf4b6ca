"""Causal DAGs, single-world intervention graphs and d-separation.

Graphs are immutable. Every query that returns a node collection returns a
``frozenset``; anything that has to be shown to a user goes through
:func:`sorted` first so output is deterministic.

The d-separation test is the linear-time reachability ("Bayes ball")
procedure: an ancestor set of the conditioning nodes is computed once and
the search then walks (node, direction) states.  Path enumeration is kept
around for witnesses only; it is exponential and meant for the small graphs
that criteria are evaluated on.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

from .errors import (
    CycleError,
    DuplicateNodeError,
    GraphParseError,
    MultipleTreatmentsError,
    OverlapError,
    RoleError,
    UnknownEndpointError,
    UnknownNodeError,
)

__all__ = [
    "NodeRole",
    "CausalGraph",
    "Swig",
    "build_graph",
    "parse_graph",
    "read_graph",
    "format_graph",
    "to_swig",
    "d_separated",
    "descendants",
    "ancestors",
    "proper_causal_paths",
    "proper_backdoor_graph",
    "remove_outgoing",
    "all_paths",
    "is_open_path",
    "open_paths",
    "format_path",
]


class NodeRole(enum.Enum):
    TREATMENT = "treatment"
    OUTCOME = "outcome"
    SELECTION = "selection"
    COVARIATE = "covariate"
    UNOBSERVED = "unobserved"
    POST = "post"

    @classmethod
    def parse(cls, text: str) -> "NodeRole":
        try:
            return cls(text.strip().lower())
        except ValueError:
            spelled = "|".join(r.value for r in cls)
            raise ValueError(f"unknown role {text!r} (expected {spelled})") from None


@dataclass(frozen=True)
class CausalGraph:
    """A validated DAG whose nodes carry a :class:`NodeRole`.

    Build instances with :func:`build_graph`; the constructor does no checks.
    """

    roles: Mapping[str, NodeRole]
    edges: frozenset
    _parents: Mapping[str, frozenset] = field(repr=False, compare=False, default=None)
    _children: Mapping[str, frozenset] = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        parents = {v: set() for v in self.roles}
        children = {v: set() for v in self.roles}
        for u, v in self.edges:
            parents[v].add(u)
            children[u].add(v)
        object.__setattr__(self, "_parents", {v: frozenset(s) for v, s in parents.items()})
        object.__setattr__(self, "_children", {v: frozenset(s) for v, s in children.items()})

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.roles)

    def parents(self, node: str) -> frozenset:
        self.check_nodes([node])
        return self._parents[node]

    def children(self, node: str) -> frozenset:
        self.check_nodes([node])
        return self._children[node]

    def role(self, node: str) -> NodeRole:
        self.check_nodes([node])
        return self.roles[node]

    def nodes_with_role(self, role: NodeRole) -> list:
        return sorted(v for v, r in self.roles.items() if r is role)

    def role_node(self, role: NodeRole) -> str:
        """The unique node carrying ``role``."""
        found = self.nodes_with_role(role)
        if len(found) != 1:
            raise RoleError(f"expected exactly one {role.value} node, found {len(found)}: {found}")
        return found[0]

    @property
    def treatment(self) -> str:
        return self.role_node(NodeRole.TREATMENT)

    @property
    def outcome(self) -> str:
        return self.role_node(NodeRole.OUTCOME)

    @property
    def selection(self) -> str:
        return self.role_node(NodeRole.SELECTION)

    @property
    def observed(self) -> frozenset:
        return frozenset(v for v, r in self.roles.items() if r is not NodeRole.UNOBSERVED)

    def check_nodes(self, names: Iterable[str]) -> None:
        unknown = sorted(set(names) - set(self.roles))
        if unknown:
            raise UnknownNodeError(f"unknown node(s): {', '.join(unknown)}")

    def topological_order(self) -> list:
        return _topological_order(self.roles, self.edges)

    def without_edges(self, removed: Iterable[tuple]) -> "CausalGraph":
        return CausalGraph(dict(self.roles), self.edges - frozenset(removed))

    def __str__(self):
        return format_graph(self)


def _topological_order(nodes, edges) -> list:
    """Kahn's algorithm with lexicographic tie-breaking; raises on cycles."""
    indeg = {v: 0 for v in nodes}
    children = {v: [] for v in nodes}
    for u, v in edges:
        indeg[v] += 1
        children[u].append(v)
    ready = sorted(v for v, d in indeg.items() if d == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in sorted(children[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != len(indeg):
        raise CycleError(_find_cycle({v for v, d in indeg.items() if d > 0}, edges))
    return order


def _find_cycle(candidates, edges) -> list:
    succ = {v: sorted(w for u, w in edges if u == v and w in candidates) for v in candidates}
    start = min(candidates)
    seen = [start]
    v = start
    while True:
        v = succ[v][0]
        if v in seen:
            return seen[seen.index(v):] + [v]
        seen.append(v)


def build_graph(nodes: Iterable, edges: Iterable) -> CausalGraph:
    """Validate and build a :class:`CausalGraph`.

    Parameters
    ----------
    nodes : iterable of (name, role)
        ``role`` may be a :class:`NodeRole` or its spelling in the text format.
    edges : iterable of (parent, child)
    """
    roles = {}
    for name, role in nodes:
        if name in roles:
            raise DuplicateNodeError(f"node {name!r} declared twice")
        roles[name] = role if isinstance(role, NodeRole) else NodeRole.parse(role)
    edge_set = set()
    for u, v in edges:
        for end in (u, v):
            if end not in roles:
                raise UnknownEndpointError(f"edge {u} -> {v} names undeclared node {end!r}")
        if u == v:
            raise CycleError([u, u])
        edge_set.add((u, v))
    _topological_order(roles, edge_set)
    return CausalGraph(roles, frozenset(edge_set))


# -- text format ------------------------------------------------------------

def parse_graph(text: str) -> CausalGraph:
    """Parse the line-oriented ``node <name> <role>`` / ``edge <u> <v>`` format."""
    nodes, edges = [], []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        if kind == "node":
            if len(parts) != 3:
                raise GraphParseError(lineno, "expected 'node <name> <role>'")
            try:
                role = NodeRole.parse(parts[2])
            except ValueError as exc:
                raise GraphParseError(lineno, str(exc)) from None
            if parts[1] in seen:
                raise GraphParseError(lineno, f"node {parts[1]!r} declared twice")
            seen.add(parts[1])
            nodes.append((parts[1], role))
        elif kind == "edge":
            if len(parts) != 3:
                raise GraphParseError(lineno, "expected 'edge <parent> <child>'")
            for end in parts[1:]:
                if end not in seen:
                    raise GraphParseError(lineno, f"edge names undeclared node {end!r}")
            edges.append((parts[1], parts[2]))
        else:
            raise GraphParseError(lineno, f"unknown directive {parts[0]!r}")
    try:
        return build_graph(nodes, edges)
    except CycleError as exc:
        raise GraphParseError(len(text.splitlines()), str(exc)) from None


def read_graph(path) -> CausalGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def format_graph(g: CausalGraph) -> str:
    lines = [f"node {v} {g.roles[v].value}" for v in g.topological_order()]
    lines += [f"edge {u} {v}" for u, v in sorted(g.edges)]
    return "\n".join(lines) + "\n"


# -- SWIG -------------------------------------------------------------------

@dataclass(frozen=True)
class Swig:
    """Single-world intervention graph obtained by splitting the treatment.

    ``graph`` is the split DAG over relabeled names.  ``labels`` maps every
    base-graph node to its name in ``graph`` (descendants of the fixed part
    become ``V(a)``); the fixed part itself is not in ``labels``.
    """

    base: CausalGraph
    graph: CausalGraph
    split: str
    random: str
    fixed: str
    labels: Mapping[str, str]

    def label(self, name: str) -> str:
        """Translate a base name (``L``) or a SWIG name (``L(a)``) to the SWIG name."""
        if name in self.graph.roles:
            return name
        if name in self.labels:
            return self.labels[name]
        raise UnknownNodeError(f"unknown node {name!r} in SWIG")

    def base_name(self, name: str) -> str:
        inverse = {v: k for k, v in self.labels.items()}
        return inverse.get(self.label(name), name)

    @property
    def outcome(self) -> str:
        return self.labels[self.base.outcome]

    @property
    def selection(self) -> str:
        return self.labels[self.base.selection]

    @property
    def post_treatment(self) -> frozenset:
        """Nodes relabeled as counterfactuals, i.e. strict descendants of the fixed part."""
        return descendants(self.graph, [self.fixed]) - {self.fixed}

    @property
    def edges(self) -> frozenset:
        return self.graph.edges

    @property
    def nodes(self) -> frozenset:
        return self.graph.nodes


def to_swig(g: CausalGraph) -> Swig:
    treatments = g.nodes_with_role(NodeRole.TREATMENT)
    if len(treatments) > 1:
        raise MultipleTreatmentsError(f"SWIGs split a single treatment, got {treatments}")
    if not treatments:
        raise RoleError("graph has no treatment node to split")
    a = treatments[0]
    fixed = a.lower() if a.lower() not in g.roles else a + "_fixed"
    downstream = descendants(g, [a]) - {a}
    labels = {v: (f"{v}({fixed})" if v in downstream else v) for v in g.roles}
    roles = {labels[v]: r for v, r in g.roles.items()}
    roles[fixed] = NodeRole.TREATMENT
    edges = set()
    for u, v in g.edges:
        # the random part keeps incoming edges, the fixed part takes outgoing ones
        edges.add((fixed if u == a else labels[u], labels[v]))
    return Swig(base=g, graph=CausalGraph(roles, frozenset(edges)), split=a,
                random=labels[a], fixed=fixed, labels=labels)


# -- structural queries -------------------------------------------------------

GraphLike = Union[CausalGraph, Swig]


def _as_graph(g: GraphLike) -> CausalGraph:
    return g.graph if isinstance(g, Swig) else g


def _closure(g: CausalGraph, start: Iterable[str], step) -> frozenset:
    start = list(start)
    g.check_nodes(start)
    seen = set(start)
    stack = list(start)
    while stack:
        v = stack.pop()
        for w in step(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return frozenset(seen)


def descendants(g: GraphLike, nodes: Iterable[str]) -> frozenset:
    """Reflexive-transitive closure along edge direction."""
    g = _as_graph(g)
    return _closure(g, nodes, lambda v: g._children[v])


def ancestors(g: GraphLike, nodes: Iterable[str]) -> frozenset:
    g = _as_graph(g)
    return _closure(g, nodes, lambda v: g._parents[v])


def remove_outgoing(g: CausalGraph, node: str) -> CausalGraph:
    g.check_nodes([node])
    return g.without_edges((node, c) for c in g._children[node])


def proper_causal_paths(g: CausalGraph, a: str, y: str) -> list:
    """Directed paths ``a -> ... -> y`` that visit ``a`` only at the start."""
    g.check_nodes([a, y])
    out = []

    def walk(path):
        v = path[-1]
        if v == y:
            out.append(tuple(path))
            return
        for c in sorted(g._children[v]):
            if c != a and c not in path:
                walk(path + [c])

    walk([a])
    return sorted(out)


def proper_backdoor_graph(g: CausalGraph, a: str, y: str) -> CausalGraph:
    first = {(p[0], p[1]) for p in proper_causal_paths(g, a, y)}
    return g.without_edges(first)


# -- d-separation -------------------------------------------------------------

def _prepare_sets(g, set1, set2, conditioning):
    x, y, z = frozenset(set1), frozenset(set2), frozenset(conditioning)
    g_ = _as_graph(g)
    g_.check_nodes(x | y | z)
    if x & y or x & z or y & z:
        raise OverlapError(
            f"sets must be disjoint: {sorted(x)} / {sorted(y)} / {sorted(z)}"
        )
    if isinstance(g, Swig) and g.fixed not in x | y:
        # fixed nodes are constants of the intervention
        z = z | {g.fixed}
    return g_, x, y, z


def d_separated(g: GraphLike, set1, set2, conditioning=()) -> bool:
    """True iff ``set1`` and ``set2`` are d-separated given ``conditioning``.

    On a :class:`Swig` the fixed treatment node is always treated as
    conditioned on.  Empty ``set1`` or ``set2`` are trivially separated.
    """
    g, x, y, z = _prepare_sets(g, set1, set2, conditioning)
    if not x or not y:
        return True
    anc_z = ancestors(g, z) if z else frozenset()
    # states: (node, True) reached from a child ("up"), (node, False) from a parent
    queue = deque((v, True) for v in x)
    visited = set()
    while queue:
        v, up = queue.popleft()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v not in z and v in y:
            return False
        if up:
            if v not in z:
                queue.extend((p, True) for p in g._parents[v])
                queue.extend((c, False) for c in g._children[v])
        else:
            if v not in z:
                queue.extend((c, False) for c in g._children[v])
            if v in anc_z:
                queue.extend((p, True) for p in g._parents[v])
    return True


# -- path enumeration (witnesses) ---------------------------------------------

def all_paths(g: GraphLike, source: str, target: str) -> Iterator[tuple]:
    """Every simple path between two nodes in the skeleton, lexicographic order."""
    g = _as_graph(g)
    g.check_nodes([source, target])
    nbrs = {v: sorted(g._parents[v] | g._children[v]) for v in g.roles}

    def walk(path):
        v = path[-1]
        if v == target:
            yield tuple(path)
            return
        for w in nbrs[v]:
            if w not in path:
                yield from walk(path + [w])

    yield from walk([source])


def is_open_path(g: GraphLike, path, conditioning) -> bool:
    g_, _, _, z = _prepare_sets(g, [path[0]], [path[-1]], conditioning)
    for i in range(1, len(path) - 1):
        prev, v, nxt = path[i - 1], path[i], path[i + 1]
        collider = (prev, v) in g_.edges and (nxt, v) in g_.edges
        if collider:
            if not (descendants(g_, [v]) & z):
                return False
        elif v in z:
            return False
    return True


def open_paths(g: GraphLike, set1, set2, conditioning=()) -> list:
    """All open paths between two node sets, lexicographically sorted."""
    _prepare_sets(g, set1, set2, conditioning)
    found = []
    for s in sorted(set1):
        for t in sorted(set2):
            found.extend(p for p in all_paths(g, s, t) if is_open_path(g, p, conditioning))
    return sorted(found)


def format_path(g: GraphLike, path) -> str:
    g = _as_graph(g)
    out = [path[0]]
    for u, v in zip(path, path[1:]):
        out.append("->" if (u, v) in g.edges else "<-")
        out.append(v)
    return " ".join(out)
