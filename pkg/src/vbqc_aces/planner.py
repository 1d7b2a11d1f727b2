"""Gate orderings that make every depolarizing parameter identifiable.

For a vertex ``v`` with two incident edges ``e = (u, v)`` and ``f = (v, w)``,
applying the pair last in the order ``e, f`` (ordering A) or ``f, e``
(ordering B) changes the bias of the trap at ``u`` by exactly
``lambda[(f, v)]`` and the bias of the trap at ``w`` by ``lambda[(e, v)]``.
A set of such ordered triples covering every (vertex, incident edge) pair is
built greedily; triples sharing no vertex can share the same two orderings,
so the triples are grouped by a greedy coloring of their conflict graph.
Degree-1 vertices and cross-talk parameters get dedicated orderings.

Every equation is re-checked against :func:`circuit.support_set` before it is
accepted, so a construction mistake shows up as an invalid equation rather
than a wrong estimate.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from vbqc_aces.circuit import GateOrdering, support_set
from vbqc_aces.graphs import Edge, Graph, VertexColoring, canonical_edge, greedy_color, largest_first_order
from vbqc_aces.noise import PER_EDGE, PER_QUBIT, ParamKey, parameter_keys

RATIO = "ratio"
ABSOLUTE = "absolute"

# greedy H-colouring bounds quoted for the open 2D cluster (not asserted)
QUOTED_ORDERING_BOUNDS = (16, 28)


@dataclass(frozen=True, order=True)
class OrderedTriple:
    u: int
    v: int
    w: int

    @property
    def first(self) -> Edge:
        return canonical_edge(self.u, self.v)

    @property
    def second(self) -> Edge:
        return canonical_edge(self.v, self.w)

    def vertices(self) -> frozenset[int]:
        return frozenset((self.u, self.v, self.w))


@dataclass(frozen=True)
class Equation:
    """``bias(with) / bias(without)`` at ``trap`` equals ``lambda[param]``.

    For ``kind == "absolute"`` there is no ``without`` ordering and the bias
    itself is the eigenvalue.
    """

    param: ParamKey
    trap: int
    with_id: str
    without_id: str | None
    kind: str = RATIO


@dataclass(frozen=True)
class ConflictGraph:
    triples: tuple[OrderedTriple, ...]
    graph: Graph

    def max_degree(self) -> int:
        return self.graph.max_degree()


@dataclass
class OrderingPlan:
    mode: str
    cover: list[OrderedTriple]
    conflict: ConflictGraph | None
    classes: VertexColoring | None
    orderings: list[GateOrdering]
    equations: list[Equation]
    rejected: list[Equation] = field(default_factory=list)
    unidentifiable: list[ParamKey] = field(default_factory=list)

    def ordering(self, ordering_id: str) -> GateOrdering:
        for o in self.orderings:
            if o.ordering_id == ordering_id:
                return o
        raise KeyError(ordering_id)

    def ordering_ids(self) -> list[str]:
        return [o.ordering_id for o in self.orderings]

    def equations_for(self, param: ParamKey) -> list[Equation]:
        return [eq for eq in self.equations if eq.param == param]

    def covered(self) -> set[ParamKey]:
        return {eq.param for eq in self.equations}

    def missing(self, graph: Graph, support=None) -> list[ParamKey]:
        have = self.covered()
        return [k for k in parameter_keys(graph, self.mode, support) if k not in have]

    def summary(self, graph: Graph, support=None) -> dict[str, Any]:
        keys = parameter_keys(graph, self.mode, support)
        return {
            "mode": self.mode,
            "orderings": len(self.orderings),
            "triples": len(self.cover),
            "conflict_max_degree": self.conflict.max_degree() if self.conflict else 0,
            "greedy_bound": (self.conflict.max_degree() + 1) if self.conflict else 0,
            "colors": self.classes.k if self.classes else 0,
            "parameters": len(keys),
            "covered": len(self.covered() & set(keys)),
            "equations": len(self.equations),
            "rejected": len(self.rejected),
            "unidentifiable": len(self.unidentifiable),
            "quoted_bounds": list(QUOTED_ORDERING_BOUNDS),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "orderings": [o.to_dict() for o in self.orderings],
            "equations": [_equation_to_dict(eq, self.mode) for eq in self.equations],
            "unidentifiable": [_param_to_dict(k, self.mode) for k in self.unidentifiable],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _param_to_dict(key: ParamKey, mode: str) -> dict[str, Any]:
    if mode == PER_QUBIT:
        e, q = key
        return {"edge": list(e), "qubit": q}
    return {"edge": list(key)}


def _param_from_dict(d: Mapping[str, Any], mode: str) -> ParamKey:
    e = canonical_edge(*d["edge"])
    return (e, int(d["qubit"])) if mode == PER_QUBIT else e


def _equation_to_dict(eq: Equation, mode: str) -> dict[str, Any]:
    return {
        "param": _param_to_dict(eq.param, mode),
        "trap": eq.trap,
        "with": eq.with_id,
        "without": eq.without_id,
        "kind": eq.kind,
    }


def plan_from_dict(data: Mapping[str, Any]) -> OrderingPlan:
    mode = data.get("mode", PER_QUBIT)
    orderings = [GateOrdering(o["edges"], o["id"]) for o in data["orderings"]]
    equations = [
        Equation(_param_from_dict(e["param"], mode), int(e["trap"]), e["with"], e.get("without"), e.get("kind", RATIO))
        for e in data["equations"]
    ]
    unident = [_param_from_dict(d, mode) for d in data.get("unidentifiable", [])]
    return OrderingPlan(mode, [], None, None, orderings, equations, unidentifiable=unident)


def load_plan(path: str | Path) -> OrderingPlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))


# --- construction -------------------------------------------------------------


def build_triple_cover(graph: Graph) -> list[OrderedTriple]:
    """Greedy cover: at each vertex of degree >= 2 pair up its incident edges.

    Neighbours are paired in sorted order; an odd one out is paired with the
    first neighbour again, so every (vertex, incident edge) is covered once or
    twice. Degree-1 vertices are left to :func:`degree_one_schedule`.
    """
    cover = []
    for v in graph.vertices:
        nbrs = sorted(graph.neighbors(v))
        if len(nbrs) < 2:
            continue
        for i in range(0, len(nbrs) - 1, 2):
            cover.append(OrderedTriple(nbrs[i], v, nbrs[i + 1]))
        if len(nbrs) % 2:
            cover.append(OrderedTriple(nbrs[-1], v, nbrs[0]))
    return cover


def cover_satisfied(graph: Graph, cover: Iterable[OrderedTriple]) -> list[tuple[int, Edge]]:
    """(vertex, edge) pairs with ``deg(vertex) >= 2`` not covered by ``cover``."""
    have = set()
    for h in cover:
        have.add((h.v, h.first))
        have.add((h.v, h.second))
    return [
        (v, e)
        for v in graph.vertices
        if graph.degree(v) >= 2
        for e in graph.incident_edges(v)
        if (v, e) not in have
    ]


def build_conflict_graph(cover: Sequence[OrderedTriple]) -> ConflictGraph:
    """Triples are adjacent when they share at least one vertex of G."""
    triples = tuple(cover)
    by_vertex: dict[int, list[int]] = {}
    for i, h in enumerate(triples):
        for x in h.vertices():
            by_vertex.setdefault(x, []).append(i)
    edges = set()
    for members in by_vertex.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                edges.add((members[a], members[b]))
    return ConflictGraph(triples, Graph(len(triples), edges))


def color_conflict_graph(conflict: ConflictGraph) -> VertexColoring:
    """Largest-degree-first greedy coloring."""
    return greedy_color(conflict.graph, largest_first_order(conflict.graph))


def _ordering_with_tail(graph: Graph, tail: Sequence[Edge], ordering_id: str) -> GateOrdering:
    tail = list(tail)
    last = set(tail)
    head = [e for e in graph.edges if e not in last]
    return GateOrdering(head + tail, ordering_id)


def _ordering_with_head(graph: Graph, head: Sequence[Edge], ordering_id: str) -> GateOrdering:
    head = list(dict.fromkeys(head))
    first = set(head)
    return GateOrdering(head + [e for e in graph.edges if e not in first], ordering_id)


def _key(mode: str, edge: Edge, qubit: int) -> ParamKey:
    return (edge, qubit) if mode == PER_QUBIT else edge


def synthesize_orderings(
    graph: Graph,
    conflict: ConflictGraph,
    classes: VertexColoring,
    mode: str = PER_QUBIT,
) -> tuple[list[GateOrdering], list[Equation]]:
    """Two orderings per color class and the equations each triple yields."""
    if not classes.is_proper(conflict.graph):
        raise ValueError("classes must be a proper coloring of the conflict graph")
    orderings: list[GateOrdering] = []
    equations: list[Equation] = []
    for c, members in enumerate(classes.classes()):
        if not members:
            continue
        triples = sorted(conflict.triples[i] for i in members)
        tail_a: list[Edge] = []
        tail_b: list[Edge] = []
        for h in triples:
            tail_a += [h.first, h.second]
            tail_b += [h.second, h.first]
        id_a, id_b = f"c{c}A", f"c{c}B"
        orderings.append(_ordering_with_tail(graph, tail_a, id_a))
        orderings.append(_ordering_with_tail(graph, tail_b, id_b))
        for h in triples:
            equations.append(Equation(_key(mode, h.second, h.v), h.u, id_b, id_a))
            equations.append(Equation(_key(mode, h.first, h.v), h.w, id_a, id_b))
    return orderings, equations


def degree_one_schedule(graph: Graph, mode: str = PER_QUBIT) -> tuple[list[GateOrdering], list[Equation]]:
    """Orderings putting each leaf's edge before every other edge at its anchor.

    Leaves sharing an anchor cannot be isolated by the same ordering, so the
    k-th leaf of every anchor goes into batch k.
    """
    by_anchor: dict[int, list[int]] = {}
    for v in graph.vertices:
        if graph.degree(v) == 1:
            (w,) = graph.neighbors(v)
            by_anchor.setdefault(w, []).append(v)
    batches: list[list[int]] = []
    for w in sorted(by_anchor):
        for k, v in enumerate(sorted(by_anchor[w])):
            while len(batches) <= k:
                batches.append([])
            batches[k].append(v)
    orderings, equations = [], []
    for b, leaves in enumerate(batches):
        oid = f"d{b}"
        head = sorted({graph.incident_edges(v)[0] for v in leaves})
        orderings.append(_ordering_with_head(graph, head, oid))
        for v in sorted(leaves):
            e = graph.incident_edges(v)[0]
            equations.append(Equation(_key(mode, e, v), v, oid, None, ABSOLUTE))
    return orderings, equations


def crosstalk_equations(
    graph: Graph, support: Mapping[Edge, Sequence[int]]
) -> tuple[list[GateOrdering], list[Equation], list[ParamKey]]:
    """Orderings isolating ``lambda[(f, u)]`` for ``u`` outside the gate ``f``.

    Uses an edge ``e = (t, u)`` with ``t`` outside ``nu(f)``: applying ``f``
    before ``e`` (both last) adds the factor at the trap ``t``.
    """
    orderings, equations, unident = [], [], []
    k = 0
    for f in sorted(support):
        nu = set(support[f])
        for u in sorted(nu - set(f)):
            partners = [w for w in sorted(graph.neighbors(u)) if w not in nu]
            if not partners:
                unident.append((f, u))
                continue
            t = partners[0]
            e = canonical_edge(t, u)
            id_c, id_cp = f"x{k}C", f"x{k}Cp"
            orderings.append(_ordering_with_tail(graph, [e, f], id_c))
            orderings.append(_ordering_with_tail(graph, [f, e], id_cp))
            equations.append(Equation((f, u), t, id_cp, id_c))
            k += 1
    return orderings, equations, unident


def check_equation(graph: Graph, plan_orderings: Mapping[str, GateOrdering], eq: Equation, mode: str, support=None) -> bool:
    """True when the two support sets differ by exactly ``eq.param``."""
    with_set = support_set(graph, plan_orderings[eq.with_id], eq.trap, mode, support)
    if eq.kind == ABSOLUTE:
        return with_set == Counter({eq.param: 1})
    without_set = support_set(graph, plan_orderings[eq.without_id], eq.trap, mode, support)
    return with_set - without_set == Counter({eq.param: 1}) and not (without_set - with_set)


def build_plan(graph: Graph, mode: str = PER_QUBIT, support: Mapping[Edge, Sequence[int]] | None = None) -> OrderingPlan:
    """Full pipeline: cover, conflict graph, coloring, orderings, validated equations."""
    if mode not in (PER_QUBIT, PER_EDGE):
        raise ValueError(f"unknown mode {mode!r}")
    cover = build_triple_cover(graph)
    orderings: list[GateOrdering] = []
    equations: list[Equation] = []
    conflict = classes = None
    if cover:
        conflict = build_conflict_graph(cover)
        classes = color_conflict_graph(conflict)
        o, eqs = synthesize_orderings(graph, conflict, classes, mode)
        orderings += o
        equations += eqs
    o, eqs = degree_one_schedule(graph, mode)
    orderings += o
    equations += eqs
    unident: list[ParamKey] = []
    extra = {e: tuple(nu) for e, nu in (support or {}).items() if set(nu) - set(e)}
    if extra and mode == PER_QUBIT:
        o, eqs, unident = crosstalk_equations(graph, extra)
        orderings += o
        equations += eqs

    by_id = {o.ordering_id: o for o in orderings}
    accepted, rejected = [], []
    for eq in equations:
        (accepted if check_equation(graph, by_id, eq, mode, support) else rejected).append(eq)
    plan = OrderingPlan(mode, cover, conflict, classes, orderings, accepted, rejected, unident)
    plan.unidentifiable = sorted(set(unident) | set(plan.missing(graph, support)))
    return plan


def validate_plan(graph: Graph, plan: OrderingPlan, support=None) -> list[Equation]:
    """Equations of ``plan`` failing the structural check (empty when sound)."""
    by_id = {o.ordering_id: o for o in plan.orderings}
    for o in plan.orderings:
        o.validate(graph)
    return [eq for eq in plan.equations if not check_equation(graph, by_id, eq, plan.mode, support)]
