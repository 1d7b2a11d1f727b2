"""Undirected graphs, proper vertex colorings and the example topologies."""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

Edge = tuple[int, int]


def canonical_edge(u: int, v: int) -> Edge:
    """Return the edge ``{u, v}`` as a sorted pair."""
    if u == v:
        raise ValueError(f"self-loop on vertex {u}")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, init=False)
class Graph:
    """Simple undirected graph on the vertices ``0 .. vertex_count - 1``.

    Edges are stored canonically (``u < v``) and sorted lexicographically, so
    iterating ``edges`` always yields the same order. ``labels`` are optional
    display names used by the CLI (e.g. 1-based labels for small examples).
    """

    vertex_count: int
    edges: tuple[Edge, ...]
    labels: tuple[str, ...] | None = None
    _adjacency: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __init__(
        self,
        vertex_count: int,
        edges: Iterable[Sequence[int]],
        labels: Sequence[str] | None = None,
    ) -> None:
        if vertex_count < 0:
            raise ValueError("vertex_count must be non-negative")
        canon = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < vertex_count and 0 <= v < vertex_count):
                raise ValueError(f"edge ({u}, {v}) out of range for {vertex_count} vertices")
            e = canonical_edge(u, v)
            if e in canon:
                raise ValueError(f"duplicate edge {e}")
            canon.add(e)
        if labels is not None and len(labels) != vertex_count:
            raise ValueError("labels must have one entry per vertex")
        adj: list[set[int]] = [set() for _ in range(vertex_count)]
        for u, v in canon:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "vertex_count", vertex_count)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        object.__setattr__(self, "labels", tuple(labels) if labels is not None else None)
        object.__setattr__(self, "_adjacency", tuple(frozenset(a) for a in adj))

    @property
    def vertices(self) -> range:
        return range(self.vertex_count)

    def neighbors(self, v: int) -> frozenset[int]:
        return self._adjacency[v]

    def degree(self, v: int) -> int:
        return len(self._adjacency[v])

    def max_degree(self) -> int:
        return max((len(a) for a in self._adjacency), default=0)

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and v in self._adjacency[u]

    def incident_edges(self, v: int) -> list[Edge]:
        return [canonical_edge(v, w) for w in sorted(self._adjacency[v])]

    def label(self, v: int) -> str:
        return self.labels[v] if self.labels is not None else str(v)

    def is_independent(self, vertices: Iterable[int]) -> bool:
        vs = set(vertices)
        return all(not (self._adjacency[v] & vs) for v in vs)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"vertices": self.vertex_count, "edges": [list(e) for e in self.edges]}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out


@dataclass(frozen=True)
class VertexColoring:
    """Assignment ``color_of[v]`` in ``0 .. k - 1`` for every vertex."""

    color_of: tuple[int, ...]
    k: int

    def classes(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k)]
        for v, c in enumerate(self.color_of):
            out[c].append(v)
        return out

    def is_proper(self, graph: Graph) -> bool:
        if len(self.color_of) != graph.vertex_count:
            return False
        return all(self.color_of[u] != self.color_of[v] for u, v in graph.edges)


def build_cluster_state(width: int, height: int) -> Graph:
    """Square-lattice cluster graph; vertex ``row * width + col``."""
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    edges = []
    for r in range(height):
        for c in range(width):
            v = r * width + c
            if c + 1 < width:
                edges.append((v, v + 1))
            if r + 1 < height:
                edges.append((v, v + width))
    labels = [f"({r},{c})" for r in range(height) for c in range(width)]
    return Graph(width * height, edges, labels)


# 1-based labels as drawn in the four-vertex example
_KITE_EDGES_1B = ((2, 4), (2, 3), (3, 4), (1, 4), (1, 2))


def build_diamond_kite() -> Graph:
    """Four vertices, five edges: triangle {2,3,4} plus vertex 1 tied to 2 and 4.

    Internally 0-based; ``labels`` carry the 1-based names.
    """
    return Graph(4, [(u - 1, v - 1) for u, v in _KITE_EDGES_1B], labels=["1", "2", "3", "4"])


def build_path(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)], labels=[str(i + 1) for i in range(n)])


def random_graph(n: int, edge_prob: float, rng) -> Graph:
    """Erdos-Renyi graph drawn from a ``numpy.random.Generator``."""
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < edge_prob]
    return Graph(n, edges)


def greedy_color(graph: Graph, order: Sequence[int] | None = None) -> VertexColoring:
    """First-fit coloring visiting vertices in ``order`` (default: 0, 1, ...)."""
    if order is None:
        order = list(graph.vertices)
    if sorted(order) != list(graph.vertices):
        raise ValueError("order must be a permutation of the vertices")
    color = [-1] * graph.vertex_count
    for v in order:
        taken = {color[w] for w in graph.neighbors(v)}
        c = 0
        while c in taken:
            c += 1
        color[v] = c
    k = max(color, default=-1) + 1
    return VertexColoring(tuple(color), k)


def largest_first_order(graph: Graph) -> list[int]:
    return sorted(graph.vertices, key=lambda v: (-graph.degree(v), v))


def graph_from_dict(spec: dict[str, Any]) -> Graph:
    """Parse the JSON graph format.

    Accepts ``{"vertices": n, "edges": [[u, v], ...]}`` (0-based),
    ``{"lattice": {"width": W, "height": H}}``, ``{"named": "diamond_kite"}``
    or ``{"named": "path", "n": k}``.
    """
    if "lattice" in spec:
        lat = spec["lattice"]
        return build_cluster_state(int(lat["width"]), int(lat["height"]))
    if "named" in spec:
        name = spec["named"]
        if name == "diamond_kite":
            return build_diamond_kite()
        if name == "path":
            return build_path(int(spec["n"]))
        raise ValueError(f"unknown named graph {name!r}")
    if "vertices" not in spec or "edges" not in spec:
        raise ValueError("graph spec needs 'vertices' and 'edges', 'lattice' or 'named'")
    return Graph(int(spec["vertices"]), spec["edges"], spec.get("labels"))


def load_graph(path: str | Path) -> Graph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))
