"""Shared builders for randomized instances."""

import numpy as np

from vbqc_aces.circuit import GateOrdering
from vbqc_aces.graphs import Graph, random_graph
from vbqc_aces.noise import crosstalk_model, lambda_from_p

# 1-based kite edge lists used by the worked example
KITE_SHORT = [(1, 2), (1, 4), (2, 3), (2, 4), (3, 4)]
KITE_FULL = [(2, 4), (2, 3), (3, 4), (1, 4), (1, 2)]
KITE_MINUS_23 = [(2, 4), (3, 4), (1, 4), (1, 2), (2, 3)]


def zero_based(edges):
    return [(u - 1, v - 1) for u, v in edges]


def random_instance(rng: np.random.Generator, max_vertices=8, p_max=0.1, min_edges=1, min_vertices=2):
    while True:
        n = int(rng.integers(min_vertices, max_vertices + 1))
        g = random_graph(n, float(rng.uniform(0.3, 0.8)), rng)
        if len(g.edges) >= min_edges:
            break
    order = [g.edges[i] for i in rng.permutation(len(g.edges))]
    lam = {(e, u): lambda_from_p(float(rng.uniform(0, p_max))) for e in g.edges for u in e}
    return g, GateOrdering(order, "r"), crosstalk_model(g, {}, lam)


def random_model(g: Graph, rng: np.random.Generator, p_max=0.1):
    lam = {(e, u): lambda_from_p(float(rng.uniform(0, p_max))) for e in g.edges for u in e}
    return crosstalk_model(g, {}, lam)


def random_independent_set(g: Graph, rng: np.random.Generator):
    chosen = []
    for v in rng.permutation(g.vertex_count):
        if all(not g.has_edge(int(v), u) for u in chosen):
            chosen.append(int(v))
    return sorted(chosen)


def delegated_output_counts(pattern, samples: int, seed: int, noise=None):
    """Run ``samples`` computation rounds blindly; return output-tuple frequencies."""
    from vbqc_aces.graphs import greedy_color
    from vbqc_aces.protocol.session import COMPUTATION, ProtocolConfig, run_rvbqc

    cfg = ProtocolConfig(samples + 1, samples, 0, seed)
    res = run_rvbqc(cfg, pattern, greedy_color(pattern.graph), noise=noise)
    outputs = sorted(pattern.outputs)
    counts: dict[tuple[int, ...], float] = {}
    for r in res.client_records:
        if r.kind == COMPUTATION:
            key = tuple(r.decrypted[o] for o in outputs)
            counts[key] = counts.get(key, 0) + 1
    return {k: c / samples for k, c in counts.items()}
