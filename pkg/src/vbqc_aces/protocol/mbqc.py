"""Measurement patterns with flow, and a small dense statevector simulator."""

from __future__ import annotations

import graphlib
import itertools
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from vbqc_aces.graphs import Graph, build_cluster_state, build_path, graph_from_dict
from vbqc_aces.protocol.angles import ANGLE_COUNT, angle, corrected_angle, to_radians

DENSE_QUBIT_CAP = 16


@dataclass(frozen=True)
class MeasurementPattern:
    """Open graph with flow and one measurement angle per vertex.

    Inputs start in ``|+>`` like every other vertex. Every vertex, outputs
    included, is measured in the XY plane; the classical result is the
    corrected outcome of ``result_vertex`` (the smallest output by default).
    """

    graph: Graph
    angles: Mapping[int, int]
    flow: Mapping[int, int]
    inputs: frozenset[int]
    outputs: frozenset[int]
    order: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        g = self.graph
        object.__setattr__(self, "angles", {v: angle(self.angles.get(v, 0)) for v in g.vertices})
        object.__setattr__(self, "flow", dict(self.flow))
        object.__setattr__(self, "inputs", frozenset(self.inputs))
        object.__setattr__(self, "outputs", frozenset(self.outputs))
        if not self.outputs:
            raise ValueError("a pattern needs at least one output")
        for u, fu in self.flow.items():
            if u in self.outputs or fu in self.inputs:
                raise ValueError(f"flow {u}->{fu} must map non-outputs to non-inputs")
            if not g.has_edge(u, fu):
                raise ValueError(f"flow pair ({u}, {fu}) is not an edge")
        if len(set(self.flow.values())) != len(self.flow):
            raise ValueError("flow must be injective")
        missing = set(g.vertices) - self.outputs - set(self.flow)
        if missing:
            raise ValueError(f"non-output vertices without flow: {sorted(missing)}")
        object.__setattr__(self, "order", self._measurement_order())

    def _measurement_order(self) -> tuple[int, ...]:
        ts: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
        for v in self.graph.vertices:
            ts.add(v)
        for u, fu in sorted(self.flow.items()):
            ts.add(fu, u)
            for w in self.graph.neighbors(fu):
                if w != u:
                    ts.add(w, u)
        try:
            ts.prepare()
        except graphlib.CycleError as exc:
            raise ValueError("flow has no consistent measurement order") from exc
        order: list[int] = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return tuple(order)

    @property
    def result_vertex(self) -> int:
        return min(self.outputs)

    def corrections(self, v: int, s: Mapping[int, int]) -> tuple[int, int]:
        """``(sX, sZ)`` for ``v`` from the outcomes ``s`` measured so far."""
        sx = sz = 0
        for u, fu in self.flow.items():
            if fu == v:
                sx ^= s[u]
            elif v != u and self.graph.has_edge(fu, v):
                sz ^= s[u]
        return sx, sz

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "angles": [self.angles[v] for v in self.graph.vertices],
            "flow": [[u, f] for u, f in sorted(self.flow.items())],
            "inputs": sorted(self.inputs),
            "outputs": sorted(self.outputs),
        }


def pattern_from_dict(data: Mapping, graph: Graph | None = None) -> MeasurementPattern:
    g = graph if graph is not None else graph_from_dict(data["graph"])
    if "named" in data:
        return named_pattern(data["named"], g, data.get("angles"))
    angles = data.get("angles", [])
    if isinstance(angles, Mapping):
        angles = {int(k): int(v) for k, v in angles.items()}
    else:
        angles = dict(enumerate(int(a) for a in angles))
    return MeasurementPattern(
        g,
        angles,
        {int(u): int(f) for u, f in data.get("flow", [])},
        frozenset(data.get("inputs", [])),
        frozenset(data.get("outputs", [])),
    )


def line_pattern(n: int, angles: Iterable[int] | None = None) -> MeasurementPattern:
    g = build_path(n)
    return MeasurementPattern(
        g,
        dict(enumerate(angles or [0] * n)),
        {i: i + 1 for i in range(n - 1)},
        frozenset({0}),
        frozenset({n - 1}),
    )


def grid_pattern(width: int, height: int, angles: Iterable[int] | None = None) -> MeasurementPattern:
    """Row-wise flow ``(r, c) -> (r, c + 1)``; column 0 is input, the last column output."""
    g = build_cluster_state(width, height)
    vid = lambda r, c: r * width + c  # noqa: E731
    flow = {vid(r, c): vid(r, c + 1) for r in range(height) for c in range(width - 1)}
    return MeasurementPattern(
        g,
        dict(enumerate(angles or [0] * (width * height))),
        flow,
        frozenset(vid(r, 0) for r in range(height)),
        frozenset(vid(r, width - 1) for r in range(height)),
    )


def trivial_pattern(graph: Graph, angles: Mapping[int, int] | None = None) -> MeasurementPattern:
    """Every vertex is an output: independent measurements, no corrections."""
    v = frozenset(graph.vertices)
    return MeasurementPattern(graph, dict(angles or {}), {}, v, v)


def named_pattern(name: str, graph: Graph, angles=None) -> MeasurementPattern:
    if name == "diamond_kite":
        # 0-based kite: 0 -> 3 and 1 -> 2 is a flow with outputs {2, 3}
        ang = dict(enumerate(angles)) if angles is not None else {}
        return MeasurementPattern(graph, ang, {0: 3, 1: 2}, frozenset({0, 1}), frozenset({2, 3}))
    if name == "trivial":
        return trivial_pattern(graph, dict(enumerate(angles)) if angles is not None else None)
    raise ValueError(f"unknown pattern {name!r}")


# --- dense statevector ------------------------------------------------------


def plus_state(theta_k: int) -> np.ndarray:
    return np.array([1.0, np.exp(1j * to_radians(theta_k))]) / np.sqrt(2.0)


def basis_state(bit: int) -> np.ndarray:
    return np.array([1.0, 0.0], dtype=complex) if bit == 0 else np.array([0.0, 1.0], dtype=complex)


class StateVector:
    """Dense state of the not-yet-measured qubits; measured qubits are traced out."""

    def __init__(self, qubit_states: Mapping[int, np.ndarray]) -> None:
        if len(qubit_states) > DENSE_QUBIT_CAP:
            raise ValueError(f"dense simulation is capped at {DENSE_QUBIT_CAP} qubits")
        self.labels = sorted(qubit_states)
        psi = np.ones((), dtype=complex)
        for q in self.labels:
            psi = np.multiply.outer(psi, np.asarray(qubit_states[q], dtype=complex))
        self.psi = psi

    def _axis(self, q: int) -> int:
        return self.labels.index(q)

    def cz(self, u: int, v: int) -> None:
        idx = [slice(None)] * self.psi.ndim
        idx[self._axis(u)] = 1
        idx[self._axis(v)] = 1
        self.psi[tuple(idx)] *= -1

    def pauli(self, q: int, kind: str) -> None:
        ax = self._axis(q)
        if kind in ("Z", "Y"):
            idx = [slice(None)] * self.psi.ndim
            idx[ax] = 1
            self.psi[tuple(idx)] *= -1
        if kind in ("X", "Y"):
            self.psi = np.flip(self.psi, axis=ax).copy()

    def outcome_amplitudes(self, q: int, delta_k: int) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalised post-measurement states for outcomes 0 and 1 in basis ``|+-_delta>``."""
        ax = self._axis(q)
        psi = np.moveaxis(self.psi, ax, 0)
        phase = np.exp(-1j * to_radians(delta_k))
        return (psi[0] + phase * psi[1]) / np.sqrt(2.0), (psi[0] - phase * psi[1]) / np.sqrt(2.0)

    def measure(self, q: int, delta_k: int, rng: np.random.Generator) -> int:
        amp0, amp1 = self.outcome_amplitudes(q, delta_k)
        p0 = float(np.vdot(amp0, amp0).real)
        p1 = float(np.vdot(amp1, amp1).real)
        b = int(rng.random() * (p0 + p1) >= p0)
        chosen, p = (amp1, p1) if b else (amp0, p0)
        self.psi = chosen / np.sqrt(p)
        self.labels.remove(q)
        return b


def graph_state(graph: Graph) -> StateVector:
    sv = StateVector({v: plus_state(0) for v in graph.vertices})
    for u, v in graph.edges:
        sv.cz(u, v)
    return sv


def run_direct(pattern: MeasurementPattern, rng: np.random.Generator) -> dict[int, int]:
    """Unencrypted noiseless execution; returns every corrected outcome ``s_v``."""
    sv = graph_state(pattern.graph)
    s: dict[int, int] = {}
    for v in pattern.order:
        sx, sz = pattern.corrections(v, s)
        s[v] = sv.measure(v, corrected_angle(pattern.angles[v], sx, sz), rng)
    return s


def exact_output_distribution(pattern: MeasurementPattern) -> dict[tuple[int, ...], float]:
    """Exact joint distribution of the output outcomes, keyed by sorted outputs.

    Enumerates every branch of the non-output measurements, so it does not
    rely on the pattern being deterministic.
    """
    outputs = sorted(pattern.outputs)
    dist: dict[tuple[int, ...], float] = {}

    def walk(sv: StateVector, k: int, s: dict[int, int], weight: float) -> None:
        if weight < 1e-15:
            return
        if k == len(pattern.order):
            key = tuple(s[o] for o in outputs)
            dist[key] = dist.get(key, 0.0) + weight
            return
        v = pattern.order[k]
        sx, sz = pattern.corrections(v, s)
        amps = sv.outcome_amplitudes(v, corrected_angle(pattern.angles[v], sx, sz))
        total = sum(float(np.vdot(a, a).real) for a in amps)
        for b, amp in enumerate(amps):
            p = float(np.vdot(amp, amp).real) / total
            if p < 1e-15:
                continue
            child = StateVector.__new__(StateVector)
            child.labels = [q for q in sv.labels if q != v]
            child.psi = amp / np.sqrt(p * total)
            walk(child, k + 1, {**s, v: b}, weight * p)

    walk(graph_state(pattern.graph), 0, {}, 1.0)
    return {k: dist.get(k, 0.0) for k in itertools.product((0, 1), repeat=len(outputs))}


def total_variation(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def clifford_angles(rng: np.random.Generator, n: int) -> list[int]:
    return [int(2 * rng.integers(0, ANGLE_COUNT // 2)) for _ in range(n)]
