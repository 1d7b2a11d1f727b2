"""Server-side quantum device simulation.

The client registers the true single-qubit states it "sends" in a
:class:`StateRegistry` and hands the server only opaque descriptors. The
device resolves descriptors through a resolver callable, which stands in for
the quantum channel; the server logic never looks at the states.

Rounds in which every ``|+_theta>`` qubit has only computational-basis
neighbours (test rounds) are simulated with a Pauli frame at any size. Other
rounds use the dense statevector, up to :data:`DENSE_QUBIT_CAP` qubits.
Depolarizing channels commute in distribution with the single-qubit
encryption unitaries, so frame errors are sampled in the unencrypted frame.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from vbqc_aces.circuit import GateOrdering, sample_error_frame
from vbqc_aces.graphs import Graph
from vbqc_aces.noise import NoiseModel
from vbqc_aces.protocol.angles import PI, to_radians
from vbqc_aces.protocol.mbqc import DENSE_QUBIT_CAP, StateVector, basis_state, plus_state

PLUS = "plus"
BASIS = "basis"


@dataclass(frozen=True)
class QubitState:
    """``|+_theta>`` (kind ``plus``, value theta in pi/4 units) or ``|value>`` (kind ``basis``)."""

    kind: str
    value: int

    def vector(self) -> np.ndarray:
        return plus_state(self.value) if self.kind == PLUS else basis_state(self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


class StateRegistry:
    """Client-held table of prepared states, addressed by opaque integer descriptors."""

    def __init__(self) -> None:
        self._states: dict[int, QubitState] = {}
        self._next = 0
        self._lock = threading.Lock()

    def register(self, state: QubitState) -> int:
        with self._lock:
            d = self._next
            self._next += 1
            self._states[d] = state
        return d

    def resolve(self, descriptor: int) -> QubitState:
        with self._lock:
            return self._states.pop(int(descriptor))


Resolver = Callable[[int], QubitState]


class SimulatedDevice:
    def __init__(
        self,
        graph: Graph,
        noise: NoiseModel | None,
        resolver: Resolver,
        rng: np.random.Generator,
        dense_cap: int = DENSE_QUBIT_CAP,
    ) -> None:
        self.graph = graph
        self.noise = noise
        self.resolver = resolver
        self.rng = rng
        self.dense_cap = dense_cap
        self._states: dict[int, QubitState] = {}
        self._dense: StateVector | None = None
        self._frame_z: dict[int, int] = {}
        self._shift: dict[int, int] = {}

    def prepare(self, vertex: int, descriptor: int) -> None:
        self._states[vertex] = self.resolver(descriptor)

    def _frame_round(self) -> bool:
        return all(
            all(self._states[w].kind == BASIS for w in self.graph.neighbors(v))
            for v, s in self._states.items()
            if s.kind == PLUS
        )

    def entangle(self, ordering: GateOrdering) -> None:
        if len(self._states) != self.graph.vertex_count:
            raise RuntimeError("entangle before every qubit was prepared")
        ordering.validate(self.graph)
        if self._frame_round():
            self._dense = None
            n = self.graph.vertex_count
            if self.noise is not None:
                frame = sample_error_frame(self.graph, ordering, self.noise, self.rng)
                self._frame_z = {v: (frame.z_mask >> v) & 1 for v in range(n)}
            else:
                self._frame_z = dict.fromkeys(range(n), 0)
            # CZ with a |1> neighbour puts a Z on a |+_theta> qubit
            self._shift = {
                v: sum(self._states[w].value for w in self.graph.neighbors(v)) & 1
                for v, s in self._states.items()
                if s.kind == PLUS
            }
            return
        if self.graph.vertex_count > self.dense_cap:
            raise ValueError(
                f"computation rounds need dense simulation, capped at {self.dense_cap} qubits"
            )
        sv = StateVector({v: s.vector() for v, s in self._states.items()})
        for g in ordering.sequence:
            sv.cz(*g)
            if self.noise is None:
                continue
            for u in self.noise.gate_support(g):
                p = self.noise.prob(g, u)
                if p > 0.0 and self.rng.random() < p:
                    sv.pauli(u, "XYZ"[int(self.rng.integers(0, 3))])
        self._dense = sv

    def apply_z(self, vertex: int) -> None:
        """Deliberate deviation by a malicious server."""
        if self._dense is not None:
            self._dense.pauli(vertex, "Z")
        else:
            self._frame_z[vertex] ^= 1

    def measure(self, vertex: int, delta_k: int) -> int:
        if self._dense is not None:
            return self._dense.measure(vertex, delta_k, self.rng)
        state = self._states[vertex]
        if state.kind == BASIS:
            return int(self.rng.integers(0, 2))
        z = self._frame_z[vertex] ^ self._shift[vertex]
        offset = to_radians(delta_k - state.value - PI * z)
        p0 = math.cos(offset / 2.0) ** 2
        return int(self.rng.random() >= p0)

    def reset(self) -> None:
        self._states.clear()
        self._dense = None
        self._frame_z = {}
        self._shift = {}

