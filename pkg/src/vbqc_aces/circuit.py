"""Test-round backends: exact trap bias and Pauli-frame Monte Carlo.

A test round applies every CZ of the graph once, in a chosen order, each gate
followed by its depolarizing channels. The trap at ``v`` passes when the final
X measurement on ``v`` returns +1.

The exact backend pushes the trap stabilizer ``X_v Z_N(v)`` forward through
the ordering and multiplies in one eigenvalue each time the (conjugated)
stabilizer touches a noisy qubit. The sampling backend draws Pauli faults and
tracks their combined effect on the traps.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from vbqc_aces.graphs import Edge, Graph, canonical_edge
from vbqc_aces.noise import PER_EDGE, PER_QUBIT, NoiseModel
from vbqc_aces.pauli import PauliOperator, anticommutes_with_x, conjugate_through_cz, trap_stabilizer

# shots per independently seeded block; fixed so results never depend on batching
CHUNK_SHOTS = 1 << 18


@dataclass(frozen=True)
class GateOrdering:
    """Order in which the CZ gates of a round are applied."""

    sequence: tuple[Edge, ...]
    ordering_id: str = "canonical"

    def __init__(self, sequence: Iterable[Sequence[int]], ordering_id: str = "canonical") -> None:
        object.__setattr__(self, "sequence", tuple(canonical_edge(*e) for e in sequence))
        object.__setattr__(self, "ordering_id", str(ordering_id))

    def validate(self, graph: Graph) -> None:
        if len(self.sequence) != len(graph.edges) or set(self.sequence) != set(graph.edges):
            raise ValueError(f"ordering {self.ordering_id!r} is not a permutation of the edge set")

    def position(self) -> dict[Edge, int]:
        return {e: i for i, e in enumerate(self.sequence)}

    def to_dict(self) -> dict:
        return {"id": self.ordering_id, "edges": [list(e) for e in self.sequence]}

    @classmethod
    def canonical(cls, graph: Graph) -> GateOrdering:
        return cls(graph.edges, "canonical")


@dataclass
class ShotResult:
    """Per-trap outcomes (+1 pass, -1 fail) of repeated test rounds."""

    trap_outcomes: dict[int, np.ndarray]
    shots: int

    def failures(self) -> dict[int, int]:
        return {v: int(np.count_nonzero(o < 0)) for v, o in self.trap_outcomes.items()}


def p_fail_from_bias(bias: float) -> float:
    if not -1.0 <= bias <= 1.0:
        raise ValueError(f"bias {bias} outside [-1, 1]")
    return (1.0 - bias) / 2.0


def bias_from_p_fail(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return 1.0 - 2.0 * p


def _check_vertex(graph: Graph, v: int) -> None:
    if not 0 <= v < graph.vertex_count:
        raise IndexError(f"vertex {v} out of range")


def _gate_supports(ordering: GateOrdering, support) -> list[tuple[int, ...]]:
    support = support or {}
    return [tuple(support.get(g, g)) for g in ordering.sequence]


def support_set(
    graph: Graph,
    ordering: GateOrdering,
    v: int,
    mode: str = PER_QUBIT,
    support=None,
) -> Counter:
    """Parameter keys whose eigenvalues enter the bias of the trap at ``v``.

    Returned as a multiset (``Counter``) of ``(edge, qubit)`` keys in
    ``per_qubit`` mode or edge keys in ``per_edge`` mode.
    """
    ordering.validate(graph)
    _check_vertex(graph, v)
    p = trap_stabilizer(graph, v)
    found: Counter = Counter()
    for g, nu in zip(ordering.sequence, _gate_supports(ordering, support)):
        p = conjugate_through_cz(p, g)
        mask = p.support_mask
        if mode == PER_QUBIT:
            for u in nu:
                if (mask >> u) & 1:
                    found[(g, u)] += 1
        elif mode == PER_EDGE:
            if any((mask >> u) & 1 for u in nu):
                found[g] += 1
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return found


def exact_trap_bias(graph: Graph, ordering: GateOrdering, noise: NoiseModel, v: int) -> float:
    """Infinite-shot bias ``P(pass) - P(fail)`` of the trap at ``v``."""
    keys = support_set(graph, ordering, v, noise.mode, noise.support)
    bias = 1.0
    for key, mult in keys.items():
        bias *= noise.lam(key) ** mult
    return bias


def exact_biases(graph: Graph, ordering: GateOrdering, noise: NoiseModel, traps: Iterable[int]) -> dict[int, float]:
    return {v: exact_trap_bias(graph, ordering, noise, v) for v in traps}


# --- sampling ---------------------------------------------------------------

_X, _Y, _Z = 0, 1, 2


def derive_seed_sequence(seed: int, *stream: object) -> np.random.SeedSequence:
    """Seed sequence keyed by ``seed`` and a tuple of stream labels.

    Labels are hashed, so the same (seed, labels) always yields the same
    stream whatever order streams are requested in.
    """
    key = []
    for item in stream:
        digest = hashlib.sha256(repr(item).encode()).digest()
        key.append(int.from_bytes(digest[:8], "little"))
    return np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(key))


def _locations(ordering: GateOrdering, noise: NoiseModel) -> list[tuple[int, int, float]]:
    """(gate index, qubit, error probability) for every noisy channel."""
    if noise.mode != PER_QUBIT:
        raise ValueError("sampling needs a per_qubit noise model")
    out = []
    for i, g in enumerate(ordering.sequence):
        for u in noise.gate_support(g):
            p = noise.prob(g, u)
            if p > 0.0:
                out.append((i, u, p))
    return out


def propagate_fault(graph: Graph, ordering: GateOrdering, gate_index: int, fault: PauliOperator) -> PauliOperator:
    """Push a fault occurring right after gate ``gate_index`` to the end of the round."""
    for g in ordering.sequence[gate_index + 1 :]:
        fault = conjugate_through_cz(fault, g)
    return fault


def _fault_flip_table(
    graph: Graph, ordering: GateOrdering, locations, traps: Sequence[int]
) -> list[tuple[list[int], list[int]]]:
    """For each location, the traps flipped by an X fault and by a Z fault."""
    n = graph.vertex_count
    table = []
    for i, u, _ in locations:
        fx = propagate_fault(graph, ordering, i, PauliOperator.single(n, u, "X"))
        fz = propagate_fault(graph, ordering, i, PauliOperator.single(n, u, "Z"))
        table.append(
            (
                [j for j, t in enumerate(traps) if anticommutes_with_x(fx, t)],
                [j for j, t in enumerate(traps) if anticommutes_with_x(fz, t)],
            )
        )
    return table


def _sample_faults(rng: np.random.Generator, locations, shots: int):
    """Yield ``(location index, shot indices, fault kinds)`` for one block."""
    for k, (_, _, p) in enumerate(locations):
        count = int(rng.binomial(shots, p))
        if count == 0:
            continue
        if count == shots:
            idx = np.arange(shots)
        else:
            idx = rng.choice(shots, size=count, replace=False)
        kinds = rng.integers(0, 3, size=count)
        yield k, idx, kinds


def _validate_traps(graph: Graph, traps: Sequence[int]) -> list[int]:
    traps = sorted(set(traps))
    for t in traps:
        _check_vertex(graph, t)
    if not graph.is_independent(traps):
        raise ValueError("trap vertices must form an independent set")
    return traps


def simulate_test_round_mc(
    graph: Graph,
    ordering: GateOrdering,
    noise: NoiseModel,
    traps: Iterable[int],
    shots: int,
    seed: int,
    stream: tuple = (),
) -> ShotResult:
    """Sample ``shots`` noisy test rounds and record every trap's outcome.

    Each channel after gate ``g`` on qubit ``u`` injects X, Y or Z with
    probability ``p/3`` each. Because frame propagation through CZ is linear,
    a fault's effect on the traps is tabulated once per location and XOR-ed
    into the shots that drew it; :func:`simulate_test_round_reference` walks
    each shot explicitly and gives identical outcomes for identical draws.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    ordering.validate(graph)
    traps = _validate_traps(graph, traps)
    locations = _locations(ordering, noise)
    table = _fault_flip_table(graph, ordering, locations, traps)
    flips = np.zeros((len(traps), shots), dtype=np.uint8)
    for start in range(0, shots, CHUNK_SHOTS):
        size = min(CHUNK_SHOTS, shots - start)
        rng = np.random.default_rng(derive_seed_sequence(seed, ordering.ordering_id, *stream, start))
        block = flips[:, start : start + size]
        for k, idx, kinds in _sample_faults(rng, locations, size):
            fx, fz = table[k]
            if fx:
                hit = idx[kinds != _Z]
                for j in fx:
                    block[j, hit] ^= 1
            if fz:
                hit = idx[kinds != _X]
                for j in fz:
                    block[j, hit] ^= 1
    outcomes = {t: (1 - 2 * flips[j].astype(np.int8)) for j, t in enumerate(traps)}
    return ShotResult(outcomes, shots)


def simulate_test_round_reference(
    graph: Graph,
    ordering: GateOrdering,
    noise: NoiseModel,
    traps: Iterable[int],
    shots: int,
    seed: int,
    stream: tuple = (),
) -> ShotResult:
    """Shot-by-shot Pauli-frame walk consuming the same random draws as the fast path."""
    ordering.validate(graph)
    traps = _validate_traps(graph, traps)
    locations = _locations(ordering, noise)
    n = graph.vertex_count
    out = {t: np.ones(shots, dtype=np.int8) for t in traps}
    for start in range(0, shots, CHUNK_SHOTS):
        size = min(CHUNK_SHOTS, shots - start)
        rng = np.random.default_rng(derive_seed_sequence(seed, ordering.ordering_id, *stream, start))
        # faults[shot][gate index] -> list of injected single-qubit Paulis
        faults: dict[int, dict[int, list[PauliOperator]]] = {}
        for k, idx, kinds in _sample_faults(rng, locations, size):
            i, u, _ = locations[k]
            for s, kind in zip(idx.tolist(), kinds.tolist()):
                faults.setdefault(s, {}).setdefault(i, []).append(PauliOperator.single(n, u, "XYZ"[kind]))
        for s, by_gate in faults.items():
            frame = PauliOperator.identity(n)
            for i, g in enumerate(ordering.sequence):
                frame = conjugate_through_cz(frame, g)
                for f in by_gate.get(i, ()):
                    frame = frame * f
            for t in traps:
                if anticommutes_with_x(frame, t):
                    out[t][start + s] = -1
    return ShotResult(out, shots)


def sample_error_frame(
    graph: Graph, ordering: GateOrdering, noise: NoiseModel, rng: np.random.Generator
) -> PauliOperator:
    """One shot: the accumulated Pauli error at the end of a noisy round."""
    n = graph.vertex_count
    frame = PauliOperator.identity(n)
    for g in ordering.sequence:
        frame = conjugate_through_cz(frame, g)
        for u in noise.gate_support(g):
            p = noise.prob(g, u)
            if p > 0.0 and rng.random() < p:
                frame = frame * PauliOperator.single(n, u, "XYZ"[int(rng.integers(0, 3))])
    return frame
