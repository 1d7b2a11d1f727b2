"""Client and server sides of robust verifiable blind delegated computation.

Over ``N`` rounds the client hides ``d`` copies of its computation among test
rounds. Every round is delegated blindly: the server gets opaque state
descriptors and encrypted angles ``delta``, and returns raw outcomes ``b``.
The server picks its own CZ ordering per round from a plan. After the verdict,
the client releases the test-round secrets, so the server can decrypt its trap
outcomes and bin them by (ordering, trap) for noise estimation.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from vbqc_aces.circuit import GateOrdering, derive_seed_sequence
from vbqc_aces.estimator import TrapStatistic
from vbqc_aces.graphs import Graph, VertexColoring
from vbqc_aces.noise import NoiseModel
from vbqc_aces.planner import OrderingPlan
from vbqc_aces.protocol.angles import ANGLE_COUNT, QubitSecrets, corrected_angle, decrypt, delta_angle
from vbqc_aces.protocol.channel import (
    Channel,
    Listener,
    QueueChannel,
    RegistryService,
    RemoteResolver,
    connect,
)
from vbqc_aces.protocol.device import BASIS, PLUS, QubitState, Resolver, SimulatedDevice, StateRegistry
from vbqc_aces.protocol.mbqc import DENSE_QUBIT_CAP, MeasurementPattern

COMPUTATION = "computation"
TEST = "test"
ACCEPT = "accept"
ABORT = "abort"


class ProtocolStateError(RuntimeError):
    """An operation was attempted at the wrong point of the protocol."""


class ProtocolViolation(RuntimeError):
    """The peer sent a message that does not fit the dialogue."""


@dataclass(frozen=True)
class ProtocolConfig:
    N: int
    d: int
    w: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.N < 1 or not 0 <= self.d < self.N:
            raise ValueError(f"need 0 <= d < N, got N={self.N}, d={self.d}")
        if not 0 <= self.w < self.N - self.d:
            raise ValueError(f"need 0 <= w < N - d, got w={self.w}")


@dataclass(frozen=True)
class TestRoundSpec:
    color: int
    traps: tuple[int, ...]
    angles: Mapping[int, int]


def sample_test_round(coloring: VertexColoring, rng: np.random.Generator) -> TestRoundSpec:
    """Uniform color class as traps (angle 0); every other vertex gets a uniform angle."""
    color = int(rng.integers(0, coloring.k))
    traps = tuple(v for v, c in enumerate(coloring.color_of) if c == color)
    angles = {
        v: 0 if c == color else int(rng.integers(0, ANGLE_COUNT))
        for v, c in enumerate(coloring.color_of)
    }
    return TestRoundSpec(color, traps, angles)


def majority_vote(bits: Iterable[int]) -> int:
    """Majority bit; an even split returns 0."""
    bits = list(bits)
    if not bits:
        raise ValueError("majority of an empty sequence")
    return int(2 * sum(bits) > len(bits))


def verdict(failed_tests: int, w: int) -> str:
    return ABORT if failed_tests > w else ACCEPT


# --- records ----------------------------------------------------------------


@dataclass
class RoundRecord:
    """Client view of one round."""

    index: int
    kind: str
    ordering_id: str | None = None
    color: int | None = None
    traps: tuple[int, ...] = ()
    secrets: dict[int, QubitSecrets] = field(default_factory=dict)
    deltas: dict[int, int] = field(default_factory=dict)
    outcomes: dict[int, int] = field(default_factory=dict)
    decrypted: dict[int, int] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.kind == TEST and any(self.decrypted[t] for t in self.traps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.index,
            "kind": self.kind,
            "ordering_id": self.ordering_id,
            "color": self.color,
            "traps": list(self.traps),
            "secrets": {str(v): s.to_dict() for v, s in sorted(self.secrets.items())},
            "deltas": {str(v): k for v, k in sorted(self.deltas.items())},
            "outcomes": {str(v): b for v, b in sorted(self.outcomes.items())},
            "decrypted": {str(v): s for v, s in sorted(self.decrypted.items())},
        }


@dataclass
class ServerRoundRecord:
    """Server view of one round; ``decrypted`` stays ``None`` until key release."""

    index: int
    ordering_id: str
    deltas: dict[int, int] = field(default_factory=dict)
    outcomes: dict[int, int] = field(default_factory=dict)
    traps: tuple[int, ...] | None = None
    decrypted: dict[int, int] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.index,
            "ordering_id": self.ordering_id,
            "deltas": {str(v): k for v, k in sorted(self.deltas.items())},
            "outcomes": {str(v): b for v, b in sorted(self.outcomes.items())},
            "traps": None if self.traps is None else list(self.traps),
            "decrypted": None if self.decrypted is None else {str(v): s for v, s in sorted(self.decrypted.items())},
        }


@dataclass
class ServerTranscript:
    records: list[ServerRoundRecord] = field(default_factory=list)
    verdict: str | None = None


def key_release_payload(records: Sequence[RoundRecord], finished_verdict: str | None) -> list[dict[str, Any]]:
    """Secrets of the test rounds only, one entry per test round."""
    if finished_verdict is None:
        raise ProtocolStateError("keys can only be released after the verdict")
    return [
        {
            "round": r.index,
            "traps": list(r.traps),
            "secrets": {str(v): s.to_dict() for v, s in sorted(r.secrets.items())},
        }
        for r in records
        if r.kind == TEST
    ]


def release_keys(transcript: ServerTranscript, payload: Sequence[Mapping[str, Any]]) -> list[ServerRoundRecord]:
    """Decrypt the server's test-round trap outcomes as ``s = b xor r``."""
    if transcript.verdict is None:
        raise ProtocolStateError("key release refused: the protocol has not finished")
    by_round = {r.index: r for r in transcript.records}
    out = []
    for entry in payload:
        rec = by_round[int(entry["round"])]
        traps = tuple(int(t) for t in entry["traps"])
        secrets = entry["secrets"]
        rec.traps = traps
        rec.decrypted = {t: decrypt(rec.outcomes[t], int(secrets[str(t)]["r"])) for t in traps}
        out.append(rec)
    return out


def trap_statistics(records: Iterable[ServerRoundRecord]) -> list[TrapStatistic]:
    """Bin decrypted trap outcomes by (ordering, trap vertex)."""
    counts: dict[tuple[str, int], list[int]] = {}
    for r in records:
        if r.decrypted is None:
            continue
        for t, s in r.decrypted.items():
            acc = counts.setdefault((r.ordering_id, t), [0, 0])
            acc[0] += 1
            acc[1] += s
    return [TrapStatistic(o, t, n, f) for (o, t), (n, f) in sorted(counts.items())]


# --- client -------------------------------------------------------------------


@dataclass
class ClientOutcome:
    verdict: str
    result: int | None
    failed_tests: int
    records: list[RoundRecord]
    key_payload: list[dict[str, Any]]


class Client:
    def __init__(
        self,
        config: ProtocolConfig,
        pattern: MeasurementPattern,
        coloring: VertexColoring,
        channel: Channel,
        registry: StateRegistry,
    ) -> None:
        if not coloring.is_proper(pattern.graph):
            raise ValueError("test rounds need a proper coloring of the pattern graph")
        self.config = config
        self.pattern = pattern
        self.graph = pattern.graph
        self.coloring = coloring
        self.channel = channel
        self.registry = registry
        self.rng = np.random.default_rng(derive_seed_sequence(config.seed, "client"))
        self.records: list[RoundRecord] = []
        self.verdict: str | None = None

    def _expect(self, kind: str, round_index: int) -> dict[str, Any]:
        msg = self.channel.recv()
        if msg.get("type") != kind or msg.get("round") != round_index:
            raise ProtocolViolation(f"expected {kind} for round {round_index}, got {msg}")
        return msg

    def _run_round(self, index: int, kind: str) -> RoundRecord:
        g = self.graph
        rec = RoundRecord(index, kind)
        rec.secrets = {v: QubitSecrets.sample(self.rng) for v in g.vertices}
        if kind == TEST:
            spec = sample_test_round(self.coloring, self.rng)
            rec.color, rec.traps = spec.color, spec.traps
            trapset = set(spec.traps)
            states = {
                v: QubitState(PLUS, s.theta) if v in trapset else QubitState(BASIS, s.a)
                for v, s in rec.secrets.items()
            }
        else:
            states = {v: QubitState(PLUS, s.theta) for v, s in rec.secrets.items()}
        for v in g.vertices:
            self.channel.send(
                {"type": "prepare", "round": index, "vertex": v,
                 "state_descriptor": self.registry.register(states[v])}
            )
        rec.ordering_id = self._expect("entangle", index)["ordering_id"]
        flips = {v: sum(rec.secrets[w].a for w in g.neighbors(v)) & 1 for v in g.vertices}
        for v in self.pattern.order:
            if kind == TEST:
                phi = spec.angles[v]
            else:
                phi = corrected_angle(self.pattern.angles[v], *self.pattern.corrections(v, rec.decrypted))
            delta = delta_angle(phi, rec.secrets[v], flips[v])
            rec.deltas[v] = delta
            self.channel.send({"type": "measure", "round": index, "vertex": v, "delta_k": delta})
            b = int(self._expect("outcome", index)["b"])
            rec.outcomes[v] = b
            rec.decrypted[v] = decrypt(b, rec.secrets[v].r)
        return rec

    def run(self) -> ClientOutcome:
        cfg = self.config
        comp = set(self.rng.choice(cfg.N, size=cfg.d, replace=False).tolist())
        for i in range(cfg.N):
            self.records.append(self._run_round(i, COMPUTATION if i in comp else TEST))
        failed = sum(r.failed for r in self.records)
        self.verdict = verdict(failed, cfg.w)
        results = [r.decrypted[self.pattern.result_vertex] for r in self.records if r.kind == COMPUTATION]
        result = majority_vote(results) if self.verdict == ACCEPT and results else None
        payload = self.release_keys()
        self.channel.send({"type": "finish", "verdict": self.verdict, "key_rounds": len(payload)})
        for entry in payload:
            self.channel.send({"type": "keys", **entry})
        return ClientOutcome(self.verdict, result, failed, self.records, payload)

    def release_keys(self) -> list[dict[str, Any]]:
        return key_release_payload(self.records, self.verdict)


# --- server -------------------------------------------------------------------

Adversary = Callable[[SimulatedDevice, int], None]


class ZAttack:
    """Applies Z to one vertex after entangling, every round."""

    def __init__(self, vertex: int) -> None:
        self.vertex = vertex

    def __call__(self, device: SimulatedDevice, round_index: int) -> None:
        device.apply_z(self.vertex)


@dataclass
class ServerOutcome:
    transcript: ServerTranscript
    decrypted: list[ServerRoundRecord]
    stats: list[TrapStatistic]


class Server:
    def __init__(
        self,
        graph: Graph,
        plan: OrderingPlan | None,
        noise: NoiseModel | None,
        channel: Channel,
        resolver: Resolver,
        seed: int,
        adversary: Adversary | None = None,
    ) -> None:
        self.graph = graph
        self.orderings = list(plan.orderings) if plan is not None else [GateOrdering.canonical(graph)]
        for o in self.orderings:
            o.validate(graph)
        self.channel = channel
        self.rng = np.random.default_rng(derive_seed_sequence(seed, "server"))
        self.device = SimulatedDevice(
            graph, noise, resolver, np.random.default_rng(derive_seed_sequence(seed, "device"))
        )
        self.adversary = adversary
        self.transcript = ServerTranscript()

    def run(self) -> ServerOutcome:
        n = self.graph.vertex_count
        current: ServerRoundRecord | None = None
        prepared = 0
        keys: list[dict[str, Any]] = []
        expected_keys: int | None = None
        while expected_keys is None or len(keys) < expected_keys:
            msg = self.channel.recv()
            kind = msg.get("type")
            if kind == "prepare":
                if prepared == 0:
                    self.device.reset()
                self.device.prepare(int(msg["vertex"]), int(msg["state_descriptor"]))
                prepared += 1
                if prepared == n:
                    ordering = self.orderings[int(self.rng.integers(0, len(self.orderings)))]
                    self.device.entangle(ordering)
                    if self.adversary is not None:
                        self.adversary(self.device, int(msg["round"]))
                    current = ServerRoundRecord(int(msg["round"]), ordering.ordering_id)
                    self.transcript.records.append(current)
                    prepared = 0
                    self.channel.send({"type": "entangle", "round": current.index,
                                       "ordering_id": ordering.ordering_id})
            elif kind == "measure":
                if current is None or msg["round"] != current.index:
                    raise ProtocolViolation(f"measurement outside the current round: {msg}")
                v, delta = int(msg["vertex"]), int(msg["delta_k"])
                b = self.device.measure(v, delta)
                current.deltas[v], current.outcomes[v] = delta, b
                self.channel.send({"type": "outcome", "round": current.index, "vertex": v, "b": b})
            elif kind == "finish":
                self.transcript.verdict = msg["verdict"]
                expected_keys = int(msg["key_rounds"])
            elif kind == "keys":
                if self.transcript.verdict is None:
                    raise ProtocolStateError("keys received before the verdict")
                keys.append(msg)
            else:
                raise ProtocolViolation(f"unexpected message {msg}")
        decrypted = release_keys(self.transcript, keys)
        return ServerOutcome(self.transcript, decrypted, trap_statistics(decrypted))


# --- drivers --------------------------------------------------------------------


@dataclass
class ProtocolResult:
    verdict: str
    result: int | None
    failed_tests: int
    client_records: list[RoundRecord]
    server: ServerOutcome
    key_payload: list[dict[str, Any]]

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPT

    @property
    def stats(self) -> list[TrapStatistic]:
        return self.server.stats

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "result": self.result,
            "failed_tests": self.failed_tests,
            "client_records": [r.to_dict() for r in self.client_records],
            "server_records": [r.to_dict() for r in self.server.transcript.records],
        }


def _run_pair(
    client_fn: Callable[[], ClientOutcome],
    server_fn: Callable[[], ServerOutcome],
    server_channel: Channel,
):
    """Client in this thread, server in a helper; a server failure closes its end."""
    box: dict[str, Any] = {}

    def target() -> None:
        try:
            box["server"] = server_fn()
        except BaseException as exc:  # surfaced in the caller's thread
            box["error"] = exc
            server_channel.close()

    t = threading.Thread(target=target, daemon=True)
    t.start()
    try:
        client = client_fn()
    except BaseException:
        t.join(5.0)
        if "error" in box:
            raise box["error"] from None
        raise
    t.join()
    if "error" in box:
        raise box["error"]
    return client, box["server"]


def run_rvbqc(
    config: ProtocolConfig,
    pattern: MeasurementPattern,
    coloring: VertexColoring,
    plan: OrderingPlan | None = None,
    noise: NoiseModel | None = None,
    transport: str = "inprocess",
    adversary: Adversary | None = None,
) -> ProtocolResult:
    """Run client and server in one process over the chosen transport."""
    if config.d > 0 and pattern.graph.vertex_count > DENSE_QUBIT_CAP:
        raise ValueError(f"computation rounds need dense simulation, capped at {DENSE_QUBIT_CAP} qubits")
    registry = StateRegistry()
    listener = None
    if transport == "inprocess":
        client_ch, server_ch = QueueChannel.pair()
    elif transport == "tcp":
        listener = Listener()
        box: dict[str, Channel] = {}
        acceptor = threading.Thread(target=lambda: box.setdefault("ch", listener.accept()), daemon=True)
        acceptor.start()
        client_ch = connect(*listener.address)
        acceptor.join()
        server_ch = box["ch"]
    else:
        raise ValueError(f"unknown transport {transport!r}")
    try:
        client = Client(config, pattern, coloring, client_ch, registry)
        server = Server(pattern.graph, plan, noise, server_ch, registry.resolve, config.seed, adversary)
        c, s = _run_pair(client.run, server.run, server_ch)
    finally:
        client_ch.close()
        server_ch.close()
        if listener is not None:
            listener.close()
    return ProtocolResult(c.verdict, c.result, c.failed_tests, c.records, s, c.key_payload)


def run_client(
    config: ProtocolConfig,
    pattern: MeasurementPattern,
    coloring: VertexColoring,
    address: tuple[str, int],
) -> ClientOutcome:
    """Client process: one connection for messages, a second for the state link."""
    registry = StateRegistry()
    channel = connect(*address)
    link = RegistryService(registry, connect(*address)).start()
    try:
        return Client(config, pattern, coloring, channel, registry).run()
    finally:
        channel.close()
        link.stop()


def run_server(
    graph: Graph,
    plan: OrderingPlan | None,
    noise: NoiseModel | None,
    address: tuple[str, int],
    seed: int,
    adversary: Adversary | None = None,
    timeout: float | None = 300.0,
) -> ServerOutcome:
    listener = Listener(*address, timeout=timeout)
    try:
        channel = listener.accept()
        link = listener.accept()
    finally:
        listener.close()
    try:
        return Server(graph, plan, noise, channel, RemoteResolver(link), seed, adversary).run()
    finally:
        channel.close()
        link.close()
