import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from helpers import delegated_output_counts
from vbqc_aces.circuit import GateOrdering
from vbqc_aces.graphs import Graph, build_cluster_state, build_diamond_kite, build_path, greedy_color
from vbqc_aces.noise import uniform_model
from vbqc_aces.planner import build_plan
from vbqc_aces.protocol.angles import QubitSecrets, corrected_angle, decrypt, delta_angle, encrypt
from vbqc_aces.protocol.channel import (
    ChannelError,
    Listener,
    QueueChannel,
    RegistryService,
    RemoteResolver,
    connect,
    parse_address,
)
from vbqc_aces.protocol.device import BASIS, PLUS, QubitState, SimulatedDevice, StateRegistry
from vbqc_aces.protocol.mbqc import (
    MeasurementPattern,
    clifford_angles,
    exact_output_distribution,
    grid_pattern,
    line_pattern,
    named_pattern,
    pattern_from_dict,
    run_direct,
    total_variation,
    trivial_pattern,
)
from vbqc_aces.protocol.session import (
    ABORT,
    ACCEPT,
    COMPUTATION,
    TEST,
    ProtocolConfig,
    ProtocolStateError,
    ServerTranscript,
    ZAttack,
    key_release_payload,
    majority_vote,
    release_keys,
    run_rvbqc,
    sample_test_round,
    verdict,
)

KITE = build_diamond_kite()
KITE_COLORING = greedy_color(KITE, [0, 1, 2, 3])


def kite_run(N=40, d=20, w=0, seed=0, noise=None, transport="inprocess", adversary=None):
    pattern = named_pattern("diamond_kite", KITE, [1, 2, 3, 4])
    return run_rvbqc(ProtocolConfig(N, d, w, seed), pattern, KITE_COLORING, build_plan(KITE), noise, transport, adversary)


# --- angles ---------------------------------------------------------------------


@pytest.mark.parametrize(("phi", "sx", "sz", "out"), [(1, 1, 1, 3), (5, 0, 0, 5), (0, 1, 0, 0)])
def test_corrected_angle(phi, sx, sz, out):
    assert corrected_angle(phi, sx, sz) == out


@pytest.mark.parametrize(
    ("phi", "secrets", "flip", "out"),
    [(0, QubitSecrets(5, 1, 0), 0, 1), (0, QubitSecrets(0, 0, 0), 0, 0), (1, QubitSecrets(0, 0, 1), 0, 7)],
)
def test_delta_angle(phi, secrets, flip, out):
    assert delta_angle(phi, secrets, flip) == out


@given(st.integers(0, 7), st.integers(0, 7), st.integers(0, 1), st.integers(0, 1), st.integers(0, 1))
def test_delta_stays_in_range(phi, theta, r, a, flip):
    assert 0 <= delta_angle(phi, QubitSecrets(theta, r, a), flip) < 8


@given(st.integers(0, 1), st.integers(0, 1))
def test_decryption_involution(b, r):
    assert encrypt(decrypt(b, r), r) == b
    assert decrypt(1, 1) == 0


def test_secrets_validation():
    with pytest.raises(ValueError):
        QubitSecrets(8, 0, 0)
    with pytest.raises(ValueError):
        QubitSecrets(0, 2, 0)


# --- test-round sampling and voting ------------------------------------------------


def test_grid_test_round_traps_independent(rng):
    g = build_cluster_state(6, 6)
    col = greedy_color(g, range(36))
    spec = sample_test_round(col, rng)
    assert g.is_independent(spec.traps) and len(spec.traps) == 18
    assert all(spec.angles[t] == 0 for t in spec.traps)


def test_kite_test_colors_uniform(rng):
    draws = [sample_test_round(KITE_COLORING, rng).color for _ in range(3000)]
    counts = np.bincount(draws, minlength=3)
    assert KITE_COLORING.k == 3
    assert stats.chisquare(counts).pvalue > 1e-3


def test_single_vertex_always_trap(rng):
    col = greedy_color(Graph(1, []))
    assert all(sample_test_round(col, rng).traps == (0,) for _ in range(10))


@pytest.mark.parametrize(("bits", "out"), [((1, 1, 0), 1), ((0, 1), 0), ((1,) * 251 + (0,) * 249, 1)])
def test_majority_vote(bits, out):
    assert majority_vote(bits) == out


def test_majority_vote_empty():
    with pytest.raises(ValueError):
        majority_vote([])


@pytest.mark.parametrize(("N", "d", "w"), [(5, 5, 0), (5, 2, 3), (5, -1, 0), (0, 0, 0)])
def test_config_validation(N, d, w):
    with pytest.raises(ValueError):
        ProtocolConfig(N, d, w)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_abort_monotone_in_w(failed, w1, w2):
    lo, hi = sorted((w1, w2))
    if verdict(failed, lo) == ACCEPT:
        assert verdict(failed, hi) == ACCEPT


# --- patterns and dense simulation -----------------------------------------------------


def test_pattern_validation():
    g = build_path(3)
    with pytest.raises(ValueError):
        MeasurementPattern(g, {}, {0: 2}, frozenset({0}), frozenset({2}))  # not an edge
    with pytest.raises(ValueError):
        MeasurementPattern(g, {}, {0: 1}, frozenset({0}), frozenset({2}))  # 1 has no flow
    with pytest.raises(ValueError):
        MeasurementPattern(g, {}, {}, frozenset(), frozenset())


def test_measurement_order_respects_flow():
    p = grid_pattern(3, 3, [1] * 9)
    pos = {v: i for i, v in enumerate(p.order)}
    for u, fu in p.flow.items():
        assert pos[u] < pos[fu]
        for w in p.graph.neighbors(fu):
            if w != u:
                assert pos[u] < pos[w]


def test_pattern_round_trip():
    p = grid_pattern(2, 3, [1, 2, 3, 4, 5, 6])
    q = pattern_from_dict(p.to_dict())
    assert (q.flow, q.angles, q.inputs, q.outputs) == (p.flow, p.angles, p.inputs, p.outputs)


def test_line_teleports_plus_state(rng):
    # two Hadamards carry |+> to the end of a three-qubit line
    dist = exact_output_distribution(line_pattern(3, [0, 0, 0]))
    assert dist[(0,)] == pytest.approx(1.0)
    assert all(run_direct(line_pattern(3), rng)[2] == 0 for _ in range(20))


def test_exact_distribution_normalised(rng):
    p = grid_pattern(3, 2, [int(a) for a in rng.integers(0, 8, 6)])
    assert sum(exact_output_distribution(p).values()) == pytest.approx(1.0)


# --- device ------------------------------------------------------------------------


def test_registry_pops_descriptors():
    reg = StateRegistry()
    d = reg.register(QubitState(PLUS, 3))
    assert reg.resolve(d) == QubitState(PLUS, 3)
    with pytest.raises(KeyError):
        reg.resolve(d)


def test_device_trap_outcome_noiseless(rng):
    g = build_path(3)
    reg = StateRegistry()
    dev = SimulatedDevice(g, None, reg.resolve, rng)
    states = [QubitState(BASIS, 1), QubitState(PLUS, 5), QubitState(BASIS, 0)]
    for v, s in enumerate(states):
        dev.prepare(v, reg.register(s))
    dev.entangle(GateOrdering.canonical(g))
    # |1> neighbour flips the trap: measuring at theta + pi returns 0
    assert dev.measure(1, 5 + 4) == 0


def test_device_dense_cap(rng):
    g = build_path(17)
    reg = StateRegistry()
    dev = SimulatedDevice(g, None, reg.resolve, rng)
    for v in g.vertices:
        dev.prepare(v, reg.register(QubitState(PLUS, 0)))
    with pytest.raises(ValueError):
        dev.entangle(GateOrdering.canonical(g))


def test_large_test_rounds_use_frame(rng):
    g = build_cluster_state(12, 12)
    reg = StateRegistry()
    dev = SimulatedDevice(g, uniform_model(g, 0.0), reg.resolve, rng)
    col = greedy_color(g, range(144))
    for v in g.vertices:
        kind = PLUS if col.color_of[v] == 0 else BASIS
        dev.prepare(v, reg.register(QubitState(kind, 0)))
    dev.entangle(GateOrdering.canonical(g))
    traps = [v for v in g.vertices if col.color_of[v] == 0 and all(col.color_of[w] == 1 for w in g.neighbors(v))]
    assert all(dev.measure(t, 0) == 0 for t in traps)


# --- channels ----------------------------------------------------------------------


def test_queue_channel_round_trip():
    a, b = QueueChannel.pair(timeout=1)
    a.send({"type": "prepare", "round": 0})
    assert b.recv() == {"round": 0, "type": "prepare"}
    a.close()
    with pytest.raises(ChannelError):
        b.recv()


def test_tcp_channel_and_state_link():
    listener = Listener()
    box = {}
    t = threading.Thread(target=lambda: box.update(a=listener.accept(), b=listener.accept()))
    t.start()
    msg_ch = connect(*listener.address)
    link_ch = connect(*listener.address)
    t.join()
    try:
        msg_ch.send({"type": "measure", "delta_k": 3})
        assert box["a"].recv() == {"type": "measure", "delta_k": 3}
        reg = StateRegistry()
        service = RegistryService(reg, link_ch).start()
        d = reg.register(QubitState(BASIS, 1))
        assert RemoteResolver(box["b"])(d) == QubitState(BASIS, 1)
    finally:
        for ch in (msg_ch, box["a"], box["b"]):
            ch.close()
        service.stop()
        listener.close()


def test_parse_address():
    assert parse_address("127.0.0.1:7800") == ("127.0.0.1", 7800)
    assert parse_address(":9") == ("127.0.0.1", 9)


# --- full protocol ------------------------------------------------------------------


def test_noiseless_run_accepts():
    res = kite_run(100, 50, 0, seed=5)
    assert res.verdict == ACCEPT and res.failed_tests == 0
    assert all(all(v == 0 for v in r.decrypted.values()) for r in res.server.decrypted)
    assert sum(r.kind == COMPUTATION for r in res.client_records) == 50


def test_server_decryption_matches_client():
    res = kite_run(60, 10, 59 - 10, seed=3, noise=uniform_model(KITE, 0.05))
    client = {r.index: r for r in res.client_records}
    for rec in res.server.decrypted:
        assert rec.decrypted == {t: client[rec.index].decrypted[t] for t in rec.traps}
        # re-encrypting the released outcome gives back the raw bit
        secrets = client[rec.index].secrets
        assert all(encrypt(rec.decrypted[t], secrets[t].r) == rec.outcomes[t] for t in rec.traps)


def test_key_release_isolation():
    res = kite_run(50, 25, 0, seed=8)
    kinds = {r.index: r.kind for r in res.client_records}
    rounds = [e["round"] for e in res.key_payload]
    assert sorted(rounds) == sorted(i for i, k in kinds.items() if k == TEST)
    assert all(kinds[i] == TEST for i in rounds)
    assert {rec.index for rec in res.server.transcript.records if rec.decrypted is not None} == set(rounds)
    for e in res.key_payload:
        assert set(e) == {"round", "traps", "secrets"}


def test_key_release_refused_before_verdict():
    with pytest.raises(ProtocolStateError):
        key_release_payload([], None)
    with pytest.raises(ProtocolStateError):
        release_keys(ServerTranscript(), [])


def test_abort_monotone_on_fixed_transcript():
    res = kite_run(60, 20, 39, seed=2, noise=uniform_model(KITE, 0.08))
    failed = sum(r.failed for r in res.client_records)
    outcomes = [verdict(failed, w) for w in range(40)]
    first_accept = outcomes.index(ACCEPT) if ACCEPT in outcomes else len(outcomes)
    assert all(v == ABORT for v in outcomes[:first_accept])
    assert all(v == ACCEPT for v in outcomes[first_accept:])


def test_z_attack_is_caught():
    res = kite_run(30, 10, 0, seed=1, adversary=ZAttack(0))
    assert res.verdict == ABORT and res.result is None


def test_transports_agree():
    a = kite_run(20, 10, 0, seed=4, noise=uniform_model(KITE, 0.02))
    b = kite_run(20, 10, 0, seed=4, noise=uniform_model(KITE, 0.02), transport="tcp")
    assert a.to_dict() == b.to_dict()


def test_runs_are_deterministic():
    assert kite_run(20, 5, 0, seed=9).to_dict() == kite_run(20, 5, 0, seed=9).to_dict()


def test_deltas_uniform():
    res = kite_run(3000, 1500, 1499, seed=12, noise=uniform_model(KITE, 0.01))
    for kind in (TEST, COMPUTATION):
        for v in KITE.vertices:
            ks = [r.deltas[v] for r in res.client_records if r.kind == kind]
            assert stats.chisquare(np.bincount(ks, minlength=8)).pvalue > 1e-4


def test_computation_rounds_on_large_graph_rejected():
    g = build_path(20)
    with pytest.raises(ValueError):
        run_rvbqc(ProtocolConfig(2, 1, 0), trivial_pattern(g), greedy_color(g))


def test_ubqc_matches_direct_on_small_line():
    p = line_pattern(3, [1, 3, 6])
    freq = delegated_output_counts(p, 3000, seed=6)
    assert total_variation(freq, exact_output_distribution(p)) < 0.04


def test_clifford_deterministic_patterns_exact():
    rng = np.random.default_rng(21)
    found = 0
    while found < 3:
        p = line_pattern(5, clifford_angles(rng, 5))
        dist = exact_output_distribution(p)
        if max(dist.values()) < 1 - 1e-12:
            continue
        found += 1
        expected = max(dist, key=dist.get)
        assert delegated_output_counts(p, 200, seed=found) == {expected: 1.0}


def test_server_failure_surfaces_promptly():
    def broken(device, round_index):
        raise RuntimeError("device fault")

    with pytest.raises(RuntimeError, match="device fault"):
        kite_run(5, 2, 0, seed=0, adversary=broken)
