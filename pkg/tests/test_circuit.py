from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import KITE_FULL, KITE_MINUS_23, KITE_SHORT, random_independent_set, random_instance, zero_based
from vbqc_aces.circuit import (
    GateOrdering,
    bias_from_p_fail,
    derive_seed_sequence,
    exact_trap_bias,
    p_fail_from_bias,
    simulate_test_round_mc,
    simulate_test_round_reference,
    support_set,
)
from vbqc_aces.graphs import Graph, build_cluster_state, build_diamond_kite, build_path, greedy_color
from vbqc_aces.noise import PER_EDGE, PER_QUBIT, lambda_from_p, uniform_edge_model, uniform_model
from vbqc_aces.pauli import PauliOperator, propagate, trap_stabilizer

LAM = lambda_from_p(0.002)
KITE = build_diamond_kite()


def kite_ordering(edges, oid="c"):
    return GateOrdering(zero_based(edges), oid)


def test_kite_short_ordering_bias():
    m = uniform_edge_model(KITE, LAM)
    assert exact_trap_bias(KITE, kite_ordering(KITE_SHORT), m, 0) == pytest.approx(LAM**2, abs=1e-15)
    assert round(LAM**2, 6) == 0.994674


def test_kite_reference_biases():
    m = uniform_edge_model(KITE, LAM)
    full = exact_trap_bias(KITE, kite_ordering(KITE_FULL), m, 0)
    minus = exact_trap_bias(KITE, kite_ordering(KITE_MINUS_23), m, 0)
    assert abs(full - 0.9867376) < 1e-6
    assert abs(minus - 0.9893759) < 1e-6


def test_kite_support_sets():
    s = support_set(KITE, kite_ordering(KITE_FULL), 0, PER_EDGE)
    assert set(s) == set(zero_based(KITE_FULL)) and all(c == 1 for c in s.values())
    assert set(support_set(KITE, kite_ordering(KITE_SHORT), 0, PER_EDGE)) == {(0, 1), (0, 3)}


def test_isolated_vertex_has_empty_support():
    g = Graph(3, [(1, 2)])
    assert support_set(g, GateOrdering.canonical(g), 0) == Counter()


def test_noiseless_bias_is_one_for_every_ordering(rng):
    for _ in range(20):
        g, order, _ = random_instance(rng)
        m = uniform_model(g, 0.0)
        assert all(exact_trap_bias(g, order, m, v) == 1.0 for v in g.vertices)


def test_invalid_ordering_and_vertex():
    g = build_path(3)
    m = uniform_model(g, 0.01)
    with pytest.raises(ValueError):
        exact_trap_bias(g, GateOrdering([(0, 1)]), m, 0)
    with pytest.raises(IndexError):
        exact_trap_bias(g, GateOrdering.canonical(g), m, 5)


@pytest.mark.parametrize(("bias", "p"), [(0.9867376, 0.0066312), (1.0, 0.0), (-1.0, 1.0)])
def test_bias_probability_conversion(bias, p):
    assert p_fail_from_bias(bias) == pytest.approx(p, abs=1e-12)
    assert bias_from_p_fail(p) == pytest.approx(bias, abs=1e-12)


@given(st.floats(-1.0, 1.0))
def test_conversions_are_inverse(b):
    assert bias_from_p_fail(p_fail_from_bias(b)) == pytest.approx(b, abs=1e-15)


@pytest.mark.parametrize("bad", [1.5, -1.1])
def test_conversion_ranges(bad):
    with pytest.raises(ValueError):
        p_fail_from_bias(bad)
    with pytest.raises(ValueError):
        bias_from_p_fail(bad)


def test_noiseless_mc_all_pass():
    g = build_cluster_state(4, 4)
    res = simulate_test_round_mc(g, GateOrdering.canonical(g), uniform_model(g, 0.0), [0, 2, 5], 1000, 3)
    assert all((o == 1).all() and len(o) == 1000 for o in res.trap_outcomes.values())


def test_kite_mc_matches_reference_value():
    m = uniform_model(KITE, 0.002)
    order = kite_ordering(KITE_FULL)
    res = simulate_test_round_mc(KITE, order, m, [0], 10**6, 17)
    expected = p_fail_from_bias(exact_trap_bias(KITE, order, m, 0))
    sigma = np.sqrt(expected * (1 - expected) / 10**6)
    assert abs(res.failures()[0] / 10**6 - expected) < 5 * sigma


def test_grid_color_class_is_accepted():
    g = build_cluster_state(12, 12)
    cls = greedy_color(g, range(144)).classes()[0]
    res = simulate_test_round_mc(g, GateOrdering.canonical(g), uniform_model(g, 0.01), cls, 10, 0)
    assert set(res.trap_outcomes) == set(cls)


def test_adjacent_traps_and_bad_shots_rejected():
    g = build_path(3)
    m = uniform_model(g, 0.01)
    with pytest.raises(ValueError):
        simulate_test_round_mc(g, GateOrdering.canonical(g), m, [0, 1], 10, 0)
    with pytest.raises(ValueError):
        simulate_test_round_mc(g, GateOrdering.canonical(g), m, [0], 0, 0)


def test_mc_rejects_per_edge_models():
    g = build_path(3)
    with pytest.raises(ValueError):
        simulate_test_round_mc(g, GateOrdering.canonical(g), uniform_edge_model(g, 0.99), [0], 10, 0)


def test_mc_is_deterministic_and_matches_reference(rng):
    for _ in range(5):
        g, order, m = random_instance(rng, p_max=0.2)
        traps = random_independent_set(g, rng)
        fast = simulate_test_round_mc(g, order, m, traps, 3000, 99)
        again = simulate_test_round_mc(g, order, m, traps, 3000, 99)
        slow = simulate_test_round_reference(g, order, m, traps, 3000, 99)
        for t in traps:
            assert np.array_equal(fast.trap_outcomes[t], again.trap_outcomes[t])
            assert np.array_equal(fast.trap_outcomes[t], slow.trap_outcomes[t])


def test_seed_streams_differ():
    a = derive_seed_sequence(1, "c0A", 0).generate_state(2)
    b = derive_seed_sequence(1, "c0B", 0).generate_state(2)
    c = derive_seed_sequence(2, "c0A", 0).generate_state(2)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


@given(st.integers(0, 2**32 - 1))
def test_oracle_mc_agreement(seed):
    rng = np.random.default_rng(seed)
    g, order, m = random_instance(rng, p_max=0.15)
    traps = random_independent_set(g, rng)
    shots = 20000
    res = simulate_test_round_mc(g, order, m, traps, shots, seed)
    for t in traps:
        p = p_fail_from_bias(exact_trap_bias(g, order, m, t))
        sigma = max(np.sqrt(p * (1 - p) / shots), 1 / shots)
        assert abs(res.failures()[t] / shots - p) < 6 * sigma


@given(st.integers(0, 2**32 - 1))
def test_stabilizer_cancels_after_full_ordering(seed):
    rng = np.random.default_rng(seed)
    g, order, _ = random_instance(rng)
    for v in g.vertices:
        assert propagate(trap_stabilizer(g, v), order.sequence) == PauliOperator.single(g.vertex_count, v, "X")


@given(st.integers(0, 2**32 - 1))
def test_degree_one_isolation(seed):
    rng = np.random.default_rng(seed)
    g, _, m = random_instance(rng)
    for v in g.vertices:
        if g.degree(v) != 1:
            continue
        e = g.incident_edges(v)[0]
        rest = [f for f in g.edges if f != e]
        order = GateOrdering([e] + [rest[i] for i in rng.permutation(len(rest))])
        assert exact_trap_bias(g, order, m, v) == pytest.approx(m.lam((e, v)), rel=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_support_counts_at_most_once(seed):
    rng = np.random.default_rng(seed)
    g, order, m = random_instance(rng)
    for v in g.vertices:
        s = support_set(g, order, v, PER_QUBIT)
        assert all(c == 1 for c in s.values()) and set(s) <= set(m.keys())
