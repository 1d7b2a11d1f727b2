import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import graphs
from vbqc_aces.graphs import build_cluster_state, build_diamond_kite, Graph
from vbqc_aces.pauli import (
    PauliOperator,
    anticommutes_with_x,
    conjugate_through_cz,
    propagate,
    trap_stabilizer,
)


@st.composite
def paulis(draw, n=6):
    return PauliOperator(n, draw(st.integers(0, 2**n - 1)), draw(st.integers(0, 2**n - 1)))


def test_x_spreads_z_to_partner():
    p = conjugate_through_cz(PauliOperator.single(6, 4, "X"), (4, 5))
    assert p.to_label() == "X4 Z5"


def test_z_stays_local():
    p = PauliOperator.single(6, 4, "Z")
    assert conjugate_through_cz(p, (4, 5)) == p


def test_identity_is_fixed():
    assert conjugate_through_cz(PauliOperator.identity(3), (0, 2)).is_identity()


def test_y_picks_up_z_on_partner():
    p = conjugate_through_cz(PauliOperator.single(2, 0, "Y"), (0, 1))
    assert p.kind(0) == "Y" and p.kind(1) == "Z"


@pytest.mark.parametrize("edge", [(0, 6), (-1, 2), (3, 3)])
def test_bad_edges(edge):
    with pytest.raises((IndexError, ValueError)):
        conjugate_through_cz(PauliOperator.identity(6), edge)


def test_kite_trap_stabilizer_label():
    k1 = trap_stabilizer(build_diamond_kite(), 0)
    assert k1.to_label(base=1) == "X1 Z2 Z4"


def test_isolated_and_interior_stabilizers():
    assert trap_stabilizer(Graph(3, [(1, 2)]), 0).to_label() == "X0"
    g = build_cluster_state(12, 12)
    p = trap_stabilizer(g, 5 * 12 + 5)
    assert bin(p.x_mask).count("1") == 1 and bin(p.z_mask).count("1") == 4


def test_anticommutation_examples():
    assert anticommutes_with_x(PauliOperator.single(3, 1, "Z"), 1)
    assert anticommutes_with_x(PauliOperator.single(3, 1, "Y"), 1)
    assert not anticommutes_with_x(PauliOperator.single(3, 1, "X"), 1)
    assert not anticommutes_with_x(PauliOperator.identity(3), 1)


def test_rendering():
    assert str(PauliOperator.identity(4)) == "I"
    assert PauliOperator.from_terms(4, xs=[2], zs=[0, 2]).to_label() == "Z0 Y2"


def test_wide_masks():
    p = PauliOperator.single(4096, 4095, "X")
    q = conjugate_through_cz(p, (4095, 0))
    assert q.kind(0) == "Z" and q.kind(4095) == "X"


@given(paulis(), st.sampled_from([(0, 1), (2, 5), (3, 4), (1, 5)]))
def test_conjugation_is_an_involution(p, e):
    assert conjugate_through_cz(conjugate_through_cz(p, e), e) == p


@given(paulis(), st.sampled_from([((0, 1), (2, 3)), ((0, 5), (1, 4)), ((2, 4), (3, 5))]))
def test_disjoint_conjugations_commute(p, pair):
    e, f = pair
    assert propagate(p, [e, f]) == propagate(p, [f, e])


@given(graphs(max_vertices=10), st.randoms(use_true_random=False), st.data())
def test_graph_circuit_maps_stabilizer_to_bare_x(g, r, data):
    v = data.draw(st.integers(0, g.vertex_count - 1))
    order = list(g.edges)
    r.shuffle(order)
    out = propagate(trap_stabilizer(g, v), order)
    assert out == PauliOperator.single(g.vertex_count, v, "X")


@given(paulis(), paulis())
def test_product_is_xor(p, q):
    r = p * q
    assert r.x_mask == p.x_mask ^ q.x_mask and r.z_mask == p.z_mask ^ q.z_mask
