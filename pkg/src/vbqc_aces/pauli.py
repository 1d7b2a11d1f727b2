"""Phase-free Pauli strings as X/Z bit masks, and their propagation through CZ."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from vbqc_aces.graphs import Graph


@dataclass(frozen=True)
class PauliOperator:
    """n-qubit Pauli string without phase.

    Bit ``q`` of ``x_mask`` (``z_mask``) is set when qubit ``q`` carries an X
    (Z) component; both set means Y.
    """

    n: int
    x_mask: int = 0
    z_mask: int = 0

    def __post_init__(self) -> None:
        limit = 1 << self.n
        if self.n < 0 or not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ValueError("mask wider than qubit count")

    @classmethod
    def identity(cls, n: int) -> PauliOperator:
        return cls(n)

    @classmethod
    def single(cls, n: int, qubit: int, kind: str) -> PauliOperator:
        """Single-qubit Pauli ``kind`` in ``{"I", "X", "Y", "Z"}`` on ``qubit``."""
        _check_qubit(n, qubit)
        bit = 1 << qubit
        x = bit if kind in ("X", "Y") else 0
        z = bit if kind in ("Z", "Y") else 0
        if kind not in ("I", "X", "Y", "Z"):
            raise ValueError(f"unknown Pauli {kind!r}")
        return cls(n, x, z)

    @classmethod
    def from_terms(cls, n: int, xs: Iterable[int] = (), zs: Iterable[int] = ()) -> PauliOperator:
        x = z = 0
        for q in xs:
            _check_qubit(n, q)
            x ^= 1 << q
        for q in zs:
            _check_qubit(n, q)
            z ^= 1 << q
        return cls(n, x, z)

    def __mul__(self, other: PauliOperator) -> PauliOperator:
        if other.n != self.n:
            raise ValueError("qubit count mismatch")
        return PauliOperator(self.n, self.x_mask ^ other.x_mask, self.z_mask ^ other.z_mask)

    @property
    def support_mask(self) -> int:
        return self.x_mask | self.z_mask

    def acts_on(self, qubit: int) -> bool:
        return bool((self.support_mask >> qubit) & 1)

    def support(self) -> list[int]:
        m = self.support_mask
        return [q for q in range(self.n) if (m >> q) & 1]

    def is_identity(self) -> bool:
        return self.support_mask == 0

    def kind(self, qubit: int) -> str:
        x = (self.x_mask >> qubit) & 1
        z = (self.z_mask >> qubit) & 1
        return "IZXY"[2 * x + z]

    def to_label(self, base: int = 0) -> str:
        """Render as e.g. ``"X1 Z2 Z4"``; ``base`` shifts the printed indices."""
        terms = [f"{self.kind(q)}{q + base}" for q in self.support()]
        return " ".join(terms) if terms else "I"

    def __str__(self) -> str:
        return self.to_label()


def _check_qubit(n: int, q: int) -> None:
    if not 0 <= q < n:
        raise IndexError(f"qubit {q} out of range for {n} qubits")


def conjugate_through_cz(p: PauliOperator, edge: tuple[int, int]) -> PauliOperator:
    """``CZ_e p CZ_e`` up to phase: an X on one end picks up a Z on the other."""
    u, v = edge
    _check_qubit(p.n, u)
    _check_qubit(p.n, v)
    if u == v:
        raise ValueError("CZ needs two distinct qubits")
    z = p.z_mask
    if (p.x_mask >> u) & 1:
        z ^= 1 << v
    if (p.x_mask >> v) & 1:
        z ^= 1 << u
    if z == p.z_mask:
        return p
    return PauliOperator(p.n, p.x_mask, z)


def propagate(p: PauliOperator, edges: Iterable[tuple[int, int]]) -> PauliOperator:
    for e in edges:
        p = conjugate_through_cz(p, e)
    return p


def trap_stabilizer(graph: Graph, v: int) -> PauliOperator:
    """X on ``v`` and Z on each neighbour of ``v``."""
    _check_qubit(graph.vertex_count, v)
    return PauliOperator.from_terms(graph.vertex_count, xs=[v], zs=graph.neighbors(v))


def anticommutes_with_x(p: PauliOperator, v: int) -> bool:
    """True when ``p`` flips an X measurement on ``v`` (Z or Y there)."""
    _check_qubit(p.n, v)
    return bool((p.z_mask >> v) & 1)
