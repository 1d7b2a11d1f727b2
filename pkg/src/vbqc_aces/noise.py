"""Gate-level depolarizing noise models for CZ circuits.

Two parametrisations are supported. In ``per_qubit`` mode each gate ``e``
is followed by single-qubit depolarizing channels on the qubits of its
support ``nu(e)`` (by default the two endpoints), with eigenvalue
``lambda[(e, u)]`` for qubit ``u``. In ``per_edge`` mode a single effective
eigenvalue ``lambda[e]`` is attached to the gate; it is only used by the exact
oracle, never sampled.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from vbqc_aces.graphs import Edge, Graph, canonical_edge

PER_QUBIT = "per_qubit"
PER_EDGE = "per_edge"
MODES = (PER_QUBIT, PER_EDGE)

# (edge, qubit) in per_qubit mode, edge in per_edge mode
ParamKey = Any


def lambda_from_p(p: float) -> float:
    """Depolarizing eigenvalue ``1 - 4p/3`` of a single-qubit channel with error probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return 1.0 - 4.0 * p / 3.0


def p_from_lambda(lam: float) -> float:
    return 3.0 * (1.0 - lam) / 4.0


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if self.std < 0:
            raise ValueError("std must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    mode: str
    support: Mapping[Edge, tuple[int, ...]]
    lambdas: Mapping[ParamKey, float]
    probs: Mapping[ParamKey, float] | None = None
    seed: int | None = None
    gaussian: GaussianSpec | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        for e, nu in self.support.items():
            if e[0] not in nu or e[1] not in nu:
                raise ValueError(f"support of edge {e} must contain both endpoints")
        for key in self.lambdas:
            e = key[0] if self.mode == PER_QUBIT else key
            if e not in self.support:
                raise ValueError(f"parameter {key} refers to an edge without support")
        for key, lam in self.lambdas.items():
            if not -1.0 / 3.0 - 1e-12 <= lam <= 1.0 + 1e-12:
                raise ValueError(f"eigenvalue {lam} for {key} outside [-1/3, 1]")

    def keys(self) -> list[ParamKey]:
        """Parameter keys in canonical order (edge, then qubit)."""
        return sorted(self.lambdas)

    def gate_support(self, edge: Edge) -> tuple[int, ...]:
        return self.support.get(edge, edge)

    def lam(self, key: ParamKey) -> float:
        return self.lambdas.get(key, 1.0)

    def prob(self, edge: Edge, qubit: int) -> float:
        """Single-qubit error probability of the channel on ``qubit`` after ``edge``."""
        if self.mode != PER_QUBIT:
            raise ValueError("error probabilities only exist in per_qubit mode")
        key = (edge, qubit)
        if self.probs is not None and key in self.probs:
            return self.probs[key]
        return p_from_lambda(self.lambdas.get(key, 1.0))

    def edge_product(self, edge: Edge) -> float:
        """Diagnostic ``prod_u lambda[(edge, u)]`` over the edge's endpoints."""
        if self.mode == PER_EDGE:
            return self.lam(edge)
        return self.lam((edge, edge[0])) * self.lam((edge, edge[1]))

    def to_dict(self) -> dict[str, Any]:
        entries = []
        for key in self.keys():
            if self.mode == PER_QUBIT:
                e, q = key
                entry: dict[str, Any] = {"edge": list(e), "qubit": q}
            else:
                e = key
                entry = {"edge": list(e)}
            if self.probs is not None and key in self.probs:
                entry["p"] = self.probs[key]
            entry["lambda"] = self.lambdas[key]
            entries.append(entry)
        out: dict[str, Any] = {"mode": self.mode, "entries": entries}
        extra = {
            e: [u for u in nu if u not in e]
            for e, nu in self.support.items()
            if len(nu) > 2
        }
        if extra:
            out["crosstalk"] = [{"edge": list(e), "extra": extra[e]} for e in sorted(extra)]
        if self.seed is not None:
            out["seed"] = self.seed
        if self.gaussian is not None:
            out["gaussian"] = {"mean": self.gaussian.mean, "std": self.gaussian.std}
        return out

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def noise_from_dict(data: Mapping[str, Any], graph: Graph | None = None) -> NoiseModel:
    """Inverse of :meth:`NoiseModel.to_dict`.

    Floats survive the JSON round trip exactly (``repr`` based encoding).
    """
    mode = data["mode"]
    support: dict[Edge, tuple[int, ...]] = {}
    if graph is not None:
        support = {e: e for e in graph.edges}
    lambdas: dict[ParamKey, float] = {}
    probs: dict[ParamKey, float] = {}
    for entry in data["entries"]:
        e = canonical_edge(*entry["edge"])
        support.setdefault(e, e)
        key = (e, int(entry["qubit"])) if mode == PER_QUBIT else e
        if "lambda" in entry:
            lambdas[key] = float(entry["lambda"])
        if "p" in entry:
            probs[key] = float(entry["p"])
            if "lambda" not in entry:
                lambdas[key] = lambda_from_p(probs[key])
    for item in data.get("crosstalk", []):
        e = canonical_edge(*item["edge"])
        support[e] = _ordered_support(e, item["extra"])
    gauss = data.get("gaussian")
    return NoiseModel(
        mode=mode,
        support=support,
        lambdas=lambdas,
        probs=probs or None,
        seed=data.get("seed"),
        gaussian=GaussianSpec(gauss["mean"], gauss["std"]) if gauss else None,
    )


def load_noise(path: str | Path, graph: Graph | None = None) -> NoiseModel:
    with open(path) as fh:
        return noise_from_dict(json.load(fh), graph)


def _ordered_support(edge: Edge, extra: Iterable[int]) -> tuple[int, ...]:
    rest = sorted(set(extra) - set(edge))
    return (edge[0], edge[1], *rest)


def _model_from_probs(graph: Graph, probs: dict[ParamKey, float], **kw: Any) -> NoiseModel:
    return NoiseModel(
        mode=PER_QUBIT,
        support={e: e for e in graph.edges},
        lambdas={k: lambda_from_p(p) for k, p in probs.items()},
        probs=probs,
        **kw,
    )


def uniform_model(graph: Graph, p: float) -> NoiseModel:
    """Same depolarizing probability ``p`` on both qubits after every CZ."""
    lambda_from_p(p)
    probs = {(e, u): p for e in graph.edges for u in e}
    return _model_from_probs(graph, probs)


def sample_gaussian_model(graph: Graph, spec: GaussianSpec, seed: int) -> NoiseModel:
    """Independent ``N(mean, std^2)`` draw per (edge, endpoint), clamped to ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    keys = [(e, u) for e in graph.edges for u in e]
    draws = np.clip(rng.normal(spec.mean, spec.std, size=len(keys)), 0.0, 1.0)
    probs = {k: float(p) for k, p in zip(keys, draws)}
    return _model_from_probs(graph, probs, seed=seed, gaussian=spec)


def per_edge_model(graph: Graph, lambdas: Mapping[Edge, float]) -> NoiseModel:
    lam = {canonical_edge(*e): float(v) for e, v in lambdas.items()}
    missing = set(graph.edges) - set(lam)
    if missing:
        raise ValueError(f"missing eigenvalues for edges {sorted(missing)}")
    return NoiseModel(mode=PER_EDGE, support={e: e for e in graph.edges}, lambdas=lam)


def uniform_edge_model(graph: Graph, lam: float) -> NoiseModel:
    return per_edge_model(graph, {e: lam for e in graph.edges})


def crosstalk_model(
    graph: Graph,
    support: Mapping[Edge, Iterable[int]],
    lambdas: Mapping[ParamKey, float],
) -> NoiseModel:
    """Per-qubit model whose gate ``e`` may also noise qubits outside ``e``.

    ``support`` lists ``nu(e)`` for the edges that need more than their
    endpoints; every declared qubit needs an eigenvalue in ``lambdas``.
    Edges absent from ``support`` default to their endpoints.
    """
    sup: dict[Edge, tuple[int, ...]] = {e: e for e in graph.edges}
    declared = set()
    for e, nu in support.items():
        e = canonical_edge(*e)
        if e not in sup:
            raise ValueError(f"{e} is not an edge of the graph")
        nu = set(nu)
        if not set(e) <= nu:
            raise ValueError(f"support of {e} is missing an endpoint")
        for u in nu:
            if not 0 <= u < graph.vertex_count:
                raise ValueError(f"support vertex {u} out of range")
        sup[e] = _ordered_support(e, nu)
        declared.add(e)
    lam: dict[ParamKey, float] = {}
    for (e, u), val in lambdas.items():
        e = canonical_edge(*e)
        if e not in sup or u not in sup[e]:
            raise ValueError(f"eigenvalue given for ({e}, {u}) outside the declared support")
        lam[(e, u)] = float(val)
    for e, nu in sup.items():
        for u in nu:
            if (e, u) not in lam:
                if e in declared:
                    raise ValueError(f"no eigenvalue for declared support entry ({e}, {u})")
                lam[(e, u)] = 1.0
    return NoiseModel(mode=PER_QUBIT, support=sup, lambdas=lam)


def parameter_keys(graph: Graph, mode: str, support: Mapping[Edge, tuple[int, ...]] | None = None) -> list[ParamKey]:
    """All parameter keys of a model on ``graph`` in canonical order."""
    if mode == PER_EDGE:
        return list(graph.edges)
    sup = support or {}
    return [(e, u) for e in graph.edges for u in sorted(sup.get(e, e))]
