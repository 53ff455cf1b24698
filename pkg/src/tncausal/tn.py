"""Tensor networks of PSD vertex operators and their contraction.

Every vertex operator acts on one factor per incident edge stub. A non-loop
edge ``e`` contributes the factor ``e`` to both endpoints; a self-loop ``e``
contributes ``e`` and ``e'`` to its vertex. Slot 0 of an edge is the stub at
the lexicographically smaller endpoint (``e`` for loops), slot 1 the other.

Contraction never builds the doubled-space state. Each operator becomes a
node with a ket and a bra leg per stub, edges join ket to ket and bra to bra,
and inserted operators or instruments are extra nodes spliced into edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotPSDError,
    UnknownFactorError,
    ValidationError,
)
from .graphs import UndirectedEdge, UndirectedMultigraph
from .linalg import (
    HERMITIAN_TOL,
    ContractionPlan,
    DenseTensor,
    Factor,
    SquareOperator,
    contract_network,
    embed_operator,
    max_entangled,
    network_labels,
    plan_contraction_order,
)

LOOP_SUFFIX = "'"


def stub_ids(edge: UndirectedEdge) -> tuple[str, str]:
    """Factor ids of the slot-0 and slot-1 stubs of ``edge``."""
    if edge.is_loop:
        return edge.id, edge.id + LOOP_SUFFIX
    return edge.id, edge.id


def stub_vertices(edge: UndirectedEdge) -> tuple[str, str]:
    return edge.u, edge.w


def vertex_factors(graph: UndirectedMultigraph, v: str) -> tuple[Factor, ...]:
    """Canonical (sorted) factor list of the operator at ``v``."""
    out = []
    for e in graph.incident(v):
        s0, s1 = stub_ids(e)
        out.append((s0, e.dim))
        if e.is_loop:
            out.append((s1, e.dim))
    return tuple(sorted(out, key=lambda f: f[0]))


@dataclass(frozen=True)
class TensorNetwork:
    graph: UndirectedMultigraph
    vertex_ops: Mapping[str, SquareOperator] = field(repr=False)

    def __post_init__(self) -> None:
        ids = set(self.graph.edge_ids)
        for e in self.graph.edges:
            if e.is_loop and e.id + LOOP_SUFFIX in ids:
                raise ValidationError(f"edge id {e.id + LOOP_SUFFIX!r} clashes with the loop stub of {e.id!r}")
        missing = set(self.graph.vertices) - set(self.vertex_ops)
        extra = set(self.vertex_ops) - set(self.graph.vertices)
        if missing or extra:
            raise UnknownFactorError(f"operators missing for {sorted(missing)}, unknown vertices {sorted(extra)}")
        ops = {}
        for v in self.graph.vertices:
            op = self.vertex_ops[v]
            want = vertex_factors(self.graph, v)
            if sorted(map(str, op.ids)) != [f for f, _ in want]:
                raise UnknownFactorError(f"operator at {v!r} has factors {op.ids}, expected {[f for f, _ in want]}")
            op = op.permuted([f for f, _ in want])
            if op.factors != want:
                raise DimensionMismatchError(f"operator at {v!r} has dims {op.dims}, edges need {[d for _, d in want]}")
            if not op.is_psd():
                raise NotPSDError(f"operator at {v!r} is not PSD within {HERMITIAN_TOL}")
            ops[v] = op
        object.__setattr__(self, "vertex_ops", ops)

    @property
    def edges(self) -> tuple[UndirectedEdge, ...]:
        return self.graph.edges

    def edge(self, edge_id: str) -> UndirectedEdge:
        return self.graph.edge(edge_id)

    def with_op(self, v: str, op: SquareOperator) -> "TensorNetwork":
        ops = dict(self.vertex_ops)
        ops[v] = op
        return TensorNetwork(self.graph, ops)


def embed_tensor(coeffs: DenseTensor) -> SquareOperator:
    """Rank-one operator ``|psi><psi|`` of a coefficient tensor."""
    vec = coeffs.vector()
    return SquareOperator(coeffs.axes, np.outer(vec, vec.conj()))


def doubled_factor(stub: str, vertex: str) -> tuple[str, str]:
    return (stub, vertex)


def link_state(tn: TensorNetwork) -> DenseTensor:
    """Unnormalized maximally entangled pair on the two copies of every edge."""
    axes: list[Factor] = []
    data = np.ones((), dtype=complex)
    for e in tn.edges:
        s0, s1 = stub_ids(e)
        axes += [(doubled_factor(s0, e.u), e.dim), (doubled_factor(s1, e.w), e.dim)]
        pair = max_entangled(e.dim, normalized=False).data.reshape(e.dim, e.dim)
        data = np.multiply.outer(data, pair)
    t = DenseTensor(tuple(axes), data)
    return t.transposed(sorted(t.ids))


def total_state(tn: TensorNetwork) -> SquareOperator:
    """Tensor product of the vertex operators on the sorted doubled space."""
    factors: list[Factor] = []
    data = np.ones((), dtype=complex)
    for v in tn.graph.vertices:
        op = tn.vertex_ops[v]
        n = len(op.factors)
        factors += [(doubled_factor(f, v), d) for f, d in op.factors]
        t = op.tensor()
        data = np.multiply.outer(data, t)
    # data axes: (ket_v1, bra_v1, ket_v2, bra_v2, ...) grouped per vertex
    kets, bras, pos = [], [], 0
    for v in tn.graph.vertices:
        n = len(tn.vertex_ops[v].factors)
        kets += list(range(pos, pos + n))
        bras += list(range(pos + n, pos + 2 * n))
        pos += 2 * n
    side = math.prod(d for _, d in factors)
    matrix = np.transpose(data, kets + bras).reshape(side, side)
    return SquareOperator(tuple(factors), matrix).canonical()


# ---------------------------------------------------------------------------
# doubled-network engine


@dataclass(frozen=True)
class DoubledNode:
    """An operator with one ket and one bra axis per leg, plus free outcome axes.

    ``data`` has shape ``outcome dims + leg dims + leg dims``.
    """

    legs: tuple[Factor, ...]
    data: np.ndarray = field(repr=False)
    outcomes: tuple[Factor, ...] = ()

    def tensor(self) -> DenseTensor:
        axes = (
            tuple(self.outcomes)
            + tuple((("k", leg), d) for leg, d in self.legs)
            + tuple((("b", leg), d) for leg, d in self.legs)
        )
        return DenseTensor(axes, self.data)


Port = tuple[Hashable, Hashable]


@dataclass(frozen=True)
class DoubledNetwork:
    nodes: Mapping[Hashable, DoubledNode]
    links: tuple[tuple[Port, Port], ...]

    def splice(self, key: Hashable, ports: Sequence[tuple[Port, Port]], transfer: np.ndarray,
               outcomes: Sequence[Factor] = ()) -> "DoubledNetwork":
        """Insert a transfer node on existing links.

        ``ports[i] = (placed, other)`` names the link to cut; the node's copy
        leg attaches to ``placed`` and its link leg to ``other``. ``transfer``
        has shape ``outcome dims + (D, D, D, D)`` indexed ``[k, m, l, m']`` with
        ``k, l`` on the link side and ``m, m'`` on the copy side.
        """
        if key in self.nodes:
            raise ValidationError(f"node key {key!r} already used")
        links = list(self.links)
        dims = []
        for i, (placed, other) in enumerate(ports):
            pair = (placed, other) if (placed, other) in links else (other, placed)
            if pair not in links:
                raise UnknownFactorError(f"no link between {placed} and {other}")
            links.remove(pair)
            links.append((placed, (key, ("copy", i))))
            links.append(((key, ("link", i)), other))
            dims.append(self._leg_dim(placed))
        n_out = len(outcomes)
        big = math.prod(dims)
        transfer = np.asarray(transfer, dtype=complex)
        if transfer.shape[n_out:] != (big, big, big, big):
            raise DimensionMismatchError(f"transfer shape {transfer.shape} does not fit links of dims {dims}")
        legs = tuple((("link", i), d) for i, d in enumerate(dims)) + tuple(
            (("copy", i), d) for i, d in enumerate(dims)
        )
        data = transfer.reshape(transfer.shape[:n_out] + tuple(dims) * 4)
        nodes = dict(self.nodes)
        nodes[key] = DoubledNode(legs, data, tuple(outcomes))
        return DoubledNetwork(nodes, tuple(links))

    def _leg_dim(self, port: Port) -> int:
        node, leg = port
        return dict(self.nodes[node].legs)[leg]

    def _tensors(self) -> tuple[list[DenseTensor], list]:
        keys = list(self.nodes)
        index = {k: i for i, k in enumerate(keys)}
        tensors = [self.nodes[k].tensor() for k in keys]
        pairings = []
        for (na, la), (nb, lb) in self.links:
            for side in ("k", "b"):
                pairings.append(((index[na], (side, la)), (index[nb], (side, lb))))
        return tensors, pairings

    def plan(self) -> ContractionPlan:
        """Contraction order used by :meth:`contract`, with its cost and largest intermediate."""
        tensors, pairings = self._tensors()
        labels, dims, free = network_labels(tensors, pairings)
        return plan_contraction_order([(i, labs) for i, labs in enumerate(labels)], dims, open_edges=free)

    def contract(self) -> DenseTensor:
        """Sum over every ket and bra index; free axes are the outcome axes."""
        tensors, pairings = self._tensors()
        return contract_network(tensors, pairings)


def _operator_node(op: SquareOperator) -> DoubledNode:
    return DoubledNode(op.factors, op.tensor())


def doubled_network(tn: TensorNetwork) -> DoubledNetwork:
    nodes = {v: _operator_node(tn.vertex_ops[v]) for v in tn.graph.vertices}
    links = []
    for e in tn.edges:
        s0, s1 = stub_ids(e)
        links.append(((e.u, s0), (e.w, s1)))
    return DoubledNetwork(nodes, tuple(links))


def edge_ports(tn: TensorNetwork, edge_id: str, slot: int = 0) -> tuple[Port, Port]:
    """``(placed, other)`` ports of an edge with the operator on copy ``slot``."""
    e = tn.edge(edge_id)
    s0, s1 = stub_ids(e)
    ports = ((e.u, s0), (e.w, s1))
    if slot not in (0, 1):
        raise ValidationError("slot must be 0 or 1")
    return (ports[0], ports[1]) if slot == 0 else (ports[1], ports[0])


def pair_transfer(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Transfer tensor of ``<L| q1 . q2 |L>`` insertions: ``q1[k, m] q2[m', l]``."""
    q1 = np.asarray(q1, dtype=complex)
    q2 = np.asarray(q2, dtype=complex)
    return np.einsum("km,nl->kmln", q1, q2)


def kraus_transfer(kraus: Iterable[np.ndarray]) -> np.ndarray:
    """Transfer tensor of the CP map ``X -> sum K X K^dagger`` on the copy side."""
    out = None
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        t = pair_transfer(k, k.conj().T)
        out = t if out is None else out + t
    if out is None:
        raise ValidationError("empty Kraus family")
    return out


def instrument_transfer(elements: Sequence[Sequence[np.ndarray]]) -> np.ndarray:
    """Stack of per-outcome Kraus transfers with the outcome axis first."""
    return np.stack([kraus_transfer(ks) for ks in elements])


def contract(tn: TensorNetwork) -> float:
    """``<L| rho_P |L>``."""
    value = complex(doubled_network(tn).contract().data)
    scale = max(1.0, abs(value))
    if abs(value.imag) > 1e-10 * scale:
        raise ValidationError(f"contraction has imaginary part {value.imag}")
    return value.real


def correlation(
    tn: TensorNetwork,
    q1: SquareOperator,
    q2: SquareOperator,
    placement: Mapping[str, int] | None = None,
) -> complex:
    """``<L| Q1 rho_P Q2 |L>`` with the operators on the chosen copies.

    Operator factors are edge ids. ``placement[e]`` selects the slot of the
    copy carrying the operator on edge ``e`` (default slot 0).
    """
    for f in set(q1.ids) | set(q2.ids):
        tn.edge(str(f))
    edges = sorted({str(f) for f in q1.ids} | {str(f) for f in q2.ids})
    factors = tuple((e, tn.edge(e).dim) for e in edges)
    a = embed_operator(q1, factors).matrix
    b = embed_operator(q2, factors).matrix
    placement = placement or {}
    ports = [edge_ports(tn, e, placement.get(e, 0)) for e in edges]
    net = doubled_network(tn)
    if ports:
        net = net.splice("insert", ports, pair_transfer(a, b))
    return complex(net.contract().data)


def insertion_network(
    tn: TensorNetwork,
    insertions: Sequence[tuple[str, Sequence[str], np.ndarray, Sequence[Factor]]],
    placement: Mapping[str, int] | None = None,
) -> DoubledNetwork:
    """Doubled network with transfer nodes ``(key, edges, transfer, outcomes)`` spliced in."""
    placement = placement or {}
    net = doubled_network(tn)
    for key, edges, transfer, outcomes in insertions:
        ports = [edge_ports(tn, e, placement.get(e, 0)) for e in edges]
        net = net.splice(key, ports, transfer, outcomes)
    return net
