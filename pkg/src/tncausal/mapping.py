"""Mappings between causal models and tensor networks.

``cm_to_tn`` forgets edge directions and replaces each mechanism by its Choi
matrix. ``tn_to_cm`` orients the graph and reads each vertex operator back as
a channel, which requires the trace condition ``Tr_out P = I_in / d_in``.
``tn_to_cm_general`` lifts that requirement by giving offending vertices an
ancilla self-loop whose cycle reproduces the operator up to a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .choi import IN, OUT, Superoperator, cj_inv_pure, from_kraus
from .cm import CausalModel, self_cycle
from .errors import FamilyTooLargeError, ZeroOperatorError
from .graphs import (
    P_SEPARATION_EDGE_LIMIT,
    DirectedCausalGraph,
    UndirectedEdge,
    add_self_loops,
    all_directions,
    loop_edge_id,
    orient,
)
from .linalg import HERMITIAN_TOL, partial_trace
from .tn import TensorNetwork, stub_ids

SPECTRAL_CUTOFF = 1e-12
ROTATION_EDGE_LIMIT = P_SEPARATION_EDGE_LIMIT


def directions_of(m: CausalModel) -> dict[str, int]:
    """Direction bits recording the edge orientations of a model's graph."""
    bits = {}
    for e in m.graph.edges:
        bits[e.id] = 0 if e.src <= e.dst else 1
    return bits


def _out_in_stubs(e: UndirectedEdge, bit: int) -> tuple[str, str]:
    """Stub ids carrying the source (out) and target (in) side of an oriented edge."""
    s0, s1 = stub_ids(e)
    return (s0, s1) if bit == 0 else (s1, s0)


def cm_to_tn(m: CausalModel) -> TensorNetwork:
    """Image tensor network: undirected graph, ``P_v`` the Choi matrix of the marginal channel at ``v``."""
    g = m.graph
    ug = g.undirected()
    bits = directions_of(m)
    ops = {}
    for v in g.vertex_ids:
        s = m.channel(v)
        rename = {}
        for e in g.edges:
            if v not in (e.src, e.dst):
                continue
            out_stub, in_stub = _out_in_stubs(ug.edge(e.id), bits[e.id])
            if e.src == v:
                rename[(OUT, e.id)] = out_stub
            if e.dst == v:
                rename[(IN, e.id)] = in_stub
        ops[v] = s.choi_operator().relabeled(rename)
    return TensorNetwork(ug, ops)


@dataclass(frozen=True)
class TraceConditionViolated:
    vertices: tuple[str, ...]
    residuals: Mapping[str, float] = field(default_factory=dict)


def _vertex_choi(tn: TensorNetwork, dg: DirectedCausalGraph, bits: Mapping[str, int], v: str) -> Superoperator:
    """``P_v`` read as a Choi matrix from its in-edges to its out-edges under the orientation."""
    ins = sorted(dg.in_edges(v), key=lambda e: e.id)
    outs = sorted(dg.out_edges(v), key=lambda e: e.id)
    in_stubs, out_stubs = [], []
    for e in ins:
        in_stubs.append(_out_in_stubs(tn.edge(e.id), bits[e.id])[1])
    for e in outs:
        out_stubs.append(_out_in_stubs(tn.edge(e.id), bits[e.id])[0])
    op = tn.vertex_ops[v].permuted(in_stubs + out_stubs)
    return Superoperator(
        tuple((e.id, e.dim) for e in ins), tuple((e.id, e.dim) for e in outs), op.matrix
    )


def trace_residual(s: Superoperator) -> float:
    """``max |Tr_out C - I_in / d_in|``."""
    reduced = partial_trace(s.choi_operator(), [(IN, f) for f in s.in_ids]).matrix
    return float(np.abs(reduced - np.eye(s.d_in) / s.d_in).max(initial=0.0))


def marked_vertices(tn: TensorNetwork, d: Mapping[str, int]) -> frozenset[str]:
    """Vertices whose operator fails the trace condition under the orientation ``d``."""
    dg = orient(tn.graph, d)
    return frozenset(v for v in dg.vertex_ids if trace_residual(_vertex_choi(tn, dg, d, v)) > HERMITIAN_TOL)


def tn_to_cm(tn: TensorNetwork, d: Mapping[str, int]) -> CausalModel | TraceConditionViolated:
    """Causal model with channel ``CJ^-1(P_v)`` at each vertex, if every trace condition holds."""
    dg = orient(tn.graph, d)
    chans, bad = {}, {}
    for v in dg.vertex_ids:
        s = _vertex_choi(tn, dg, d, v)
        res = trace_residual(s)
        if res > HERMITIAN_TOL:
            bad[v] = res
        chans[v] = s
    if bad:
        return TraceConditionViolated(tuple(sorted(bad)), bad)
    return CausalModel(dg, chans)


# ---------------------------------------------------------------------------
# ancilla construction


def _unitary_with_column(t: np.ndarray) -> np.ndarray:
    """Unitary whose first column is the unit vector ``t``."""
    n = t.size
    q, r = np.linalg.qr(np.column_stack([t, np.eye(n, dtype=complex)]))
    q = q[:, :n].copy()
    q[:, 0] *= r[0, 0]
    return q


def _column_isometry(target: np.ndarray, column: int, d_in: int) -> np.ndarray:
    """Isometry ``d_in -> target.size`` sending basis vector ``column`` to ``target``."""
    u = _unitary_with_column(target)
    rest = [c for c in range(1, target.size)][: d_in - 1]
    w = np.zeros((target.size, d_in), dtype=complex)
    w[:, column] = u[:, 0]
    others = [i for i in range(d_in) if i != column]
    for i, c in zip(others, rest):
        w[:, i] = u[:, c]
    return w


def _rotation(a: float) -> np.ndarray:
    s = math.sqrt(max(0.0, 1.0 - a * a))
    return np.array([[a, -s], [s, a]], dtype=complex)


@dataclass(frozen=True)
class AncillaChannel:
    """Isometric channel on ``in ⊗ ancilla -> out ⊗ ancilla`` with ancilla dim ``2 d_in``.

    Cycling the ancilla gives ``rho -> C rho C^dagger / scale`` where ``C`` is the
    operator it was built from.
    """

    kraus: tuple[np.ndarray, ...] = field(repr=False)
    d_in: int
    d_out: int
    scale: float

    @property
    def d_anc(self) -> int:
        return 2 * self.d_in


def operator_isometry(c: np.ndarray) -> AncillaChannel:
    """Ancilla dilation of a nonzero operator ``c`` (``d_out x d_in``).

    Columns ``c|i> = n_i |psi_i>`` are rescaled to ``a_i = n_i / max n``. The
    isometry swaps the input into the ancilla register ``S1``, then controlled on
    ``S1 = i`` applies ``W_i`` (``|i> -> |psi_i>|0>_pad``) to the swapped-in
    register and a rotation with trace ``2 a_i`` to the qubit ancilla. The
    padding register, needed when ``d_out < d_in``, is traced out.
    """
    c = np.asarray(c, dtype=complex)
    d_out, d_in = c.shape
    norms = np.linalg.norm(c, axis=0)
    top = float(norms.max(initial=0.0))
    if top <= SPECTRAL_CUTOFF:
        raise ZeroOperatorError("operator is zero")
    pad = max(1, -(-d_in // d_out))
    big = d_out * pad
    v = np.zeros((d_out, pad, d_in, 2, d_in, d_in, 2), dtype=complex)
    for i in range(d_in):
        a = norms[i] / top
        target = np.zeros(big, dtype=complex)
        if norms[i] > SPECTRAL_CUTOFF * top:
            psi = c[:, i] / norms[i]
        else:
            psi = np.eye(d_out)[0]
            a = 0.0
        target.reshape(d_out, pad)[:, 0] = psi
        w = _column_isometry(target, i, d_in).reshape(d_out, pad, d_in)
        rot = _rotation(a)
        # out index (o, p, s1, q'), in index (s, k, q): delta(s1, s) W_s[(o, p), k] rot_s[q', q]
        v[:, :, i, :, i, :, :] = np.einsum("opk,xq->opxkq", w, rot)
    kraus = tuple(
        v[:, p].reshape(d_out * 2 * d_in, d_in * d_in * 2) for p in range(pad)
    )
    return AncillaChannel(kraus, d_in, d_out, (top / 2) ** 2)


def channel_from_operator(c: np.ndarray, in_factors=None, out_factors=None, ancilla: str = "ancilla") -> tuple[Superoperator, float]:
    """CPTP channel whose ancilla cycle equals ``rho -> C rho C^dagger / alpha``.

    Returns the channel on ``(in..., ancilla) -> (out..., ancilla)`` and ``alpha``.
    """
    iso = operator_isometry(c)
    ins = tuple(in_factors) if in_factors is not None else ((IN, iso.d_in),)
    outs = tuple(out_factors) if out_factors is not None else ((OUT, iso.d_out),)
    anc = (ancilla, iso.d_anc)
    chan = from_kraus(list(iso.kraus), ins + (anc,), outs + (anc,))
    return chan, iso.scale


@dataclass(frozen=True)
class VertexDilation:
    channel: Superoperator
    alpha: float
    gamma: float
    n_terms: int


def dilate_vertex(s: Superoperator, ancilla: str) -> VertexDilation:
    """Ancilla channel for a PSD Choi operator violating the trace condition.

    With ``P = sum_k p_k |Psi_k><Psi_k|``, ``C_k`` the pure inverse of ``Psi_k`` and
    ``s_k`` the cycle scale of its dilation, the channel mixes the dilations with
    weights ``p_k s_k / gamma`` where ``gamma = sum_k p_k s_k``. Its ancilla cycle
    is ``CJ^-1(P) / alpha`` with ``alpha = d_in^2 gamma``.
    """
    d_in, d_out = s.d_in, s.d_out
    herm = (s.choi + s.choi.conj().T) / 2
    vals, vecs = np.linalg.eigh(herm)
    scale = float(np.abs(vals).max(initial=0.0))
    if scale <= SPECTRAL_CUTOFF:
        raise ZeroOperatorError("vertex operator is zero")
    terms = []
    for val, vec in zip(vals[::-1], vecs.T[::-1]):
        if val <= SPECTRAL_CUTOFF * scale:
            continue
        c = cj_inv_pure(vec, d_in, d_out)
        iso = operator_isometry(c)
        terms.append((float(val), iso))
    gamma = sum(p * iso.scale for p, iso in terms)
    anc = (ancilla, 2 * d_in)
    kraus = []
    for p, iso in terms:
        w = math.sqrt(p * iso.scale / gamma)
        kraus += [w * k for k in iso.kraus]
    in_f = s.in_factors + (anc,)
    out_f = s.out_factors + (anc,)
    # Kraus operators act on the composite of the in factors, then the ancilla
    chan = from_kraus(kraus, in_f, out_f)
    return VertexDilation(chan, d_in * d_in * gamma, gamma, len(terms))


@dataclass(frozen=True)
class GeneralizedMapResult:
    model: CausalModel
    alphas: Mapping[str, float]
    marked: frozenset[str]
    directions: Mapping[str, int] = field(default_factory=dict)

    @property
    def alpha_product(self) -> float:
        return math.prod(self.alphas.values())

    def contraction_from_cycle(self, cycle: float, d_edges: int) -> float:
        """``<L|rho_P|L>`` predicted from the augmented model's full cycle."""
        return self.alpha_product * cycle / d_edges


def tn_to_cm_general(tn: TensorNetwork, d: Mapping[str, int]) -> GeneralizedMapResult:
    """Map any PSD network by giving trace-violating vertices an ancilla self-loop."""
    dg = orient(tn.graph, d)
    chans, alphas, marked = {}, {}, set()
    for v in dg.vertex_ids:
        s = _vertex_choi(tn, dg, d, v)
        if trace_residual(s) <= HERMITIAN_TOL:
            chans[v] = s
            alphas[v] = 1.0
            continue
        dil = dilate_vertex(s, loop_edge_id(v))
        chans[v] = dil.channel
        alphas[v] = dil.alpha
        marked.add(v)
    dims = {v: 2 * _vertex_choi(tn, dg, d, v).d_in for v in marked}
    graph = add_self_loops(dg, marked, dims)
    return GeneralizedMapResult(CausalModel(graph, chans), alphas, frozenset(marked), dict(d))


def ancilla_residual(result: GeneralizedMapResult, tn: TensorNetwork, v: str) -> float:
    """``max |cycle_ancilla(channel_v) - CJ^-1(P_v) / alpha_v|`` at the Choi level."""
    if v not in result.marked:
        return 0.0
    dg = orient(tn.graph, result.directions)
    target = _vertex_choi(tn, dg, result.directions, v)
    loop = loop_edge_id(v)
    cycled = self_cycle(result.model.mechanisms[v], [(loop, loop)])
    cycled = cycled.reordered(target.in_ids, target.out_ids)
    return float(np.abs(cycled.choi - target.choi / result.alphas[v]).max())


def rotation_family(
    tn: TensorNetwork, limit: int = ROTATION_EDGE_LIMIT
) -> Iterator[tuple[dict[str, int], GeneralizedMapResult]]:
    """Generalized mappings for every direction string."""
    if len(tn.edges) > limit:
        raise FamilyTooLargeError(f"{len(tn.edges)} edges exceed the rotation limit {limit}")
    for bits in all_directions(tn.graph.edge_ids):
        yield bits, tn_to_cm_general(tn, bits)
