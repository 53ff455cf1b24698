"""Perfect tensors, hexagonal holographic patches and influence experiments on them.

A patch is a ket network of six-leg perfect tensors: a centre ``a``, a ring
``b.1 .. b.6`` joined to ``a`` by spokes, and an outer ring ``c.1 .. c.6`` where
``c.k`` bridges ``b.k`` and ``b.(k+1)``. Open legs are traced against the bra
copy, so the tensor network used for contraction carries, at each tensor,
``P_v = Tr_open |psi_v><psi_v|`` on its bulk legs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .choi import Superoperator, from_kraus
from .cm import Detected, NotDetected
from .errors import (
    DimensionMismatchError,
    NotIsometryError,
    OddLegCountError,
    RegionOnBoundaryError,
    ValidationError,
)
from .graphs import (
    UndirectedEdge,
    UndirectedMultigraph,
    add_self_loops,
    d_separated,
    intervention_graph,
    intervention_vertex,
    orient,
    p_separated,
    setting_vertex,
)
from .influence import RegionPair, detect_influence
from .interventions import SamplerConfig
from .linalg import DenseTensor, SquareOperator
from .mapping import marked_vertices
from .tn import TensorNetwork, contract, doubled_network

PERFECT_TOL = 1e-12
ISOMETRY_TOL = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _pauli_string(word: str) -> np.ndarray:
    mats = {"I": np.eye(2, dtype=complex), "X": PAULI_X, "Z": PAULI_Z, "Y": 1j * PAULI_X @ PAULI_Z}
    out = np.ones((1, 1), dtype=complex)
    for ch in word:
        out = np.kron(out, mats[ch])
    return out


FIVE_QUBIT_STABILIZERS = ("XZZXI", "IXZZX", "XIXZZ", "ZXIXZ")


def five_qubit_code_states() -> np.ndarray:
    """Logical ``|0_L>`` and ``|1_L>`` of the five-qubit code as columns (32 x 2)."""
    proj = np.eye(32, dtype=complex)
    for word in FIVE_QUBIT_STABILIZERS:
        proj = proj @ (np.eye(32) + _pauli_string(word)) / 2
    zero = proj[:, 0] / np.linalg.norm(proj[:, 0])
    one = _pauli_string("XXXXX") @ zero
    return np.column_stack([zero, one])


def six_leg_perfect_tensor() -> DenseTensor:
    """Normalized state ``(|0>|0_L> + |1>|1_L>) / sqrt 2`` with the logical leg first."""
    enc = five_qubit_code_states()
    data = (enc.T / math.sqrt(2)).reshape((2,) * 6)
    return DenseTensor(tuple((f"leg{i}", 2) for i in range(6)), data)


@dataclass(frozen=True)
class BipartitionResult:
    legs: tuple[int, ...]
    residual: float
    constant: float


@dataclass(frozen=True)
class PerfectTensorReport:
    n_legs: int
    results: tuple[BipartitionResult, ...]

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.results)

    def perfect(self, tol: float = PERFECT_TOL) -> bool:
        return all(r.residual <= tol and r.constant > tol for r in self.results)


def bipartition_matrix(t: DenseTensor, legs: Sequence[int]) -> np.ndarray:
    """``t`` as a map from the legs in ``legs`` to the remaining legs."""
    n = len(t.axes)
    rest = [i for i in range(n) if i not in legs]
    data = np.transpose(np.asarray(t.data), rest + list(legs))
    d_in = math.prod(t.axes[i][1] for i in legs)
    return data.reshape(-1, d_in)


def check_perfect(t: DenseTensor) -> PerfectTensorReport:
    """Test ``V^dagger V = c I`` for every leg subset of size at most half."""
    n_legs = len(t.axes)
    if n_legs % 2:
        raise OddLegCountError(f"perfect tensors need an even leg count, got {n_legs}")
    if len({d for _, d in t.axes}) > 1:
        raise DimensionMismatchError("all legs must share one dimension")
    results = []
    for size in range(1, n_legs // 2 + 1):
        for legs in itertools.combinations(range(n_legs), size):
            v = bipartition_matrix(t, legs)
            gram = v.conj().T @ v
            c = float(np.trace(gram).real / gram.shape[0])
            residual = float(np.abs(gram - c * np.eye(gram.shape[0])).max())
            results.append(BipartitionResult(legs, residual, c))
    return PerfectTensorReport(n_legs, tuple(results))


def _isometry(t: DenseTensor, legs: Sequence[int]) -> tuple[np.ndarray, float]:
    v = bipartition_matrix(t, legs)
    gram = v.conj().T @ v
    c = float(np.trace(gram).real / gram.shape[0])
    if c <= 0 or np.abs(gram - c * np.eye(gram.shape[0])).max() > ISOMETRY_TOL * max(1.0, c):
        raise NotIsometryError(f"legs {tuple(legs)} do not give a proportional isometry")
    return v, c


def isometry_channel(t: DenseTensor, legs: Sequence[int]) -> Superoperator:
    """Trace-preserving channel ``rho -> V rho V^dagger / c`` from ``legs`` to the other legs."""
    legs = list(legs)
    if len(legs) > len(t.axes) // 2:
        raise ValidationError("input side may hold at most half of the legs")
    v, c = _isometry(t, legs)
    rest = [i for i in range(len(t.axes)) if i not in legs]
    ins = tuple(t.axes[i] for i in legs)
    outs = tuple(t.axes[i] for i in rest)
    return from_kraus([v / math.sqrt(c)], ins, outs)


def push_operator(v: np.ndarray, o: np.ndarray) -> np.ndarray:
    """``V O V^dagger / c`` for ``V^dagger V = c I``, so that ``V O = O' V``."""
    v = np.asarray(v, dtype=complex)
    o = np.asarray(o, dtype=complex)
    gram = v.conj().T @ v
    c = float(np.trace(gram).real / gram.shape[0])
    if c <= 0 or np.abs(gram - c * np.eye(gram.shape[0])).max() > ISOMETRY_TOL * max(1.0, c):
        raise NotIsometryError("operator is not proportional to an isometry")
    if o.shape != (v.shape[1], v.shape[1]):
        raise DimensionMismatchError("operator does not act on the isometry's input")
    return v @ o @ v.conj().T / c


# ---------------------------------------------------------------------------
# hexagonal patch

RING = 6
CENTRE = "a"


def b_name(k: int) -> str:
    return f"b.{(k - 1) % RING + 1}"


def c_name(k: int) -> str:
    return f"c.{(k - 1) % RING + 1}"


def bulk_edge_id(u: str, w: str) -> str:
    u, w = sorted((u, w))
    return f"{u}-{w}"


def open_leg_id(v: str, leg: int) -> str:
    return f"{v}:{leg}"


def sink_name(leg_id: str) -> str:
    return f"sink[{leg_id}]"


def positions(layers: int) -> dict[str, float]:
    """Angle in degrees of every tensor; ``b.1`` sits at the top and the ring runs clockwise."""
    out = {CENTRE: 0.0}
    if layers >= 1:
        for k in range(1, RING + 1):
            out[b_name(k)] = (90.0 - 60.0 * (k - 1)) % 360
    if layers >= 2:
        for k in range(1, RING + 1):
            out[c_name(k)] = (60.0 - 60.0 * (k - 1)) % 360
    return out


def leg_layout(layers: int) -> dict[str, list[str | None]]:
    """Per tensor, the bulk edge on each of its six legs (``None`` for open legs)."""
    if layers not in (0, 1, 2):
        raise ValidationError("layers must be 0, 1 or 2")
    legs: dict[str, list[str | None]] = {CENTRE: [None] * 6}
    if layers >= 1:
        for k in range(1, RING + 1):
            legs[CENTRE][k - 1] = bulk_edge_id(CENTRE, b_name(k))
            legs[b_name(k)] = [bulk_edge_id(CENTRE, b_name(k)), None, None, None, None, None]
    if layers >= 2:
        for k in range(1, RING + 1):
            b, c = b_name(k), c_name(k)
            legs[b][1] = bulk_edge_id(b, c)
            legs[b][5] = bulk_edge_id(b, c_name(k - 1))
            legs[c] = [bulk_edge_id(c, b), None, None, None, None, bulk_edge_id(c, b_name(k + 1))]
    return legs


def _vertex_operator(t: np.ndarray, bulk: Sequence[tuple[int, str]]) -> SquareOperator:
    """``Tr_open |psi><psi|`` on the bulk legs, factors sorted by edge id."""
    bulk = sorted(bulk, key=lambda p: p[1])
    idx = [i for i, _ in bulk]
    rest = [i for i in range(t.ndim) if i not in idx]
    mat = np.transpose(t, idx + rest).reshape(2 ** len(idx), -1)
    return SquareOperator(tuple((e, 2) for _, e in bulk), mat @ mat.conj().T)


@dataclass(frozen=True)
class HoloPatch:
    layers: int
    tensor: DenseTensor = field(repr=False)
    legs: Mapping[str, tuple[str | None, ...]] = field(repr=False)
    bulk_edges: tuple[str, ...]
    boundary_legs: tuple[str, ...]
    cut_legs: tuple[str, ...]
    exposed: tuple[str, ...]
    network: TensorNetwork = field(repr=False)

    @property
    def ket_tensors(self) -> tuple[str, ...]:
        return tuple(self.legs)

    def contraction(self) -> float:
        """``<L| rho_P |L>`` of the doubled network."""
        return contract(self.network)

    def norm_squared(self) -> float:
        """``<Xi|Xi>`` of the ket patch with every open leg traced against its conjugate.

        Each exposed leg ends on a maximally mixed sink, which scales the
        contraction by ``1/2``; that factor is removed here.
        """
        return self.contraction() * 2.0 ** len(self.exposed)

    def plan(self):
        return doubled_network(self.network).plan()

    def leg_counts(self) -> dict[str, int]:
        return {v: sum(1 for e in ls if e is None) for v, ls in self.legs.items()}


def build_happy_patch(
    layers: int, tensor: DenseTensor | None = None, expose: Iterable[str] = ()
) -> HoloPatch:
    """Hexagonal patch of ``1``, ``7`` or ``13`` perfect tensors.

    Open legs named in ``expose`` (``"b.5:3"`` is leg 3 of ``b.5``) become edges to
    a maximally mixed sink so that regions may include them. In a one-layer
    patch the two legs of each ``b`` that face the missing outer ring are
    reported as cut legs; they are traced like boundary legs.
    """
    tensor = six_leg_perfect_tensor() if tensor is None else tensor
    if len(tensor.axes) != 6 or any(d != 2 for _, d in tensor.axes):
        raise ValidationError("patches need a six-leg qubit tensor")
    layout = leg_layout(layers)
    expose = tuple(sorted(set(expose)))
    open_ids = {open_leg_id(v, i) for v, ls in layout.items() for i, e in enumerate(ls) if e is None}
    unknown = set(expose) - open_ids
    if unknown:
        raise ValidationError(f"cannot expose {sorted(unknown)}: not open legs of this patch")
    cut, boundary = [], []
    for v, ls in layout.items():
        for i, e in enumerate(ls):
            if e is not None:
                continue
            leg = open_leg_id(v, i)
            if layers == 1 and v.startswith("b.") and i in (1, 5):
                cut.append(leg)
            else:
                boundary.append(leg)
    data = np.asarray(tensor.data)
    ops, edges, vertices = {}, {}, list(layout)
    for v, ls in layout.items():
        bulk = [(i, e) for i, e in enumerate(ls) if e is not None]
        bulk += [(i, open_leg_id(v, i)) for i, e in enumerate(ls) if e is None and open_leg_id(v, i) in expose]
        ops[v] = _vertex_operator(data, bulk)
        for i, e in bulk:
            edges.setdefault(e, []).append(v)
    for leg in expose:
        s = sink_name(leg)
        vertices.append(s)
        edges[leg].append(s)
        ops[s] = SquareOperator(((leg, 2),), np.eye(2) / 2)
    graph = UndirectedMultigraph(
        tuple(vertices), tuple(UndirectedEdge(e, ends[0], ends[1], 2) for e, ends in edges.items())
    )
    bulk_edges = tuple(sorted(e for e in edges if e not in expose))
    return HoloPatch(
        layers,
        tensor,
        {v: tuple(ls) for v, ls in layout.items()},
        bulk_edges,
        tuple(sorted(boundary)),
        tuple(sorted(cut)),
        expose,
        TensorNetwork(graph, ops),
    )


def radial_orientation(patch: HoloPatch) -> dict[str, int]:
    """Spokes point outward, bridges point from ``c`` into ``b``, exposed legs point into their sinks."""
    bits = {}
    for e in patch.network.edges:
        src = e.u
        if e.u.startswith("c.") or e.w.startswith("c."):
            src = e.u if e.u.startswith("c.") else e.w
        elif e.u.startswith("sink[") or e.w.startswith("sink["):
            src = e.w if e.u.startswith("sink[") else e.u
        elif CENTRE in (e.u, e.w):
            src = CENTRE
        bits[e.id] = 0 if src == e.u else 1
    return bits


@dataclass(frozen=True)
class SeparationCheck:
    directions: Mapping[str, int]
    marked: frozenset[str]
    acyclic: bool
    d_separated: bool | None
    p_separated: bool


def separation_check(
    patch: HoloPatch, region_a: Sequence[str], region_b: Sequence[str], directions: Mapping[str, int]
) -> SeparationCheck:
    """Graph separation of the setting of ``region_a`` from the outcomes of ``region_b``.

    The orientation is read as the generalized mapping would: vertices failing
    the trace condition get a self-loop. Both regions are then routed through
    lab vertices with parentless setting vertices.
    """
    net = patch.network
    marked = marked_vertices(net, directions)
    graph = add_self_loops(orient(net.graph, directions), marked, {v: 2 for v in marked})
    labs = intervention_graph(graph, region_a, region_b)
    x, y, z = {setting_vertex("A")}, {intervention_vertex("B")}, {setting_vertex("B")}
    acyclic = labs.is_acyclic()
    dsep = d_separated(labs, x, y, z) if acyclic else None
    psep = p_separated(labs, x, y, z)
    return SeparationCheck(dict(directions), frozenset(marked), acyclic, dsep, psep)


@dataclass(frozen=True)
class HoloInfluenceReport:
    verdict: Detected | NotDetected
    separation: SeparationCheck | None

    @property
    def forced_by_graph(self) -> bool:
        """Graph separation alone already rules out influence."""
        return self.separation is not None and self.separation.p_separated

    @property
    def consistent(self) -> bool:
        return not (self.forced_by_graph and isinstance(self.verdict, Detected))


def _check_regions(patch: HoloPatch, region: Sequence[str]) -> None:
    edges = set(patch.network.graph.edge_ids)
    for e in region:
        if e in edges:
            continue
        if e in patch.boundary_legs or e in patch.cut_legs:
            raise RegionOnBoundaryError(f"{e!r} is an open leg; build the patch with expose=[{e!r}]")
        raise ValidationError(f"unknown edge {e!r}")


def holo_influence(
    patch: HoloPatch,
    region_a: Sequence[str],
    region_b: Sequence[str],
    config: SamplerConfig = SamplerConfig(product_instruments=True),
    directions: Mapping[str, int] | None = None,
) -> HoloInfluenceReport:
    """Sampled influence on the patch, plus graph separation under ``directions`` if given."""
    _check_regions(patch, region_a)
    _check_regions(patch, region_b)
    regions = RegionPair(tuple(region_a), tuple(region_b))
    verdict = detect_influence(patch.network, regions, config)
    sep = None if directions is None else separation_check(patch, regions.a, regions.b, directions)
    return HoloInfluenceReport(verdict, sep)


def orientation_sweep(
    patch: HoloPatch,
    region_a: Sequence[str],
    region_b: Sequence[str],
    vertices: Sequence[str],
    base: Mapping[str, int] | None = None,
) -> list[SeparationCheck]:
    """Separation checks for every orientation of the edges touching ``vertices``."""
    base = dict(radial_orientation(patch) if base is None else base)
    free = sorted(e.id for e in patch.network.edges if e.u in vertices or e.w in vertices)
    out = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        d = dict(base)
        d.update(zip(free, bits))
        out.append(separation_check(patch, region_a, region_b, d))
    return out


def separated_configuration() -> tuple[HoloPatch, tuple[str, ...], tuple[str, ...], dict[str, int]]:
    """Unitary on spoke ``a-b.2``; operators on the other spokes of ``a`` and on both bridges of ``b.2``.

    Under the radial orientation ``b.2`` has only boundary outputs, so the
    unitary's setting is d-separated from every operator.
    """
    patch = build_happy_patch(2)
    region_a = (bulk_edge_id(CENTRE, b_name(2)),)
    region_b = tuple(
        [bulk_edge_id(CENTRE, b_name(k)) for k in (1, 4, 5, 6)]
        + [bulk_edge_id(b_name(2), c_name(1)), bulk_edge_id(b_name(2), c_name(2))]
    )
    return patch, region_a, region_b, radial_orientation(patch)


def p_connected_configuration() -> tuple[HoloPatch, tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    """Unitary on spoke ``a-b.5``; operators on spokes to ``b.2 .. b.4``, bridge ``b.5-c.4`` and two open legs of ``b.5``.

    Returns the patch, both regions, and the tensors whose edge orientations are
    free to vary.
    """
    exposed = (open_leg_id(b_name(5), 2), open_leg_id(b_name(5), 3))
    patch = build_happy_patch(2, expose=exposed)
    region_a = (bulk_edge_id(CENTRE, b_name(5)),)
    region_b = tuple([bulk_edge_id(CENTRE, b_name(k)) for k in (2, 3, 4)] + [bulk_edge_id(b_name(5), c_name(4))]) + exposed
    return patch, region_a, region_b, (CENTRE, b_name(5))
