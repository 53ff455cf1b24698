"""Multigraphs, edge orientation, and d-/p-separation.

Edges are identified by id, so parallel edges and self-loops are first-class.
Direction bitstrings index edges in lexicographic edge-id order; bit 0 points
an edge from its lexicographically smaller endpoint to the larger one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import networkx as nx

from .errors import (
    CyclicGraphError,
    FamilyTooLargeError,
    NonDisjointSetsError,
    UnknownFactorError,
    ValidationError,
)

OBSERVED = "observed"
UNOBSERVED = "unobserved"
P_SEPARATION_EDGE_LIMIT = 16


@dataclass(frozen=True)
class UndirectedEdge:
    id: str
    u: str
    w: str
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError(f"edge {self.id!r} has non-positive dim")
        if self.w < self.u:
            u, w = self.w, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "w", w)

    @property
    def is_loop(self) -> bool:
        return self.u == self.w


@dataclass(frozen=True)
class DirectedEdge:
    id: str
    src: str
    dst: str
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError(f"edge {self.id!r} has non-positive dim")

    @property
    def is_loop(self) -> bool:
        return self.src == self.dst


def _check_edges(vertices: Iterable[str], edges: Sequence, endpoints) -> None:
    vs = set(vertices)
    seen = set()
    for e in edges:
        if e.id in seen:
            raise ValidationError(f"duplicate edge id {e.id!r}")
        seen.add(e.id)
        for v in endpoints(e):
            if v not in vs:
                raise UnknownFactorError(f"edge {e.id!r} references unknown vertex {v!r}")


@dataclass(frozen=True)
class UndirectedMultigraph:
    vertices: tuple[str, ...]
    edges: tuple[UndirectedEdge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.id)))
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("duplicate vertex id")
        _check_edges(self.vertices, self.edges, lambda e: (e.u, e.w))

    def edge(self, edge_id: str) -> UndirectedEdge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise UnknownFactorError(f"unknown edge {edge_id!r}")

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    def incident(self, v: str) -> tuple[UndirectedEdge, ...]:
        return tuple(e for e in self.edges if v in (e.u, e.w))


@dataclass(frozen=True)
class DirectedCausalGraph:
    vertices: tuple[tuple[str, str], ...]
    edges: tuple[DirectedEdge, ...]

    def __post_init__(self) -> None:
        verts = tuple((v, k) for v, k in self.vertices)
        for v, k in verts:
            if k not in (OBSERVED, UNOBSERVED):
                raise ValidationError(f"vertex {v!r} has unknown kind {k!r}")
        if len({v for v, _ in verts}) != len(verts):
            raise ValidationError("duplicate vertex id")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.id)))
        _check_edges(self.vertex_ids, self.edges, lambda e: (e.src, e.dst))

    @property
    def vertex_ids(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.vertices)

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    def kind(self, v: str) -> str:
        return dict(self.vertices)[v]

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(sorted(v for v, k in self.vertices if k == OBSERVED))

    def edge(self, edge_id: str) -> DirectedEdge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise UnknownFactorError(f"unknown edge {edge_id!r}")

    def in_edges(self, v: str) -> tuple[DirectedEdge, ...]:
        return tuple(e for e in self.edges if e.dst == v)

    def out_edges(self, v: str) -> tuple[DirectedEdge, ...]:
        return tuple(e for e in self.edges if e.src == v)

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.vertex_ids)
        for e in self.edges:
            g.add_edge(e.src, e.dst, key=e.id)
        return g

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.to_networkx())

    def undirected(self) -> UndirectedMultigraph:
        return UndirectedMultigraph(
            self.vertex_ids, tuple(UndirectedEdge(e.id, e.src, e.dst, e.dim) for e in self.edges)
        )

    def with_kinds(self, kinds: Mapping[str, str]) -> "DirectedCausalGraph":
        return DirectedCausalGraph(tuple((v, kinds.get(v, k)) for v, k in self.vertices), self.edges)


DirectionString = Mapping[str, int]


def parse_directions(bits: str, edge_ids: Sequence[str]) -> dict[str, int]:
    """Bitstring over edges in lexicographic id order to an edge -> bit map."""
    order = sorted(edge_ids)
    if len(bits) != len(order) or set(bits) - {"0", "1"}:
        raise ValidationError(f"direction string must have {len(order)} bits over {{0,1}}")
    return {e: int(b) for e, b in zip(order, bits)}


def format_directions(d: DirectionString) -> str:
    return "".join(str(d[e]) for e in sorted(d))


def all_directions(edge_ids: Sequence[str]) -> Iterator[dict[str, int]]:
    order = sorted(edge_ids)
    for bits in itertools.product((0, 1), repeat=len(order)):
        yield dict(zip(order, bits))


def orient(g: UndirectedMultigraph, d: DirectionString) -> DirectedCausalGraph:
    """Bit 0 sends ``{u, w}`` (``u < w``) to ``u -> w``; bit 1 to ``w -> u``."""
    unknown = set(d) - set(g.edge_ids)
    if unknown:
        raise UnknownFactorError(f"bits for unknown edges {sorted(unknown)}")
    missing = set(g.edge_ids) - set(d)
    if missing:
        raise ValidationError(f"no bit for edges {sorted(missing)}")
    edges = []
    for e in g.edges:
        src, dst = (e.u, e.w) if d[e.id] == 0 else (e.w, e.u)
        edges.append(DirectedEdge(e.id, src, dst, e.dim))
    return DirectedCausalGraph(tuple((v, UNOBSERVED) for v in g.vertices), tuple(edges))


def loop_edge_id(v: str) -> str:
    return f"loop[{v}]"


def add_self_loops(
    g: DirectedCausalGraph, marked: Iterable[str], dims: Mapping[str, int]
) -> DirectedCausalGraph:
    """Add one self-loop ``loop[v]`` with dim ``dims[v]`` to every marked vertex."""
    marked = sorted(set(marked))
    unknown = set(marked) - set(g.vertex_ids)
    if unknown:
        raise UnknownFactorError(f"unknown vertices {sorted(unknown)}")
    new = [DirectedEdge(loop_edge_id(v), v, v, int(dims[v])) for v in marked]
    return DirectedCausalGraph(g.vertices, g.edges + tuple(new))


def _check_sets(g: DirectedCausalGraph, v1, v2, v3) -> tuple[set, set, set]:
    v1, v2, v3 = set(v1), set(v2), set(v3)
    if not v1 or not v2:
        raise ValidationError("the first two vertex sets must be nonempty")
    if v1 & v2 or v1 & v3 or v2 & v3:
        raise NonDisjointSetsError("vertex sets must be pairwise disjoint")
    unknown = (v1 | v2 | v3) - set(g.vertex_ids)
    if unknown:
        raise UnknownFactorError(f"unknown vertices {sorted(unknown)}")
    return v1, v2, v3


def _simple_digraph(g: DirectedCausalGraph) -> nx.DiGraph:
    # parallel edges between the same ordered pair give identical path steps
    s = nx.DiGraph()
    s.add_nodes_from(g.vertex_ids)
    s.add_edges_from((e.src, e.dst) for e in g.edges)
    return s


def d_separated(g: DirectedCausalGraph, v1: Iterable[str], v2: Iterable[str], v3: Iterable[str] = ()) -> bool:
    """True iff every path between ``v1`` and ``v2`` is blocked given ``v3``."""
    v1, v2, v3 = _check_sets(g, v1, v2, v3)
    if not g.is_acyclic():
        raise CyclicGraphError("d-separation needs an acyclic graph")
    return bool(nx.is_d_separator(_simple_digraph(g), v1, v2, v3))


def post_vertex(edge_id: str) -> str:
    return f"t[{edge_id}]"


def pre_vertex(edge_id: str) -> str:
    return f"r[{edge_id}]"


def gadget_edge_ids(edge_id: str) -> tuple[str, str, str]:
    """Ids of the edges ``v -> t``, ``r -> t`` and ``r -> v'`` replacing a split edge."""
    return f"{edge_id}.a", f"{edge_id}.b", f"{edge_id}.c"


@dataclass(frozen=True)
class TeleportGraph:
    graph: DirectedCausalGraph
    split: frozenset[str]
    post: frozenset[str]
    pre: frozenset[str]


def teleport_graph(g: DirectedCausalGraph, split: Iterable[str]) -> TeleportGraph:
    """Replace every edge in ``split`` by the pre/post-selection gadget."""
    split = frozenset(split)
    unknown = split - set(g.edge_ids)
    if unknown:
        raise UnknownFactorError(f"unknown edges {sorted(unknown)}")
    vertices = list(g.vertices)
    edges = []
    taken = set(g.vertex_ids)
    for e in g.edges:
        if e.id not in split:
            edges.append(e)
            continue
        t, r = post_vertex(e.id), pre_vertex(e.id)
        if t in taken or r in taken:
            raise ValidationError(f"gadget vertex id for edge {e.id!r} clashes with an existing vertex")
        vertices += [(t, OBSERVED), (r, UNOBSERVED)]
        ea, eb, ec = gadget_edge_ids(e.id)
        edges += [
            DirectedEdge(ea, e.src, t, e.dim),
            DirectedEdge(eb, r, t, e.dim),
            DirectedEdge(ec, r, e.dst, e.dim),
        ]
    graph = DirectedCausalGraph(tuple(vertices), tuple(edges))
    return TeleportGraph(
        graph,
        split,
        frozenset(post_vertex(e) for e in split),
        frozenset(pre_vertex(e) for e in split),
    )


def retained_acyclic(g: DirectedCausalGraph, retained: Iterable[str]) -> bool:
    keep = set(retained)
    h = nx.DiGraph()
    h.add_nodes_from(g.vertex_ids)
    for e in g.edges:
        if e.id in keep:
            if e.src == e.dst:
                return False
            h.add_edge(e.src, e.dst)
    return nx.is_directed_acyclic_graph(h)


def teleport_graphs(g: DirectedCausalGraph) -> Iterator[TeleportGraph]:
    """Every member of the teleportation family, lazily, by growing split size."""
    ids = g.edge_ids
    for k in range(len(ids) + 1):
        for split in itertools.combinations(ids, k):
            retained = set(ids) - set(split)
            if retained_acyclic(g, retained):
                yield teleport_graph(g, split)


def cyclic_edges(g: DirectedCausalGraph) -> tuple[str, ...]:
    """Edges lying on some directed cycle (self-loops included)."""
    comp = {}
    for i, scc in enumerate(nx.strongly_connected_components(_simple_digraph(g))):
        for v in scc:
            comp[v] = i
    return tuple(e.id for e in g.edges if comp[e.src] == comp[e.dst])


def _acyclic_pairs(pairs: Sequence[tuple[str, str]]) -> bool:
    """Kahn's algorithm on a small edge list given as ``(src, dst)`` pairs."""
    indeg: dict[str, int] = {}
    succ: dict[str, list[str]] = {}
    for u, w in pairs:
        if u == w:
            return False
        succ.setdefault(u, []).append(w)
        indeg[w] = indeg.get(w, 0) + 1
        indeg.setdefault(u, 0)
    ready = [v for v, k in indeg.items() if k == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for w in succ.get(v, ()):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    return seen == len(indeg)


def maximal_retained_sets(g: DirectedCausalGraph, limit: int = P_SEPARATION_EDGE_LIMIT) -> Iterator[frozenset[str]]:
    """Inclusion-maximal acyclic retained edge sets.

    Edges between different strongly connected components are always
    retained and self-loops are always split, so only the remaining cyclic
    edges are enumerated. Those edges are the only ones that can close a
    cycle, so acyclicity is checked on them alone.
    """
    cyclic = cyclic_edges(g)
    cyc = [e for e in cyclic if not g.edge(e).is_loop]
    if len(cyc) > limit:
        raise FamilyTooLargeError(f"{len(cyc)} cyclic edges exceed the enumeration limit {limit}")
    always = set(g.edge_ids) - set(cyclic)
    ends = {e: (g.edge(e).src, g.edge(e).dst) for e in cyc}
    found: list[frozenset[str]] = []
    for k in range(len(cyc), -1, -1):
        for keep in itertools.combinations(cyc, k):
            keep_set = frozenset(keep)
            if any(keep_set <= f for f in found):
                continue
            pairs = [ends[e] for e in keep]
            if not _acyclic_pairs(pairs):
                continue
            # no larger acyclic superset was found earlier, so this set is maximal
            found.append(keep_set)
            yield frozenset(always | keep_set)


def p_separated(
    g: DirectedCausalGraph,
    v1: Iterable[str],
    v2: Iterable[str],
    v3: Iterable[str] = (),
    limit: int = P_SEPARATION_EDGE_LIMIT,
) -> bool:
    """True iff some teleportation graph d-separates ``v1``, ``v2`` given ``v3`` and its post-selections.

    Retaining an edge instead of splitting it never opens a path, so it
    suffices to test the inclusion-maximal acyclic retained sets.
    """
    v1, v2, v3 = _check_sets(g, v1, v2, v3)
    for retained in maximal_retained_sets(g, limit):
        tg = teleport_graph(g, set(g.edge_ids) - retained)
        if nx.is_d_separator(_simple_digraph(tg.graph), v1, v2, v3 | set(tg.post)):
            return True
    return False


def setting_vertex(lab: str) -> str:
    return f"setting[{lab}]"


def intervention_vertex(lab: str) -> str:
    return f"lab[{lab}]"


def intervention_graph(
    g: DirectedCausalGraph, lab_a: Iterable[str], lab_b: Iterable[str]
) -> DirectedCausalGraph:
    """Insert one vertex per lab on its edges plus a parentless setting vertex for each lab.

    The edges of lab ``X`` are rerouted through ``lab[X]``; ``setting[X]``
    points into it. ``lab[B]`` is observed (its outcome ``y``), the settings
    are observed free choices, ``lab[A]`` is unobserved.
    """
    lab_a, lab_b = sorted(set(lab_a)), sorted(set(lab_b))
    if set(lab_a) & set(lab_b):
        raise NonDisjointSetsError("labs must be disjoint")
    vertices = list(g.vertices)
    for name, kind in (
        (intervention_vertex("A"), UNOBSERVED),
        (intervention_vertex("B"), OBSERVED),
        (setting_vertex("A"), OBSERVED),
        (setting_vertex("B"), OBSERVED),
    ):
        if name in g.vertex_ids:
            raise ValidationError(f"vertex id {name!r} is reserved")
        vertices.append((name, kind))
    edges = []
    routed = {e: intervention_vertex("A") for e in lab_a} | {e: intervention_vertex("B") for e in lab_b}
    for e in g.edges:
        if e.id not in routed:
            edges.append(e)
            continue
        mid = routed[e.id]
        edges.append(DirectedEdge(f"{e.id}.pre", e.src, mid, e.dim))
        edges.append(DirectedEdge(f"{e.id}.post", mid, e.dst, e.dim))
    for lab in ("A", "B"):
        edges.append(DirectedEdge(f"choice[{lab}]", setting_vertex(lab), intervention_vertex(lab), 1))
    for e in lab_a + lab_b:
        g.edge(e)
    return DirectedCausalGraph(tuple(vertices), tuple(edges))
