"""Shared model builders and independent oracles."""

from __future__ import annotations

import math
import string

import numpy as np
import pytest

from tncausal.choi import Superoperator, from_kraus, from_unitary
from tncausal.cm import CausalModel, Instrument
from tncausal.graphs import OBSERVED, UNOBSERVED, DirectedCausalGraph, DirectedEdge
from tncausal.tn import TensorNetwork, stub_ids

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def random_state(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_psd(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    return g @ g.conj().T


def random_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    g = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_kraus(rng: np.random.Generator, d_in: int, d_out: int, n_kraus: int = 2) -> list[np.ndarray]:
    n_kraus = max(n_kraus, -(-d_in // d_out))
    v = random_isometry(rng, d_out * n_kraus, d_in)
    return [v[k * d_out : (k + 1) * d_out] for k in range(n_kraus)]


def random_channel(rng, ins, outs, n_kraus: int = 2) -> Superoperator:
    d_in = math.prod(d for _, d in ins)
    d_out = math.prod(d for _, d in outs)
    return from_kraus(random_kraus(rng, d_in, d_out, n_kraus), ins, outs)


def random_povm(rng, d: int, n: int) -> list[np.ndarray]:
    v = random_isometry(rng, d * n, d)
    return [v[k * d : (k + 1) * d].conj().T @ v[k * d : (k + 1) * d] for k in range(n)]


def random_unitary(rng, d: int) -> np.ndarray:
    return random_isometry(rng, d, d)


def random_graph(rng, n_vertices: int, n_edges: int, max_dim: int = 3, cyclic: bool | None = None, min_dim: int = 1):
    """Random multigraph on ``n_vertices`` vertices; ``cyclic`` forces or forbids directed cycles."""
    import networkx as nx

    names = [string.ascii_uppercase[i] for i in range(n_vertices)]
    while True:
        edges = []
        for k in range(n_edges):
            u, w = rng.choice(names, size=2, replace=True)
            if cyclic is False and u >= w:
                if u == w:
                    continue
                u, w = w, u
            edges.append(DirectedEdge(f"e{k}", str(u), str(w), int(rng.integers(min_dim, max_dim + 1))))
        if len(edges) != n_edges:
            continue
        g = nx.MultiDiGraph()
        g.add_nodes_from(names)
        g.add_edges_from((e.src, e.dst) for e in edges)
        acyclic = nx.is_directed_acyclic_graph(g)
        if cyclic is None or cyclic != acyclic:
            return names, edges


def random_unobserved_model(rng, n_vertices: int, n_edges: int, max_dim: int = 3, cyclic=None, min_dim: int = 1) -> CausalModel:
    names, edges = random_graph(rng, n_vertices, n_edges, max_dim, cyclic, min_dim)
    g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
    mechs = {}
    for v in names:
        ins = tuple((e.id, e.dim) for e in sorted(g.in_edges(v), key=lambda e: e.id))
        outs = tuple((e.id, e.dim) for e in sorted(g.out_edges(v), key=lambda e: e.id))
        mechs[v] = random_channel(rng, ins, outs)
    return CausalModel(g, mechs)


def random_dag_model(rng, n_vertices: int = 4, n_edges: int = 4, n_observed: int = 2, n_outcomes: int = 2) -> CausalModel:
    """Acyclic model whose observed vertices have out-edges of dim ``n_outcomes``."""
    names = [string.ascii_uppercase[i] for i in range(n_vertices)]
    observed = set(rng.choice(names, size=n_observed, replace=False).tolist())
    edges = []
    while len(edges) < n_edges:
        i, j = sorted(rng.choice(n_vertices, size=2, replace=False).tolist())
        u, w = names[i], names[j]
        dim = n_outcomes if u in observed else int(rng.integers(2, 4))
        edges.append(DirectedEdge(f"e{len(edges)}", u, w, dim))
    g = DirectedCausalGraph(tuple((v, OBSERVED if v in observed else UNOBSERVED) for v in names), tuple(edges))
    mechs = {}
    for v in names:
        ins = tuple((e.id, e.dim) for e in sorted(g.in_edges(v), key=lambda e: e.id))
        outs = tuple((e.id, e.dim) for e in sorted(g.out_edges(v), key=lambda e: e.id))
        if v in observed:
            d_in = math.prod(d for _, d in ins)
            mechs[v] = Instrument(ins, outs, tuple(range(n_outcomes)), tuple(random_povm(rng, d_in, n_outcomes)))
        else:
            mechs[v] = random_channel(rng, ins, outs)
    return CausalModel(g, mechs)


def bell_model() -> CausalModel:
    """Source preparing Phi+ on two edges, read out in the computational basis at A and B."""
    phi = np.zeros(4, dtype=complex)
    phi[[0, 3]] = 1 / math.sqrt(2)
    g = DirectedCausalGraph(
        (("S", UNOBSERVED), ("A", OBSERVED), ("B", OBSERVED)),
        (DirectedEdge("sa", "S", "A", 2), DirectedEdge("sb", "S", "B", 2)),
    )
    readout = (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
    return CausalModel(
        g,
        {
            "S": Superoperator((), (("sa", 2), ("sb", 2)), np.outer(phi, phi.conj())),
            "A": Instrument((("sa", 2),), (), (0, 1), readout),
            "B": Instrument((("sb", 2),), (), (0, 1), readout),
        },
    )


def loop_model(u: np.ndarray) -> CausalModel:
    """One unobserved vertex feeding its own output back through a unitary."""
    d = u.shape[0]
    g = DirectedCausalGraph((("V", UNOBSERVED),), (DirectedEdge("e", "V", "V", d),))
    return CausalModel(g, {"V": from_unitary(u, (("e", d),))})


def chain_model() -> CausalModel:
    """``P -> A -> B``: P prepares |0>, A passes its input on, B is a readout."""
    g = DirectedCausalGraph(
        (("P", UNOBSERVED), ("A", UNOBSERVED), ("B", OBSERVED)),
        (DirectedEdge("pa", "P", "A", 2), DirectedEdge("ab", "A", "B", 2)),
    )
    return CausalModel(
        g,
        {
            "P": Superoperator((), (("pa", 2),), np.diag([1.0, 0.0])),
            "A": Superoperator((("pa", 2),), (("ab", 2),), from_unitary(np.eye(2)).choi),
            "B": Instrument((("ab", 2),), (), (0, 1), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))),
        },
    )


def two_cycle_model(rng, d: int = 2) -> CausalModel:
    """Vertices A, B with edges ``A -> B``, ``B -> A`` and an observed readout C fed by B."""
    g = DirectedCausalGraph(
        (("A", UNOBSERVED), ("B", UNOBSERVED), ("C", OBSERVED)),
        (DirectedEdge("ab", "A", "B", d), DirectedEdge("ba", "B", "A", d), DirectedEdge("bc", "B", "C", d)),
    )
    mechs = {
        "A": random_channel(rng, (("ba", d),), (("ab", d),)),
        "B": random_channel(rng, (("ab", d),), (("ba", d), ("bc", d))),
        "C": Instrument((("bc", d),), (), tuple(range(d)), tuple(np.diag(np.eye(d)[k]) for k in range(d))),
    }
    return CausalModel(g, mechs)


# ---------------------------------------------------------------------------
# oracles


def born_oracle(m: CausalModel) -> dict[tuple, float]:
    """Sequential Born rule for acyclic models: apply mechanisms in topological order.

    The state is a dict from outcome prefixes to an operator tensor with axes
    ``(ket edges..., bra edges...)``.
    """
    import networkx as nx

    g = m.graph
    order = list(nx.topological_sort(g.to_networkx()))
    dims = {e.id: e.dim for e in g.edges}
    branches: dict[tuple, tuple[list[str], np.ndarray]] = {(): ([], np.ones((), dtype=complex))}
    observed_order = []
    for v in order:
        mech = m.mechanisms[v]
        ins = [f for f, _ in mech.in_factors]
        outs = [f for f, _ in mech.out_factors]
        new = {}
        for prefix, (live, t) in branches.items():
            n = len(live)
            rest = [e for e in live if e not in ins]
            perm = [live.index(e) for e in ins + rest]
            t = np.transpose(t, perm + [p + n for p in perm])
            d_in = math.prod(dims[e] for e in ins)
            d_rest = math.prod(dims[e] for e in rest)
            t = t.reshape(d_in, d_rest, d_in, d_rest)
            if isinstance(mech, Instrument):
                for label, povm in zip(mech.labels, mech.povm):
                    reduced = np.einsum("ji,iajb->ab", povm, t)
                    k = mech.labels.index(label)
                    out = np.zeros((len(mech.labels),) * 2)
                    out[k, k] = 1.0
                    out_t = np.ones((), dtype=complex)
                    for _ in outs:
                        out_t = np.kron(out_t, out)
                    new[prefix + (label,)] = _join(outs, out_t, rest, reduced, dims)
            else:
                block = mech.block()
                out = d_in * np.einsum("iajb,ixjy->xayb", t, block)
                out = out.reshape(mech.d_out * d_rest, mech.d_out * d_rest)
                shape = [dims[e] for e in outs + rest]
                new[prefix] = (outs + rest, out.reshape(shape + shape))
        branches = new
        if isinstance(mech, Instrument):
            observed_order.append(v)
    probs = {}
    for prefix, (live, t) in branches.items():
        assert not live
        probs[prefix] = float(np.real(t))
    # reorder outcome tuples to lexicographic observed-vertex order
    idx = [observed_order.index(v) for v in sorted(observed_order)]
    return {tuple(x[i] for i in idx): p for x, p in probs.items()}


def _join(outs, out_matrix, rest, reduced, dims):
    d_rest = math.prod(dims[e] for e in rest)
    full = np.kron(out_matrix, reduced.reshape(d_rest, d_rest))
    shape = [dims[e] for e in outs + rest]
    return outs + rest, full.reshape(shape + shape)


def dense_contraction(tn: TensorNetwork) -> complex:
    """``sum_{i,j} prod_v P_v[i; j]`` with both stubs of an edge sharing its ket and bra index."""
    letters = iter(string.ascii_letters)
    ket, bra = {}, {}
    for e in tn.edges:
        ket[e.id], bra[e.id] = next(letters), next(letters)
    stub_edge = {}
    for e in tn.edges:
        for s in stub_ids(e):
            stub_edge[s] = e.id
    terms, ops = [], []
    for v, op in tn.vertex_ops.items():
        ids = [stub_edge[str(f)] for f in op.ids]
        terms.append("".join(ket[e] for e in ids) + "".join(bra[e] for e in ids))
        ops.append(op.tensor())
    return complex(np.einsum(",".join(terms) + "->", *ops))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

