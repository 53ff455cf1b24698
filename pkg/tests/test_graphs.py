from __future__ import annotations

import itertools

import networkx as nx
import pytest

from tncausal.errors import (
    CyclicGraphError,
    FamilyTooLargeError,
    NonDisjointSetsError,
    UnknownFactorError,
    ValidationError,
)
from tncausal.graphs import (
    OBSERVED,
    UNOBSERVED,
    DirectedCausalGraph,
    DirectedEdge,
    UndirectedEdge,
    UndirectedMultigraph,
    add_self_loops,
    all_directions,
    cyclic_edges,
    d_separated,
    format_directions,
    intervention_graph,
    loop_edge_id,
    maximal_retained_sets,
    orient,
    p_separated,
    parse_directions,
    post_vertex,
    setting_vertex,
    intervention_vertex,
    teleport_graphs,
)

from conftest import random_graph


def digraph(edges, observed=()):
    names = sorted({v for _, s, t in edges for v in (s, t)} | set(observed))
    return DirectedCausalGraph(
        tuple((v, OBSERVED if v in observed else UNOBSERVED) for v in names),
        tuple(DirectedEdge(i, s, t, 2) for i, s, t in edges),
    )


def edge_multiset(g):
    return sorted((e.id, frozenset((e.src, e.dst)), e.dim) for e in g.edges)


def disjoint_triples(vertices):
    """Every (v1, v2, v3) with v1, v2 nonempty and the three sets pairwise disjoint."""
    for labels in itertools.product(range(4), repeat=len(vertices)):
        sets = [{v for v, k in zip(vertices, labels) if k == i} for i in (1, 2, 3)]
        if sets[0] and sets[1]:
            yield sets


COLLIDER = digraph([("ac", "A", "C"), ("bc", "B", "C")])
CHAIN = digraph([("ab", "A", "B"), ("bc", "B", "C")])
FORK = digraph([("ba", "B", "A"), ("bc", "B", "C")])


class TestOrient:
    def test_single_edge_bit_zero(self):
        g = UndirectedMultigraph(("A", "B"), (UndirectedEdge("e", "B", "A", 2),))
        e = orient(g, {"e": 0}).edge("e")
        assert (e.src, e.dst) == ("A", "B")

    def test_single_edge_bit_one(self):
        g = UndirectedMultigraph(("A", "B"), (UndirectedEdge("e", "A", "B", 2),))
        e = orient(g, {"e": 1}).edge("e")
        assert (e.src, e.dst) == ("B", "A")

    def test_triangle_all_zero_is_acyclic(self):
        g = UndirectedMultigraph(
            ("A", "B", "C"),
            (UndirectedEdge("x", "A", "B", 2), UndirectedEdge("y", "B", "C", 2), UndirectedEdge("z", "C", "A", 2)),
        )
        dg = orient(g, {"x": 0, "y": 0, "z": 0})
        assert dg.is_acyclic()
        assert all(e.src < e.dst for e in dg.edges)
        assert all(k == UNOBSERVED for _, k in dg.vertices)

    def test_forgetting_directions_restores_graph(self, rng):
        for _ in range(10):
            names, edges = random_graph(rng, 4, 5)
            g = UndirectedMultigraph(tuple(names), tuple(UndirectedEdge(e.id, e.src, e.dst, e.dim) for e in edges))
            for d in itertools.islice(all_directions(g.edge_ids), 8):
                assert edge_multiset(orient(g, d)) == sorted(
                    (e.id, frozenset((e.u, e.w)), e.dim) for e in g.edges
                )

    def test_parallel_edges_survive(self):
        g = UndirectedMultigraph(("A", "B"), (UndirectedEdge("e1", "A", "B", 2), UndirectedEdge("e2", "A", "B", 3)))
        dg = orient(g, {"e1": 0, "e2": 1})
        assert not dg.is_acyclic()
        assert len(dg.edges) == 2

    def test_unknown_edge_bit(self):
        g = UndirectedMultigraph(("A", "B"), (UndirectedEdge("e", "A", "B", 2),))
        with pytest.raises(UnknownFactorError):
            orient(g, {"e": 0, "f": 1})

    def test_bitstring_round_trip(self):
        d = parse_directions("101", ["c", "a", "b"])
        assert d == {"a": 1, "b": 0, "c": 1}
        assert format_directions(d) == "101"

    def test_bitstring_wrong_length(self):
        with pytest.raises(ValidationError):
            parse_directions("10", ["a", "b", "c"])


class TestSelfLoops:
    def test_mark_one(self):
        g = add_self_loops(digraph([("ab", "A", "B")]), {"B"}, {"B": 3})
        loop = g.edge(loop_edge_id("B"))
        assert (loop.src, loop.dst, loop.dim) == ("B", "B", 3)
        assert g.edge("ab").src == "A"
        assert len(g.edges) == 2

    def test_empty_mark(self):
        g = digraph([("ab", "A", "B")])
        assert add_self_loops(g, set(), {}) == g

    def test_mark_both(self):
        g = add_self_loops(digraph([("ab", "A", "B")]), {"A", "B"}, {"A": 2, "B": 2})
        assert sum(e.is_loop for e in g.edges) == 2

    def test_unknown_vertex(self):
        with pytest.raises(UnknownFactorError):
            add_self_loops(digraph([("ab", "A", "B")]), {"Z"}, {"Z": 2})


class TestDSeparation:
    def test_collider(self):
        assert d_separated(COLLIDER, {"A"}, {"B"})
        assert not d_separated(COLLIDER, {"A"}, {"B"}, {"C"})

    def test_collider_descendant_opens(self):
        g = digraph([("ac", "A", "C"), ("bc", "B", "C"), ("cd", "C", "D")])
        assert not d_separated(g, {"A"}, {"B"}, {"D"})

    def test_chain(self):
        assert d_separated(CHAIN, {"A"}, {"C"}, {"B"})
        assert not d_separated(CHAIN, {"A"}, {"C"})

    def test_fork(self):
        assert not d_separated(FORK, {"A"}, {"C"})
        assert d_separated(FORK, {"A"}, {"C"}, {"B"})

    def test_symmetric(self, rng):
        for _ in range(10):
            names, edges = random_graph(rng, 5, 6, cyclic=False)
            g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
            for v1, v2, v3 in itertools.islice(disjoint_triples(names), 0, None, 37):
                assert d_separated(g, v1, v2, v3) == d_separated(g, v2, v1, v3)

    def test_cyclic_rejected(self):
        with pytest.raises(CyclicGraphError):
            d_separated(digraph([("ab", "A", "B"), ("ba", "B", "A"), ("bc", "B", "C")]), {"A"}, {"C"})

    def test_overlapping_sets(self):
        with pytest.raises(NonDisjointSetsError):
            d_separated(CHAIN, {"A"}, {"C"}, {"A"})


class TestTeleportGraphs:
    def test_acyclic_first_member_is_graph_itself(self):
        first = next(teleport_graphs(CHAIN))
        assert first.split == frozenset()
        assert first.graph == CHAIN

    def test_two_cycle_maximal_member(self):
        g = digraph([("ab", "A", "B"), ("ba", "B", "A")])
        members = list(teleport_graphs(g))
        # retaining both edges is cyclic; the three others are acyclic
        assert len(members) == 3
        full = [m for m in members if m.split == {"ab", "ba"}]
        assert len(full) == 1
        assert full[0].post == {post_vertex("ab"), post_vertex("ba")}
        assert all(full[0].graph.kind(t) == OBSERVED for t in full[0].post)
        assert all(full[0].graph.kind(r) == UNOBSERVED for r in full[0].pre)

    def test_self_loop_always_split(self):
        g = digraph([("loop", "A", "A"), ("ab", "A", "B")])
        assert all("loop" in m.split for m in teleport_graphs(g))

    def test_members_acyclic(self, rng):
        for _ in range(10):
            names, edges = random_graph(rng, 4, 6, cyclic=True)
            g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
            for m in teleport_graphs(g):
                assert nx.is_directed_acyclic_graph(m.graph.to_networkx())

    def test_gadget_shape(self):
        g = digraph([("ab", "A", "B"), ("ba", "B", "A")])
        m = next(m for m in teleport_graphs(g) if m.split == {"ab"})
        t, r = post_vertex("ab"), "r[ab]"
        pairs = {(e.src, e.dst) for e in m.graph.edges}
        assert {("A", t), (r, t), (r, "B"), ("B", "A")} == pairs


class TestMaximalRetainedSets:
    def test_two_cycle(self):
        g = digraph([("ab", "A", "B"), ("ba", "B", "A"), ("bc", "B", "C")])
        sets = set(maximal_retained_sets(g))
        assert sets == {frozenset({"ab", "bc"}), frozenset({"ba", "bc"})}

    def test_cyclic_edges_include_loops(self):
        g = digraph([("loop", "A", "A"), ("ab", "A", "B")])
        assert cyclic_edges(g) == ("loop",)
        assert list(maximal_retained_sets(g)) == [frozenset({"ab"})]

    def test_limit(self):
        g = digraph([("ab", "A", "B"), ("ba", "B", "A"), ("bc", "B", "C"), ("cb", "C", "B")])
        with pytest.raises(FamilyTooLargeError):
            list(maximal_retained_sets(g, limit=3))

    def test_maximal_sets_are_the_maximal_acyclic_members(self, rng):
        for _ in range(10):
            names, edges = random_graph(rng, 4, 6, cyclic=True)
            g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
            retained = [frozenset(g.edge_ids) - m.split for m in teleport_graphs(g)]
            maximal = {s for s in retained if not any(s < t for t in retained)}
            assert set(maximal_retained_sets(g)) == maximal


class TestPSeparation:
    def test_random_dags_match_d_separation(self, rng):
        for _ in range(20):
            names, edges = random_graph(rng, 5, 6, cyclic=False)
            g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
            for v1, v2, v3 in itertools.islice(disjoint_triples(names), 0, None, 11):
                assert p_separated(g, v1, v2, v3) == d_separated(g, v1, v2, v3)

    def test_matches_brute_force_over_family(self, rng):
        for _ in range(15):
            names, edges = random_graph(rng, 4, 5, cyclic=True)
            g = DirectedCausalGraph(tuple((v, UNOBSERVED) for v in names), tuple(edges))
            family = list(teleport_graphs(g))
            for v1, v2, v3 in itertools.islice(disjoint_triples(names), 0, None, 7):
                brute = any(
                    nx.is_d_separator(nx.DiGraph(m.graph.to_networkx()), v1, v2, v3 | set(m.post)) for m in family
                )
                assert p_separated(g, v1, v2, v3) == brute

    def test_intervention_outside_cycle_is_p_separated(self):
        # v3 and v4 form a 2-cycle; lab A sits on v4 -> v2, lab B on v3 -> v1
        g = digraph(
            [("e34", "v3", "v4"), ("e43", "v4", "v3"), ("e1", "v3", "v1"), ("e2", "v4", "v2")],
            observed=("v1", "v2"),
        )
        gi = intervention_graph(g, {"e2"}, {"e1"})
        assert p_separated(gi, {setting_vertex("A")}, {intervention_vertex("B")}, {setting_vertex("B")})

    def test_intervention_on_cycle_is_p_connected(self):
        g = digraph(
            [("e34", "v3", "v4"), ("e43", "v4", "v3"), ("e1", "v3", "v1"), ("e2", "v4", "v2")],
            observed=("v1", "v2"),
        )
        gi = intervention_graph(g, {"e34", "e43"}, {"e1"})
        assert not p_separated(gi, {setting_vertex("A")}, {intervention_vertex("B")}, {setting_vertex("B")})

    def test_self_loop_opens_collider(self):
        # U -> W <- S -> O blocks U from O at the collider W; a loop on W opens it
        g = digraph([("uw", "U", "W"), ("sw", "S", "W"), ("so", "S", "O")], observed=("O",))
        assert p_separated(g, {"U"}, {"O"})
        looped = add_self_loops(g, {"W"}, {"W": 2})
        assert not p_separated(looped, {"U"}, {"O"})


class TestInterventionGraph:
    def test_routing(self):
        g = digraph([("ab", "A", "B"), ("bc", "B", "C")], observed=("C",))
        gi = intervention_graph(g, {"ab"}, {"bc"})
        pairs = {(e.src, e.dst) for e in gi.edges}
        assert ("A", "lab[A]") in pairs and ("lab[A]", "B") in pairs
        assert ("B", "lab[B]") in pairs and ("lab[B]", "C") in pairs
        assert ("setting[A]", "lab[A]") in pairs
        assert gi.kind("lab[B]") == OBSERVED
        assert gi.kind("lab[A]") == UNOBSERVED

    def test_overlapping_labs(self):
        with pytest.raises(NonDisjointSetsError):
            intervention_graph(CHAIN, {"ab"}, {"ab"})

    def test_unknown_edge(self):
        with pytest.raises(UnknownFactorError):
            intervention_graph(CHAIN, {"zz"}, {"ab"})
