"""Compilation of cyclic causal models into acyclic ones with post-selection.

Each split edge ``v -> v'`` is replaced by a pre-selection vertex ``r[e]``
preparing a state on ``B ⊗ C`` and a post-selection vertex ``t[e]`` measuring
``A ⊗ B``. Conditioning every ``t[e]`` on ``ok`` teleports ``A`` to ``C``, so
the conditional distribution equals the cyclic probability rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .choi import Superoperator
from .cm import CausalModel, Distribution, Inconsistent, Instrument, probabilities
from .errors import RetainedCycleError, ValidationError
from .graphs import (
    OBSERVED,
    UNOBSERVED,
    DirectedCausalGraph,
    DirectedEdge,
    retained_acyclic,
    gadget_edge_ids,
    post_vertex,
    pre_vertex,
)

OK = "ok"
FAIL = "fail"
ZERO_SUCCESS_TOL = 1e-12
FAMILY_EDGE_LIMIT = 10


@dataclass(frozen=True)
class TeleportProtocol:
    """Post-selected teleportation: ``Tr_AB[(povm ⊗ I)(rho_A ⊗ state)] = success * rho_C``.

    ``povm`` acts on ``A ⊗ B`` and ``state`` on ``B ⊗ C`` with ``dim A = dim C = d``.
    """

    d: int
    d_b: int
    povm: np.ndarray = field(repr=False, compare=False)
    state: np.ndarray = field(repr=False, compare=False)
    success: float

    def __post_init__(self) -> None:
        side = self.d * self.d_b
        povm = np.asarray(self.povm, dtype=complex)
        state = np.asarray(self.state, dtype=complex)
        if povm.shape != (side, side) or state.shape != (side, side):
            raise ValidationError(f"protocol operators must be {side}x{side}")
        if not 0 < self.success <= 1:
            raise ValidationError("success probability must lie in (0, 1]")
        object.__setattr__(self, "povm", povm)
        object.__setattr__(self, "state", state)
        res = self.residual()
        if res > 1e-10:
            raise ValidationError(f"protocol does not teleport (residual {res:.3g})")

    def output(self, rho: np.ndarray) -> np.ndarray:
        """``Tr_AB[(povm ⊗ I_C)(rho_A ⊗ state_BC)]``."""
        d, db = self.d, self.d_b
        p = self.povm.reshape(d, db, d, db)
        s = self.state.reshape(db, d, db, d)
        return np.einsum("abxy,xa,ycbe->ce", p, rho, s)

    def residual(self) -> float:
        worst = 0.0
        for i in range(self.d):
            for j in range(self.d):
                unit = np.zeros((self.d, self.d), dtype=complex)
                unit[i, j] = 1.0
                worst = max(worst, float(np.abs(self.output(unit) - self.success * unit).max()))
        return worst


def bell_protocol(d: int, d_b: int | None = None, twist: np.ndarray | None = None) -> TeleportProtocol:
    """Bell-state protocol with success ``1/d^2``.

    ``d_b > d`` embeds the Bell pair in a larger ``B``; ``twist`` is a unitary on
    ``B`` applied to both the measured and the prepared pair.
    """
    if d < 2:
        raise ValidationError("teleportation needs d >= 2")
    d_b = d if d_b is None else d_b
    if d_b < d:
        raise ValidationError("B must be at least as large as A")
    phi = np.zeros((d, d_b), dtype=complex)
    phi[np.arange(d), np.arange(d)] = 1 / math.sqrt(d)
    if twist is not None:
        phi = phi @ np.asarray(twist, dtype=complex).T
    ab = phi.reshape(-1)
    bc = phi.T.reshape(-1)
    return TeleportProtocol(d, d_b, np.outer(ab, ab.conj()), np.outer(bc, bc.conj()), 1.0 / d**2)


ProtocolFactory = Callable[[int], TeleportProtocol]


@dataclass(frozen=True)
class TeleportModel:
    model: CausalModel
    split: frozenset[str]
    post: frozenset[str]
    pre: frozenset[str]
    protocols: Mapping[str, TeleportProtocol] = field(default_factory=dict, repr=False)

    @property
    def success_bound(self) -> float:
        return math.prod(p.success for p in self.protocols.values())


def _relabel_channel(s: Superoperator, rename_in, rename_out) -> Superoperator:
    return Superoperator(
        tuple((rename_in.get(f, f), d) for f, d in s.in_factors),
        tuple((rename_out.get(f, f), d) for f, d in s.out_factors),
        s.choi,
    )


def build_teleport_model(
    m: CausalModel, split: Iterable[str], protocol: ProtocolFactory = bell_protocol
) -> TeleportModel:
    """Replace every edge in ``split`` by a teleportation gadget."""
    split = frozenset(split)
    g = m.graph
    unknown = split - set(g.edge_ids)
    if unknown:
        raise ValidationError(f"unknown edges {sorted(unknown)}")
    if not retained_acyclic(g, set(g.edge_ids) - split):
        raise RetainedCycleError("retained edges contain a directed cycle")
    vertices = list(g.vertices)
    edges: list[DirectedEdge] = []
    rename_out: dict[str, dict] = {v: {} for v in g.vertex_ids}
    rename_in: dict[str, dict] = {v: {} for v in g.vertex_ids}
    mechs: dict[str, object] = {}
    protocols = {}
    for e in g.edges:
        if e.id not in split:
            edges.append(e)
            continue
        p = protocol(e.dim)
        if p.d != e.dim:
            raise ValidationError(f"protocol dim {p.d} does not match edge {e.id!r}")
        protocols[e.id] = p
        t, r = post_vertex(e.id), pre_vertex(e.id)
        if t in g.vertex_ids or r in g.vertex_ids:
            raise ValidationError(f"gadget vertex for {e.id!r} clashes with an existing vertex")
        ea, eb, ec = gadget_edge_ids(e.id)
        vertices += [(t, OBSERVED), (r, UNOBSERVED)]
        edges += [
            DirectedEdge(ea, e.src, t, e.dim),
            DirectedEdge(eb, r, t, p.d_b),
            DirectedEdge(ec, r, e.dst, e.dim),
        ]
        rename_out[e.src][e.id] = ea
        rename_in[e.dst][e.id] = ec
        ident = np.eye(p.povm.shape[0])
        mechs[t] = Instrument(((ea, e.dim), (eb, p.d_b)), (), (OK, FAIL), (p.povm, ident - p.povm))
        mechs[r] = Superoperator((), ((eb, p.d_b), (ec, e.dim)), p.state)
    for v in g.vertex_ids:
        mech = m.mechanisms[v]
        if isinstance(mech, Instrument):
            # observed out-edges all carry the outcome flag, so only ids change
            mechs[v] = mech.relabeled(rename_in[v], rename_out[v])
        else:
            mechs[v] = _relabel_channel(mech, rename_in[v], rename_out[v])
    graph = DirectedCausalGraph(tuple(vertices), tuple(edges))
    return TeleportModel(
        CausalModel(graph, mechs),
        split,
        frozenset(post_vertex(e) for e in split),
        frozenset(pre_vertex(e) for e in split),
        protocols,
    )


@dataclass(frozen=True)
class ZeroSuccess:
    success_prob: float


@dataclass(frozen=True)
class ConditionalResult:
    success_prob: float
    distribution: Distribution
    normalizer: float


def conditional_probabilities(tm: TeleportModel) -> ConditionalResult | ZeroSuccess:
    """Born-rule distribution of the acyclic model conditioned on every post-selection reading ``ok``."""
    if not tm.model.graph.is_acyclic():
        raise RetainedCycleError("teleportation model must be acyclic")
    joint = probabilities(tm.model)
    if isinstance(joint, Inconsistent):
        return ZeroSuccess(0.0)
    variables = joint.variables
    keep = [i for i, v in enumerate(variables) if v not in tm.post]
    post = [i for i, v in enumerate(variables) if v in tm.post]
    success = 0.0
    cond: dict[tuple, float] = {}
    for x, p in joint.probs.items():
        if all(x[i] == OK for i in post):
            key = tuple(x[i] for i in keep)
            cond[key] = cond.get(key, 0.0) + p
            success += p
    if success <= ZERO_SUCCESS_TOL:
        return ZeroSuccess(success)
    dist = Distribution(tuple(variables[i] for i in keep), {k: v / success for k, v in cond.items()}, success)
    return ConditionalResult(success, dist, joint.normalizer)


@dataclass(frozen=True)
class FamilyReport:
    n_members: int
    max_deviation: float
    flags_consistent: bool
    reference: Distribution | Inconsistent
    members: Mapping[frozenset, ConditionalResult | ZeroSuccess] = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.flags_consistent and self.max_deviation <= 1e-10


def family_members(m: CausalModel) -> list[frozenset[str]]:
    """Split sets whose retained edges are acyclic."""
    ids = m.graph.edge_ids
    out = []
    for k in range(len(ids) + 1):
        for split in itertools.combinations(ids, k):
            if retained_acyclic(m.graph, set(ids) - set(split)):
                out.append(frozenset(split))
    return out


def family_equivalence_check(
    m: CausalModel, budget: int = FAMILY_EDGE_LIMIT, protocol: ProtocolFactory = bell_protocol
) -> FamilyReport:
    """Evaluate every teleportation-graph member against the cyclic probability rule."""
    if len(m.graph.edges) > budget:
        raise ValidationError(f"{len(m.graph.edges)} edges exceed the family budget {budget}")
    reference = probabilities(m)
    members = {}
    worst, flags_ok = 0.0, True
    for split in family_members(m):
        res = conditional_probabilities(build_teleport_model(m, split, protocol))
        members[split] = res
        if isinstance(res, ZeroSuccess) != isinstance(reference, Inconsistent):
            flags_ok = False
            continue
        if isinstance(res, ConditionalResult):
            worst = max(worst, res.distribution.max_deviation(reference))
    return FamilyReport(len(members), worst, flags_ok, reference, members)


def maximal_success_prediction(m: CausalModel, protocol: ProtocolFactory = bell_protocol) -> float:
    """``prod_e success_e * sum_x cycle(E^x)`` for the model with every edge split."""
    ref = probabilities(m)
    total = ref.normalizer
    return math.prod(protocol(e.dim).success for e in m.graph.edges) * total
