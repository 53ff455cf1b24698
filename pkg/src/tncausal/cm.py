"""Quantum causal models on possibly cyclic graphs.

Unobserved vertices carry channels, observed vertices carry measure-and-
reprepare instruments. Probabilities follow the self-cycle rule: every edge's
output is fed back into the isomorphic input by a basis trace, and the
resulting weights are normalized over joint outcomes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence, Union

import numpy as np

from .choi import IN, OUT, Superoperator, cj, is_cptp, tensor_maps
from .errors import (
    AllSamplesInconsistentError,
    DimensionMismatchError,
    NonDisjointSetsError,
    NotPSDError,
    UnknownFactorError,
    ValidationError,
)
from .graphs import OBSERVED, DirectedCausalGraph
from .interventions import (
    AnyInstrument,
    SamplerConfig,
    is_unitary,
    sample_instruments,
    sample_unitaries,
    unitary_insertion,
)
from .linalg import HERMITIAN_TOL, Factor, SquareOperator
from .tn import DoubledNetwork, DoubledNode

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Instrument:
    """Measure-and-reprepare instrument: outcome ``x`` applies ``povm[x]`` and writes ``|x>`` on every out-edge."""

    in_factors: tuple[Factor, ...]
    out_factors: tuple[Factor, ...]
    labels: tuple[Hashable, ...]
    povm: tuple[np.ndarray, ...] = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        ins = tuple((f, int(d)) for f, d in self.in_factors)
        outs = tuple((f, int(d)) for f, d in self.out_factors)
        object.__setattr__(self, "in_factors", ins)
        object.__setattr__(self, "out_factors", outs)
        object.__setattr__(self, "labels", tuple(self.labels))
        n = len(self.labels)
        if n == 0 or len(self.povm) != n:
            raise ValidationError("one POVM element per outcome label is required")
        if len(set(self.labels)) != n:
            raise ValidationError("outcome labels must be distinct")
        for f, d in outs:
            if d != n:
                raise DimensionMismatchError(f"out-edge {f!r} has dim {d}, expected outcome count {n}")
        d_in = self.d_in
        povm = tuple(np.asarray(m, dtype=complex).reshape(d_in, d_in) for m in self.povm)
        total = np.zeros((d_in, d_in), dtype=complex)
        for m in povm:
            if np.abs(m - m.conj().T).max() > HERMITIAN_TOL or np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -HERMITIAN_TOL:
                raise NotPSDError("POVM element is not PSD")
            total += m
        if np.abs(total - np.eye(d_in)).max() > HERMITIAN_TOL:
            raise ValidationError("POVM elements do not sum to the identity")
        object.__setattr__(self, "povm", povm)

    @property
    def d_in(self) -> int:
        return math.prod(d for _, d in self.in_factors)

    @property
    def d_out(self) -> int:
        return math.prod(d for _, d in self.out_factors)

    def element(self, index: int) -> Superoperator:
        flag = np.zeros(self.d_out, dtype=complex)
        flag[sum(index * len(self.labels) ** p for p in range(len(self.out_factors)))] = 1.0
        prepared = np.outer(flag, flag)
        m = self.povm[index]
        return cj(
            lambda rho: np.trace(m @ rho) * prepared,
            self.d_in,
            self.d_out,
            self.in_factors,
            self.out_factors,
            check_linear=False,
        )

    def elements(self) -> list[Superoperator]:
        return [self.element(i) for i in range(len(self.labels))]

    def marginal(self) -> Superoperator:
        out = self.element(0)
        for i in range(1, len(self.labels)):
            out = out + self.element(i)
        return out

    def relabeled(self, rename_in: Mapping[Hashable, Hashable], rename_out: Mapping[Hashable, Hashable]) -> "Instrument":
        """Rename edge factors and restore sorted input order."""
        ins = tuple((rename_in.get(f, f), d) for f, d in self.in_factors)
        order = sorted(range(len(ins)), key=lambda i: str(ins[i][0]))
        povm = []
        for m in self.povm:
            op = SquareOperator(ins, m).permuted([ins[i][0] for i in order])
            povm.append(op.matrix)
        outs = tuple(sorted(((rename_out.get(f, f), d) for f, d in self.out_factors), key=lambda f: str(f[0])))
        return Instrument(tuple(ins[i] for i in order), outs, self.labels, tuple(povm))


Mechanism = Union[Superoperator, Instrument]


def _sorted_factors(edges) -> tuple[Factor, ...]:
    return tuple((e.id, e.dim) for e in sorted(edges, key=lambda e: e.id))


@dataclass(frozen=True)
class CausalModel:
    graph: DirectedCausalGraph
    mechanisms: Mapping[str, Mechanism] = field(repr=False)

    def __post_init__(self) -> None:
        g = self.graph
        missing = set(g.vertex_ids) - set(self.mechanisms)
        extra = set(self.mechanisms) - set(g.vertex_ids)
        if missing or extra:
            raise UnknownFactorError(f"mechanisms missing for {sorted(missing)}, unknown vertices {sorted(extra)}")
        mechs: dict[str, Mechanism] = {}
        for v in g.vertex_ids:
            mech = self.mechanisms[v]
            ins = _sorted_factors(g.in_edges(v))
            outs = _sorted_factors(g.out_edges(v))
            if g.kind(v) == OBSERVED:
                if not isinstance(mech, Instrument):
                    raise ValidationError(f"observed vertex {v!r} needs an instrument")
                mech = _reorder_instrument(mech, ins, outs, v)
            else:
                if not isinstance(mech, Superoperator):
                    raise ValidationError(f"unobserved vertex {v!r} needs a channel")
                mech = _reorder_channel(mech, ins, outs, v)
                report = is_cptp(mech)
                if not (report.cp and report.tp):
                    raise ValidationError(f"channel at {v!r} is not CPTP (tp residual {report.tp_residual:.3g})")
            mechs[v] = mech
        object.__setattr__(self, "mechanisms", mechs)

    @property
    def observed(self) -> tuple[str, ...]:
        return self.graph.observed

    @property
    def edge_dim_total(self) -> int:
        return math.prod(e.dim for e in self.graph.edges)

    def channel(self, v: str) -> Superoperator:
        mech = self.mechanisms[v]
        return mech.marginal() if isinstance(mech, Instrument) else mech

    def outcome_space(self) -> list[tuple[Hashable, ...]]:
        """Joint outcomes in lexicographic observed-vertex order."""
        return list(itertools.product(*(self.mechanisms[v].labels for v in self.observed)))


def _reorder_channel(s: Superoperator, ins, outs, v) -> Superoperator:
    want_in = [f for f, _ in ins]
    want_out = [f for f, _ in outs]
    if sorted(map(str, s.in_ids)) != sorted(want_in) or sorted(map(str, s.out_ids)) != sorted(want_out):
        raise UnknownFactorError(
            f"channel at {v!r} acts {list(s.in_ids)} -> {list(s.out_ids)}, edges are {want_in} -> {want_out}"
        )
    s = s.reordered(want_in, want_out)
    if s.in_factors != ins or s.out_factors != outs:
        raise DimensionMismatchError(f"channel dims at {v!r} do not match edge dims")
    return s


def _reorder_instrument(m: Instrument, ins, outs, v) -> Instrument:
    if m.in_factors != ins or m.out_factors != outs:
        raise UnknownFactorError(f"instrument at {v!r} must act on its sorted in-edges and out-edges")
    return m


@dataclass(frozen=True)
class Distribution:
    """``probs[x]`` over joint outcomes ``x`` ordered like ``variables``."""

    variables: tuple[Hashable, ...]
    probs: Mapping[tuple, float]
    normalizer: float

    def marginal(self, keep: Sequence[Hashable]) -> "Distribution":
        idx = [self.variables.index(k) for k in keep]
        out: dict[tuple, float] = {}
        for x, p in self.probs.items():
            key = tuple(x[i] for i in idx)
            out[key] = out.get(key, 0.0) + p
        return Distribution(tuple(keep), out, self.normalizer)

    def max_deviation(self, other: "Distribution") -> float:
        keys = set(self.probs) | set(other.probs)
        return max((abs(self.probs.get(k, 0.0) - other.probs.get(k, 0.0)) for k in keys), default=0.0)


@dataclass(frozen=True)
class Inconsistent:
    normalizer: float


@dataclass(frozen=True)
class InconsistentIntervention:
    a_label: Hashable
    b_label: Hashable
    normalizer: float


# ---------------------------------------------------------------------------
# self-cycles and total maps


def self_cycle(s: Superoperator, loop_pairs: Sequence[tuple[Hashable, Hashable]]) -> Superoperator:
    """Feed output factor ``o`` back into input factor ``i`` for every pair ``(i, o)``.

    The Choi matrix of the result is ``prod(d) * sum_{k,l} C[k r, k s; l r', l s']``.
    """
    ins, outs = list(s.in_ids), list(s.out_ids)
    n_in, n = len(ins), len(ins) + len(outs)
    used_in, used_out = set(), set()
    ket = list(range(n))
    bra = list(range(n, 2 * n))
    scale = 1.0
    for fi, fo in loop_pairs:
        if fi not in ins or fo not in outs:
            raise UnknownFactorError(f"no input {fi!r} or output {fo!r}")
        if fi in used_in or fo in used_out:
            raise ValidationError("each factor may be looped once")
        used_in.add(fi)
        used_out.add(fo)
        a, b = ins.index(fi), n_in + outs.index(fo)
        da, db = s.in_factors[a][1], s.out_factors[b - n_in][1]
        if da != db:
            raise DimensionMismatchError(f"loop {fi!r}->{fo!r} joins dims {da} and {db}")
        ket[b] = ket[a]
        bra[b] = bra[a]
        scale *= da
    keep_in = [i for i, f in enumerate(ins) if f not in used_in]
    keep_out = [n_in + i for i, f in enumerate(outs) if f not in used_out]
    keep = keep_in + keep_out
    out_labels = [ket[i] for i in keep] + [bra[i] for i in keep]
    t = np.einsum(s.choi_tensor(), ket + bra, out_labels)
    new_in = tuple(s.in_factors[i] for i in keep_in)
    new_out = tuple(s.out_factors[i - n_in] for i in keep_out)
    side = math.prod(d for _, d in new_in + new_out)
    return Superoperator(new_in, new_out, scale * np.asarray(t).reshape(side, side))


def cycle_value(s: Superoperator) -> complex:
    """Self-cycle over every factor of a map whose inputs and outputs carry the same ids."""
    if sorted(map(str, s.in_ids)) != sorted(map(str, s.out_ids)):
        raise ValidationError("full cycle needs matching input and output factors")
    result = self_cycle(s, [(f, f) for f in s.in_ids])
    return complex(result.choi.reshape(-1)[0])


@dataclass(frozen=True)
class TotalMapFamily:
    by_outcome: Mapping[tuple, Superoperator]
    marginal: Superoperator


def total_maps(m: CausalModel) -> TotalMapFamily:
    """Tensor product of all mechanisms, with inputs and outputs in sorted edge order."""
    observed = m.observed
    edge_ids = sorted(m.graph.edge_ids)

    def assemble(choice: Mapping[str, Superoperator]) -> Superoperator:
        acc = None
        for v in m.graph.vertex_ids:
            s = choice[v]
            acc = s if acc is None else tensor_maps(acc, s)
        return acc.reordered(edge_ids, edge_ids)

    base = {v: m.mechanisms[v] for v in m.graph.vertex_ids if v not in observed}
    by_outcome = {}
    for x in m.outcome_space():
        choice = dict(base)
        for v, label in zip(observed, x):
            inst = m.mechanisms[v]
            choice[v] = inst.element(inst.labels.index(label))
        by_outcome[tuple(x)] = assemble(choice)
    marginal = assemble({v: m.channel(v) for v in m.graph.vertex_ids})
    return TotalMapFamily(by_outcome, marginal)


# ---------------------------------------------------------------------------
# network evaluation


def _vertex_node(m: CausalModel, v: str) -> DoubledNode:
    mech = m.mechanisms[v]
    if isinstance(mech, Instrument):
        elems = [e.choi_tensor() for e in mech.elements()]
        legs = tuple(((IN, f), d) for f, d in mech.in_factors) + tuple(((OUT, f), d) for f, d in mech.out_factors)
        return DoubledNode(legs, np.stack(elems), ((("x", v), len(mech.labels)),))
    legs = tuple(((IN, f), d) for f, d in mech.in_factors) + tuple(((OUT, f), d) for f, d in mech.out_factors)
    return DoubledNode(legs, mech.choi_tensor())


def edge_ports(m: CausalModel, edge_id: str) -> tuple[tuple, tuple]:
    """``(source out-port, target in-port)`` of an edge; insertions sit after the source."""
    e = m.graph.edge(edge_id)
    return (e.src, (OUT, e.id)), (e.dst, (IN, e.id))


def model_network(m: CausalModel) -> DoubledNetwork:
    nodes = {v: _vertex_node(m, v) for v in m.graph.vertex_ids}
    links = tuple(edge_ports(m, e.id) for e in m.graph.edges)
    return DoubledNetwork(nodes, links)


def _splice_all(net: DoubledNetwork, m: CausalModel, insertions) -> DoubledNetwork:
    for key, edges, transfer, outcomes in insertions:
        net = net.splice(key, [edge_ports(m, e) for e in edges], transfer, outcomes)
    return net


def cycle_weights(m: CausalModel, insertions=(), extra_axes: Sequence[Hashable] = ()) -> np.ndarray:
    """``cycle(E^x)`` for every joint outcome, axes ordered observed vertices then ``extra_axes``."""
    net = _splice_all(model_network(m), m, insertions)
    t = net.contract()
    order = [("x", v) for v in m.observed] + list(extra_axes)
    t = t.transposed(order) if order else t
    return m.edge_dim_total * np.asarray(t.data)


def _real(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    if np.abs(values.imag).max(initial=0.0) > 1e-9 * scale:
        raise ValidationError("cycle weights have a non-negligible imaginary part")
    return values.real


def probabilities(m: CausalModel) -> Distribution | Inconsistent:
    """``P(x) = cycle(E^x) / sum_x cycle(E^x)``, or :class:`Inconsistent`."""
    weights = _real(cycle_weights(m))
    total = float(weights.sum())
    if abs(total) <= ZERO_TOL:
        return Inconsistent(total)
    labels = [m.mechanisms[v].labels for v in m.observed]
    probs = {}
    for idx in itertools.product(*(range(len(ls)) for ls in labels)):
        x = tuple(ls[i] for ls, i in zip(labels, idx))
        probs[x] = float(weights[idx]) / total
    return Distribution(m.observed, probs, total)


# ---------------------------------------------------------------------------
# interventions and signalling


@dataclass(frozen=True)
class InterventionSpec:
    lab_a: tuple[str, ...]
    lab_b: tuple[str, ...]
    a_family: Mapping[Hashable, np.ndarray] = field(repr=False)
    b_family: Mapping[Hashable, AnyInstrument] = field(repr=False)

    def __post_init__(self) -> None:
        a, b = tuple(sorted(self.lab_a)), tuple(sorted(self.lab_b))
        if set(a) & set(b):
            raise NonDisjointSetsError("labs must be disjoint")
        if not a or not b:
            raise ValidationError("labs must be nonempty")
        object.__setattr__(self, "lab_a", a)
        object.__setattr__(self, "lab_b", b)
        for label, u in self.a_family.items():
            if not is_unitary(u):
                raise ValidationError(f"intervention {label!r} is not unitary")
        for label, inst in self.b_family.items():
            if tuple(inst.edges) != b:
                raise ValidationError(f"instrument {label!r} acts on {inst.edges}, lab is {b}")


def _check_labs(m: CausalModel, spec: InterventionSpec) -> None:
    for e in spec.lab_a + spec.lab_b:
        m.graph.edge(e)
    d_a = math.prod(m.graph.edge(e).dim for e in spec.lab_a)
    for label, u in spec.a_family.items():
        if np.asarray(u).shape != (d_a, d_a):
            raise DimensionMismatchError(f"unitary {label!r} does not act on lab dim {d_a}")
    for label, inst in spec.b_family.items():
        dims = tuple(m.graph.edge(e).dim for e in inst.edges)
        parts = getattr(inst, "parts", (inst,))
        for p in parts:
            if tuple(m.graph.edge(e).dim for e in p.edges) != tuple(p.dims):
                raise DimensionMismatchError(f"instrument {label!r} dims do not match lab edges {dims}")


def intervention_weights(m: CausalModel, u: np.ndarray, lab_a: Sequence[str], inst: AnyInstrument) -> np.ndarray:
    """``cycle`` weights with axes observed outcomes then instrument outcomes."""
    insertions = [unitary_insertion("lab-a", lab_a, u)] + inst.insertions("lab-b")
    weights = cycle_weights(m, insertions, inst.outcome_axes("lab-b"))
    return _real(weights)


def intervene(
    m: CausalModel, spec: InterventionSpec, a_label: Hashable, b_label: Hashable
) -> Distribution | InconsistentIntervention:
    """``P(x, y | a, b)`` with the unitary on lab A and the instrument on lab B."""
    _check_labs(m, spec)
    if a_label not in spec.a_family or b_label not in spec.b_family:
        raise UnknownFactorError(f"unknown intervention labels {a_label!r}, {b_label!r}")
    inst = spec.b_family[b_label]
    weights = intervention_weights(m, spec.a_family[a_label], spec.lab_a, inst)
    total = float(weights.sum())
    if abs(total) <= ZERO_TOL:
        return InconsistentIntervention(a_label, b_label, total)
    labels = [m.mechanisms[v].labels for v in m.observed]
    n_obs = len(labels)
    probs = {}
    for idx in np.ndindex(*weights.shape):
        x = tuple(ls[i] for ls, i in zip(labels, idx[:n_obs]))
        y = inst.joint_label(idx[n_obs:])
        probs[x + (y,)] = float(weights[idx]) / total
    return Distribution(m.observed + ("y",), probs, total)


@dataclass(frozen=True)
class Witness:
    a: Hashable
    a_prime: Hashable
    b: Hashable
    y: Hashable
    deviation: float


@dataclass(frozen=True)
class Detected:
    witness: Witness
    n_inconsistent: int = 0


@dataclass(frozen=True)
class NotDetected:
    n_samples: int
    n_inconsistent: int = 0
    max_deviation: float = 0.0


def signalling_spec(m: CausalModel, lab_a: Sequence[str], lab_b: Sequence[str], config: SamplerConfig) -> InterventionSpec:
    """Sampled intervention families on the two labs."""
    lab_a, lab_b = sorted(lab_a), sorted(lab_b)
    d_a = math.prod(m.graph.edge(e).dim for e in lab_a)
    dims_b = [m.graph.edge(e).dim for e in lab_b]
    return InterventionSpec(
        tuple(lab_a),
        tuple(lab_b),
        sample_unitaries(d_a, config.n_unitaries, config.seed),
        sample_instruments(lab_b, dims_b, config),
    )


def compare_conditionals(
    conditionals: Mapping[tuple[Hashable, Hashable], Mapping[Hashable, float] | None],
    a_labels: Sequence[Hashable],
    b_labels: Sequence[Hashable],
    tol: float,
) -> Detected | NotDetected:
    """Signalling verdict from ``P(y | a, b)`` tables (``None`` marks an inconsistent pair)."""
    n_bad = sum(1 for v in conditionals.values() if v is None)
    if n_bad == len(conditionals):
        raise AllSamplesInconsistentError("every sampled intervention was inconsistent")
    worst = 0.0
    for b in b_labels:
        ref_label = next((a for a in a_labels if conditionals[(a, b)] is not None), None)
        if ref_label is None:
            continue
        ref = conditionals[(ref_label, b)]
        for a in a_labels:
            cur = conditionals[(a, b)]
            if cur is None or a == ref_label:
                continue
            for y in ref:
                dev = abs(cur[y] - ref[y])
                worst = max(worst, dev)
                if dev > tol:
                    return Detected(Witness(ref_label, a, b, y, dev), n_bad)
    return NotDetected(len(conditionals), n_bad, worst)


def conditional_outcomes(m: CausalModel, spec: InterventionSpec) -> dict[tuple, dict | None]:
    """``P(y | a, b)`` with observed outcomes marginalized, for every label pair."""
    out = {}
    for b in spec.b_family:
        for a in spec.a_family:
            dist = intervene(m, spec, a, b)
            out[(a, b)] = None if isinstance(dist, InconsistentIntervention) else dist.marginal(["y"]).probs
            if out[(a, b)] is not None:
                out[(a, b)] = {k[0]: v for k, v in out[(a, b)].items()}
    return out


def detect_signalling(
    m: CausalModel,
    lab_a: Sequence[str] | None = None,
    lab_b: Sequence[str] | None = None,
    config: SamplerConfig = SamplerConfig(),
    spec: InterventionSpec | None = None,
) -> Detected | NotDetected:
    """Search for ``P(y | a, b) != P(y | a', b)`` over sampled or supplied interventions.

    :class:`NotDetected` only means no difference was found within the budget.
    """
    if spec is None:
        if lab_a is None or lab_b is None:
            raise ValidationError("labs are required when no intervention spec is given")
        spec = signalling_spec(m, lab_a, lab_b, config)
    conditionals = conditional_outcomes(m, spec)
    return compare_conditionals(conditionals, list(spec.a_family), list(spec.b_family), config.tol)
