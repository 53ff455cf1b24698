"""Causal influence between edge regions of a tensor network.

Two correlation-function measures are provided. ``m_chqy`` normalizes by the
contraction with only the unitary inserted; ``m_operational`` normalizes over
all outcomes of an instrument, which makes it a conditional probability in
the image causal model. ``bridge_check`` evaluates both sides of that
correspondence independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .cm import (
    Detected,
    InterventionSpec,
    NotDetected,
    compare_conditionals,
    conditional_outcomes,
)
from .errors import (
    AllSamplesInconsistentError,
    DimensionMismatchError,
    NonDisjointSetsError,
    NotHermitianError,
    NotSubnormalizedError,
    ValidationError,
    ZeroOperatorError,
)
from .interventions import (
    AnyInstrument,
    RegionInstrument,
    SamplerConfig,
    is_unitary,
    sample_instruments,
    sample_unitaries,
    unitary_insertion,
)
from .linalg import HERMITIAN_TOL
from .mapping import tn_to_cm_general
from .tn import TensorNetwork, insertion_network, pair_transfer

DENOMINATOR_TOL = 1e-12


@dataclass(frozen=True)
class RegionPair:
    a: tuple[str, ...]
    b: tuple[str, ...]

    def __post_init__(self) -> None:
        a, b = tuple(sorted(set(self.a))), tuple(sorted(set(self.b)))
        if not a or not b:
            raise ValidationError("regions must be nonempty")
        if set(a) & set(b):
            raise NonDisjointSetsError("regions must be disjoint")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def check(self, tn: TensorNetwork) -> None:
        for e in self.a + self.b:
            tn.edge(e)

    def dims(self, tn: TensorNetwork) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(tn.edge(e).dim for e in self.a), tuple(tn.edge(e).dim for e in self.b)


@dataclass(frozen=True)
class InstrumentOnRegion(RegionInstrument):
    """Instrument with one Hermitian Kraus operator per outcome."""

    def __post_init__(self) -> None:
        super().__post_init__()
        for ks in self.kraus:
            if len(ks) != 1:
                raise ValidationError("each outcome needs exactly one Kraus operator")
            if np.abs(ks[0] - ks[0].conj().T).max() > HERMITIAN_TOL:
                raise NotHermitianError("Kraus operators must be Hermitian")

    @classmethod
    def from_operators(
        cls, edges: Sequence[str], dims: Sequence[int], ops: Sequence[np.ndarray], labels: Sequence[Hashable] | None = None
    ) -> "InstrumentOnRegion":
        labels = tuple(range(len(ops))) if labels is None else tuple(labels)
        return cls(tuple(edges), tuple(dims), labels, tuple((np.asarray(o, dtype=complex),) for o in ops))

    @property
    def operators(self) -> tuple[np.ndarray, ...]:
        return tuple(ks[0] for ks in self.kraus)


@dataclass(frozen=True)
class DenominatorZero:
    denominator: complex


@dataclass(frozen=True)
class InconsistentPair:
    denominator: float


def complete_instrument(
    o: np.ndarray, edges: Sequence[str] = ("b",), dims: Sequence[int] | None = None
) -> InstrumentOnRegion:
    """Two-outcome instrument ``{O, sqrt(I - O^2)}`` for a Hermitian ``O`` with ``O^2 <= I``."""
    o = np.asarray(o, dtype=complex)
    d = o.shape[0]
    dims = (d,) if dims is None else tuple(dims)
    if np.abs(o - o.conj().T).max() > HERMITIAN_TOL:
        raise NotHermitianError("operator is not Hermitian")
    rest = np.eye(d) - o @ o
    rest = (rest + rest.conj().T) / 2
    if np.linalg.eigvalsh(rest).min() < -HERMITIAN_TOL:
        raise NotSubnormalizedError("O^2 exceeds the identity")
    vals, vecs = np.linalg.eigh(rest)
    comp = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    return InstrumentOnRegion.from_operators(edges, dims, [o, comp])


def _check_ops(tn: TensorNetwork, regions: RegionPair, u: np.ndarray) -> None:
    regions.check(tn)
    d_a = math.prod(regions.dims(tn)[0])
    if np.asarray(u).shape != (d_a, d_a):
        raise DimensionMismatchError(f"unitary shape {np.asarray(u).shape}, region A dim {d_a}")
    if not is_unitary(u):
        raise ValidationError("operator on region A is not unitary")


def _scalar(net) -> complex:
    return complex(net.contract().data)


def m_chqy(
    tn: TensorNetwork,
    regions: RegionPair,
    u: np.ndarray,
    o: np.ndarray,
    placement: Mapping[str, int] | None = None,
) -> float | DenominatorZero:
    """``<L|(U ⊗ O) rho (U ⊗ O)^dagger|L> / <L|(U ⊗ I) rho (U ⊗ I)^dagger|L>``."""
    _check_ops(tn, regions, u)
    o = np.asarray(o, dtype=complex)
    d_b = math.prod(regions.dims(tn)[1])
    if o.shape != (d_b, d_b):
        raise DimensionMismatchError(f"operator shape {o.shape}, region B dim {d_b}")
    if np.abs(o - o.conj().T).max() > HERMITIAN_TOL:
        raise NotHermitianError("operator on region B is not Hermitian")
    if np.linalg.eigvalsh(np.eye(d_b) - o.conj().T @ o).min() < -HERMITIAN_TOL:
        raise NotSubnormalizedError("O^dagger O exceeds the identity")
    ins_u = unitary_insertion("lab-a", regions.a, u)
    ins_o = ("lab-b", regions.b, pair_transfer(o, o.conj().T), ())
    den = _scalar(insertion_network(tn, [ins_u], placement))
    if abs(den) <= DENOMINATOR_TOL:
        return DenominatorZero(den)
    num = _scalar(insertion_network(tn, [ins_u, ins_o], placement))
    return (num / den).real


def outcome_weights(
    tn: TensorNetwork,
    regions: RegionPair,
    u: np.ndarray,
    instrument: AnyInstrument,
    placement: Mapping[str, int] | None = None,
) -> dict[Hashable, float]:
    """Unnormalized ``<L|(U ⊗ O^y) rho (U ⊗ O^y)^dagger|L>`` for every outcome ``y``."""
    _check_ops(tn, regions, u)
    if tuple(instrument.edges) != regions.b:
        raise ValidationError(f"instrument acts on {instrument.edges}, region B is {regions.b}")
    insertions = [unitary_insertion("lab-a", regions.a, u)] + instrument.insertions("lab-b")
    t = insertion_network(tn, insertions, placement).contract()
    t = t.transposed(list(instrument.outcome_axes("lab-b")))
    data = np.asarray(t.data)
    return {instrument.joint_label(idx): complex(data[idx]).real for idx in np.ndindex(*data.shape)}


def operational_table(
    tn: TensorNetwork,
    regions: RegionPair,
    u: np.ndarray,
    instrument: AnyInstrument,
    placement: Mapping[str, int] | None = None,
) -> dict[Hashable, float] | InconsistentPair:
    """``M(U : O^y | O)`` for every outcome ``y``."""
    weights = outcome_weights(tn, regions, u, instrument, placement)
    total = sum(weights.values())
    if abs(total) <= DENOMINATOR_TOL:
        return InconsistentPair(total)
    return {y: w / total for y, w in weights.items()}


def m_operational(
    tn: TensorNetwork,
    regions: RegionPair,
    u: np.ndarray,
    instrument: AnyInstrument,
    y: Hashable,
    placement: Mapping[str, int] | None = None,
) -> float | InconsistentPair:
    if y not in instrument.outcome_labels:
        raise ValidationError(f"unknown outcome {y!r}")
    table = operational_table(tn, regions, u, instrument, placement)
    return table if isinstance(table, InconsistentPair) else table[y]


def sampled_families(
    tn: TensorNetwork, regions: RegionPair, config: SamplerConfig
) -> tuple[dict[str, np.ndarray], dict[str, AnyInstrument]]:
    dims_a, dims_b = regions.dims(tn)
    unitaries = sample_unitaries(math.prod(dims_a), config.n_unitaries, config.seed)
    instruments = sample_instruments(regions.b, dims_b, config)
    return unitaries, instruments


def influence_tables(
    tn: TensorNetwork,
    regions: RegionPair,
    unitaries: Mapping[Hashable, np.ndarray],
    instruments: Mapping[Hashable, AnyInstrument],
    measure: str = "operational",
    placement: Mapping[str, int] | None = None,
) -> dict[tuple, dict | None]:
    """Per (unitary, instrument) label pair, the measure as a function of ``y`` (``None`` if undefined)."""
    out: dict[tuple, dict | None] = {}
    for b, inst in instruments.items():
        for a, u in unitaries.items():
            if measure == "operational":
                table = operational_table(tn, regions, u, inst, placement)
                out[(a, b)] = None if isinstance(table, InconsistentPair) else table
            elif measure == "chqy":
                if not isinstance(inst, RegionInstrument) or any(len(ks) != 1 for ks in inst.kraus):
                    raise ValidationError("the CHQY measure needs single-Kraus joint instruments")
                row = {}
                for y, ks in zip(inst.labels, inst.kraus):
                    val = m_chqy(tn, regions, u, ks[0], placement)
                    if isinstance(val, DenominatorZero):
                        row = None
                        break
                    row[y] = val
                out[(a, b)] = row
            else:
                raise ValidationError(f"unknown measure {measure!r}")
    return out


def detect_influence(
    tn: TensorNetwork,
    regions: RegionPair,
    config: SamplerConfig = SamplerConfig(),
    measure: str = "operational",
    placement: Mapping[str, int] | None = None,
) -> Detected | NotDetected:
    """Randomized search for a change of the measure under a change of unitary.

    :class:`NotDetected` only means no change was found within the budget.
    """
    regions.check(tn)
    unitaries, instruments = sampled_families(tn, regions, config)
    tables = influence_tables(tn, regions, unitaries, instruments, measure, placement)
    return compare_conditionals(tables, list(unitaries), list(instruments), config.tol)


@dataclass(frozen=True)
class BridgeReport:
    n_samples: int
    max_deviation: float
    inconsistency_agrees: bool
    n_inconsistent: int
    tn_verdict: Detected | NotDetected | None
    cm_verdict: Detected | NotDetected | None
    marked: frozenset[str] = frozenset()
    alphas: Mapping[str, float] = field(default_factory=dict)
    note: str = ""

    @property
    def verdicts_agree(self) -> bool:
        if self.tn_verdict is None or self.cm_verdict is None:
            return self.tn_verdict is None and self.cm_verdict is None
        return type(self.tn_verdict) is type(self.cm_verdict)

    @property
    def ok(self) -> bool:
        return self.max_deviation <= 1e-9 and self.inconsistency_agrees and self.verdicts_agree


def bridge_check(
    tn: TensorNetwork,
    d: Mapping[str, int],
    regions: RegionPair,
    config: SamplerConfig = SamplerConfig(),
) -> BridgeReport:
    """Compare ``M(U : O^y | O)`` on the network with ``P(y | a, b)`` on its generalized image model.

    Operators sit on the copy at each edge's source under ``d``, which is
    where the model inserts its interventions.
    """
    regions.check(tn)
    placement = dict(d)
    unitaries, instruments = sampled_families(tn, regions, config)
    tn_tables = influence_tables(tn, regions, unitaries, instruments, "operational", placement)
    try:
        tn_verdict = compare_conditionals(tn_tables, list(unitaries), list(instruments), config.tol)
    except AllSamplesInconsistentError:
        tn_verdict = None
    try:
        result = tn_to_cm_general(tn, d)
    except ZeroOperatorError as exc:
        n_bad = sum(1 for v in tn_tables.values() if v is None)
        return BridgeReport(
            len(tn_tables), 0.0, n_bad == len(tn_tables), n_bad, tn_verdict, None, note=f"model side: {exc}"
        )
    spec = InterventionSpec(regions.a, regions.b, unitaries, instruments)
    cm_tables = conditional_outcomes(result.model, spec)
    try:
        cm_verdict = compare_conditionals(cm_tables, list(unitaries), list(instruments), config.tol)
    except AllSamplesInconsistentError:
        cm_verdict = None
    worst, agree, n_bad = 0.0, True, 0
    for key, tn_row in tn_tables.items():
        cm_row = cm_tables[key]
        if (tn_row is None) != (cm_row is None):
            agree = False
            continue
        if tn_row is None:
            n_bad += 1
            continue
        for y, p in tn_row.items():
            worst = max(worst, abs(p - cm_row[y]))
    return BridgeReport(
        len(tn_tables), worst, agree, n_bad, tn_verdict, cm_verdict, result.marked, dict(result.alphas)
    )


def transposed_placement(tn: TensorNetwork, placement: Mapping[str, int] | None, edges: Sequence[str]) -> dict[str, int]:
    """Placement with the copies of ``edges`` swapped."""
    out = {e.id: 0 for e in tn.edges}
    out.update(placement or {})
    for e in edges:
        out[e] = 1 - out[e]
    return out
