"""Unitaries and instruments acting on edge regions, and their seeded samplers.

Shared by signalling (causal models) and influence (tensor networks). Region
operators act on the composite space of the region's edges in sorted id order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import unitary_group

from .errors import DimensionMismatchError, NotHermitianError, ValidationError
from .linalg import HERMITIAN_TOL, psd_sqrt
from .tn import kraus_transfer, pair_transfer

Insertion = tuple[Hashable, tuple[str, ...], np.ndarray, tuple[tuple[Hashable, int], ...]]


def is_unitary(u: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    u = np.asarray(u)
    return u.shape[0] == u.shape[1] and bool(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() <= tol)


@dataclass(frozen=True)
class RegionInstrument:
    """Instrument on a region: ``kraus[y]`` lists the Kraus operators of outcome ``labels[y]``."""

    edges: tuple[str, ...]
    dims: tuple[int, ...]
    labels: tuple[Hashable, ...]
    kraus: tuple[tuple[np.ndarray, ...], ...] = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        order = sorted(range(len(self.edges)), key=lambda i: self.edges[i])
        if list(order) != list(range(len(self.edges))):
            raise ValidationError("region edges must be given in sorted order")
        if len(self.labels) != len(self.kraus) or not self.labels:
            raise ValidationError("one Kraus list per outcome label is required")
        d = self.dim
        kraus = tuple(tuple(np.asarray(k, dtype=complex) for k in ks) for ks in self.kraus)
        total = np.zeros((d, d), dtype=complex)
        for ks in kraus:
            for k in ks:
                if k.shape != (d, d):
                    raise DimensionMismatchError(f"Kraus operator shape {k.shape}, region dim {d}")
                total += k.conj().T @ k
        if np.abs(total - np.eye(d)).max() > HERMITIAN_TOL:
            raise ValidationError("instrument elements do not sum to a trace-preserving map")
        object.__setattr__(self, "kraus", kraus)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def outcome_labels(self) -> tuple[Hashable, ...]:
        return self.labels

    def transfer(self) -> np.ndarray:
        return np.stack([kraus_transfer(ks) for ks in self.kraus])

    def insertions(self, key: Hashable) -> list[Insertion]:
        return [(key, self.edges, self.transfer(), (((key, "y"), len(self.labels)),))]

    def outcome_axes(self, key: Hashable) -> tuple[Hashable, ...]:
        return ((key, "y"),)

    def joint_label(self, indices: Sequence[int]) -> Hashable:
        return self.labels[indices[0]]

    def transposed(self) -> "RegionInstrument":
        return RegionInstrument(self.edges, self.dims, self.labels, tuple(tuple(k.T for k in ks) for ks in self.kraus))

    def povm(self) -> list[np.ndarray]:
        return [sum(k.conj().T @ k for k in ks) for ks in self.kraus]


@dataclass(frozen=True)
class ProductInstrument:
    """Independent instruments on disjoint sub-regions; outcomes are label tuples."""

    parts: tuple[RegionInstrument, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for p in self.parts:
            if seen & set(p.edges):
                raise ValidationError("product instrument parts must be disjoint")
            seen |= set(p.edges)

    @property
    def edges(self) -> tuple[str, ...]:
        return tuple(sorted(e for p in self.parts for e in p.edges))

    @property
    def outcome_labels(self) -> tuple[Hashable, ...]:
        return tuple(itertools.product(*(p.labels for p in self.parts)))

    def insertions(self, key: Hashable) -> list[Insertion]:
        out = []
        for i, p in enumerate(self.parts):
            out += p.insertions((key, i))
        return out

    def outcome_axes(self, key: Hashable) -> tuple[Hashable, ...]:
        return tuple(((key, i), "y") for i in range(len(self.parts)))

    def joint_label(self, indices: Sequence[int]) -> Hashable:
        return tuple(p.labels[i] for p, i in zip(self.parts, indices))

    def transposed(self) -> "ProductInstrument":
        return ProductInstrument(tuple(p.transposed() for p in self.parts))


AnyInstrument = RegionInstrument | ProductInstrument


def unitary_insertion(key: Hashable, edges: Sequence[str], u: np.ndarray) -> Insertion:
    u = np.asarray(u, dtype=complex)
    return (key, tuple(edges), pair_transfer(u, u.conj().T), ())


def hermitian_kraus_instrument(
    edges: Sequence[str], dims: Sequence[int], povm: Sequence[np.ndarray], labels: Sequence[Hashable] | None = None
) -> RegionInstrument:
    """Instrument whose outcome ``y`` has the single Kraus operator ``sqrt(povm[y])``."""
    labels = tuple(range(len(povm))) if labels is None else tuple(labels)
    kraus = []
    for m in povm:
        m = np.asarray(m, dtype=complex)
        if np.abs(m - m.conj().T).max() > HERMITIAN_TOL:
            raise NotHermitianError("POVM element is not Hermitian")
        kraus.append((psd_sqrt(m),))
    return RegionInstrument(tuple(edges), tuple(dims), labels, tuple(kraus))


def computational_readout(edges: Sequence[str], dims: Sequence[int]) -> RegionInstrument:
    d = math.prod(dims)
    povm = [np.diag(np.eye(d)[i]) for i in range(d)]
    return hermitian_kraus_instrument(edges, dims, povm)


def shift(d: int) -> np.ndarray:
    return np.roll(np.eye(d), 1, axis=0)


def clock(d: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    return unitary_group.rvs(d, random_state=rng)


@dataclass(frozen=True)
class SamplerConfig:
    """Budget for randomized searches over interventions.

    The unitary pool starts with identity, shift and clock, then Haar draws.
    The instrument pool starts with the computational readout, then draws
    random Hermitian-Kraus instruments from Haar isometries.
    """

    seed: int = 0
    n_unitaries: int = 8
    n_instruments: int = 4
    n_outcomes: int = 2
    tol: float = 1e-9
    product_instruments: bool = False

    def __post_init__(self) -> None:
        if self.n_unitaries < 1 or self.n_instruments < 1:
            raise ValidationError("sampling budget must be at least one")
        if self.n_outcomes < 1:
            raise ValidationError("instruments need at least one outcome")

    @property
    def n_samples(self) -> int:
        return self.n_unitaries * self.n_instruments


def sample_unitaries(d: int, n: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 1])
    fixed = [("I", np.eye(d, dtype=complex)), ("X", shift(d)), ("Z", clock(d))]
    out = dict(fixed[: min(n, 3 if d > 1 else 1)])
    i = 0
    while len(out) < n:
        out[f"haar{i}"] = haar_unitary(d, rng)
        i += 1
    return out


def random_povm(d: int, n_outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    iso = haar_unitary(d * n_outcomes, rng)[:, :d].reshape(n_outcomes, d, d)
    return [k.conj().T @ k for k in iso]


def sample_instruments(
    edges: Sequence[str], dims: Sequence[int], config: SamplerConfig
) -> dict[str, AnyInstrument]:
    """Instrument pool on a region; per-edge product instruments when requested."""
    rng = np.random.default_rng([config.seed, 2])
    edges = tuple(edges)
    dims = tuple(dims)

    def one(sub_edges, sub_dims, first: bool) -> RegionInstrument:
        d = math.prod(sub_dims)
        if first:
            return computational_readout(sub_edges, sub_dims)
        return hermitian_kraus_instrument(sub_edges, sub_dims, random_povm(d, config.n_outcomes, rng))

    out: dict[str, AnyInstrument] = {}
    for i in range(config.n_instruments):
        name = "readout" if i == 0 else f"random{i - 1}"
        if config.product_instruments:
            out[name] = ProductInstrument(tuple(one((e,), (d,), i == 0) for e, d in zip(edges, dims)))
        else:
            out[name] = one(edges, dims, i == 0)
    return out
