"""Choi–Jamiołkowski transforms and CPTP checks.

A :class:`Superoperator` stores the Choi operator
``(E ⊗ id)(|Φ⁺⟩⟨Φ⁺|)`` on ``in' ⊗ out`` built from the *normalized* maximally
entangled state, so trace-preserving maps have unit-trace Choi operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .errors import DimensionMismatchError, NonlinearMapError, ValidationError
from .linalg import HERMITIAN_TOL, DenseTensor, Factor, SquareOperator, partial_trace

IN = "in"
OUT = "out"


def _factors(factors: Sequence[Factor] | None, dim: int, tag: str) -> tuple[Factor, ...]:
    if factors is None:
        return ((tag, dim),) if dim > 1 else ()
    factors = tuple((f, int(d)) for f, d in factors)
    if math.prod(d for _, d in factors) != dim:
        raise DimensionMismatchError(f"{tag} factors do not multiply to {dim}")
    return factors


@dataclass(frozen=True)
class Superoperator:
    """Linear map from ``in_factors`` to ``out_factors`` held as its Choi matrix.

    The Choi matrix is indexed row-major by the input factors followed by the
    output factors. The same id may appear on both sides (a self-loop edge).
    """

    in_factors: tuple[Factor, ...]
    out_factors: tuple[Factor, ...]
    choi: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        ins = tuple((f, int(d)) for f, d in self.in_factors)
        outs = tuple((f, int(d)) for f, d in self.out_factors)
        side = math.prod(d for _, d in ins) * math.prod(d for _, d in outs)
        choi = np.asarray(self.choi, dtype=complex)
        if choi.shape != (side, side):
            raise DimensionMismatchError(f"choi shape {choi.shape} but side {side}")
        choi = choi.copy()
        choi.setflags(write=False)
        object.__setattr__(self, "in_factors", ins)
        object.__setattr__(self, "out_factors", outs)
        object.__setattr__(self, "choi", choi)

    @property
    def d_in(self) -> int:
        return math.prod(d for _, d in self.in_factors)

    @property
    def d_out(self) -> int:
        return math.prod(d for _, d in self.out_factors)

    @property
    def in_ids(self) -> tuple[Hashable, ...]:
        return tuple(f for f, _ in self.in_factors)

    @property
    def out_ids(self) -> tuple[Hashable, ...]:
        return tuple(f for f, _ in self.out_factors)

    def choi_operator(self) -> SquareOperator:
        """Choi matrix as an operator with factor ids ``("in", f)`` / ``("out", f)``."""
        factors = tuple(((IN, f), d) for f, d in self.in_factors) + tuple(
            ((OUT, f), d) for f, d in self.out_factors
        )
        return SquareOperator(factors, self.choi)

    def choi_tensor(self) -> np.ndarray:
        """Choi matrix with one axis per factor: ``ins, outs, ins, outs``."""
        dims = tuple(d for _, d in self.in_factors) + tuple(d for _, d in self.out_factors)
        return self.choi.reshape(dims + dims)

    def block(self) -> np.ndarray:
        """Choi matrix reshaped to ``(d_in, d_out, d_in, d_out)``."""
        return self.choi.reshape(self.d_in, self.d_out, self.d_in, self.d_out)

    def reordered(self, in_order: Sequence[Hashable], out_order: Sequence[Hashable]) -> "Superoperator":
        """Permute input and output factor lists."""
        ins = list(self.in_ids)
        outs = list(self.out_ids)
        if sorted(map(str, in_order)) != sorted(map(str, ins)) or sorted(map(str, out_order)) != sorted(
            map(str, outs)
        ):
            raise ValidationError("reorder must permute the existing factors")
        n_in, n_out = len(ins), len(outs)
        perm = [ins.index(f) for f in in_order] + [n_in + outs.index(f) for f in out_order]
        n = n_in + n_out
        t = self.choi_tensor().transpose(perm + [p + n for p in perm])
        side = self.d_in * self.d_out
        in_f = tuple(self.in_factors[ins.index(f)] for f in in_order)
        out_f = tuple(self.out_factors[outs.index(f)] for f in out_order)
        return Superoperator(in_f, out_f, t.reshape(side, side))

    def canonical(self) -> "Superoperator":
        return self.reordered(sorted(self.in_ids), sorted(self.out_ids))

    def apply(self, rho: np.ndarray | SquareOperator) -> np.ndarray:
        """Action on an input matrix, returned as a ``d_out x d_in``-side matrix."""
        return cj_inv_apply(self, rho).matrix

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if self.in_factors != other.in_factors or self.out_factors != other.out_factors:
            raise DimensionMismatchError("cannot add maps on different spaces")
        return Superoperator(self.in_factors, self.out_factors, self.choi + other.choi)

    def scaled(self, c: complex) -> "Superoperator":
        return Superoperator(self.in_factors, self.out_factors, c * self.choi)


def cj(
    apply: Callable[[np.ndarray], np.ndarray],
    d_in: int,
    d_out: int,
    in_factors: Sequence[Factor] | None = None,
    out_factors: Sequence[Factor] | None = None,
    check_linear: bool = True,
) -> Superoperator:
    """Choi matrix of the map ``apply`` given on ``d_in x d_in`` matrices."""
    images = np.empty((d_in, d_in, d_out, d_out), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            unit = np.zeros((d_in, d_in), dtype=complex)
            unit[i, j] = 1.0
            out = np.asarray(apply(unit), dtype=complex)
            if out.shape != (d_out, d_out):
                raise DimensionMismatchError(f"map returned shape {out.shape}, expected {(d_out, d_out)}")
            images[i, j] = out
    if check_linear:
        rng = np.random.default_rng(0)
        for _ in range(3):
            coeff = rng.normal(size=(d_in, d_in)) + 1j * rng.normal(size=(d_in, d_in))
            expected = np.einsum("ij,ijab->ab", coeff, images)
            got = np.asarray(apply(coeff), dtype=complex)
            scale = max(1.0, float(np.abs(expected).max(initial=0.0)))
            if np.abs(got - expected).max(initial=0.0) > 1e-9 * scale:
                raise NonlinearMapError("map is not linear on the matrix-unit span")
    block = images.transpose(0, 2, 1, 3) / d_in
    return Superoperator(
        _factors(in_factors, d_in, IN),
        _factors(out_factors, d_out, OUT),
        block.reshape(d_in * d_out, d_in * d_out),
    )


def from_kraus(
    kraus: Sequence[np.ndarray],
    in_factors: Sequence[Factor] | None = None,
    out_factors: Sequence[Factor] | None = None,
) -> Superoperator:
    """Choi matrix of ``rho -> sum_k K rho K†``."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d_out, d_in = kraus[0].shape
    # (K ⊗ I)|Φ⁺> reshaped: vector index (i, o) holds K[o, i] / sqrt(d_in)
    vecs = [k.T.reshape(-1) / math.sqrt(d_in) for k in kraus]
    choi = sum(np.outer(v, v.conj()) for v in vecs)
    return Superoperator(_factors(in_factors, d_in, IN), _factors(out_factors, d_out, OUT), choi)


def from_unitary(u: np.ndarray, factors: Sequence[Factor] | None = None) -> Superoperator:
    return from_kraus([u], factors, factors)


def cj_inv_apply(s: Superoperator, rho: np.ndarray | SquareOperator) -> SquareOperator:
    """``d_in · Tr_in'[(rho^T ⊗ I) choi]``: the map applied to ``rho``."""
    if isinstance(rho, SquareOperator):
        if rho.factors != s.in_factors:
            if sorted(map(str, rho.ids)) != sorted(map(str, s.in_ids)):
                raise DimensionMismatchError("input operator is not on the map's input space")
            rho = rho.permuted(s.in_ids)
        matrix = rho.matrix
    else:
        matrix = np.asarray(rho, dtype=complex)
    if matrix.shape != (s.d_in, s.d_in):
        raise DimensionMismatchError(f"input has shape {matrix.shape}, map expects side {s.d_in}")
    out = s.d_in * np.einsum("ij,iajb->ab", matrix, s.block())
    return SquareOperator(s.out_factors, out)


def cj_inv_pure(psi: DenseTensor | np.ndarray, d_in: int, d_out: int | None = None) -> np.ndarray:
    """``⟨Φ⁺|_{A A'} (· ⊗ |psi⟩_{A' B})`` as a ``d_out x d_in`` matrix.

    ``psi`` is a vector on ``in' ⊗ out`` (input index major).
    """
    vec = psi.vector() if isinstance(psi, DenseTensor) else np.asarray(psi, dtype=complex).reshape(-1)
    if d_out is None:
        d_out = vec.size // d_in
    if vec.size != d_in * d_out:
        raise DimensionMismatchError(f"vector of size {vec.size} is not on a {d_in}x{d_out} space")
    return vec.reshape(d_in, d_out).T / math.sqrt(d_in)


@dataclass(frozen=True)
class CPTPReport:
    cp: bool
    tp: bool
    tp_residual: float
    min_eigenvalue: float


def is_cptp(s: Superoperator, tol: float = HERMITIAN_TOL) -> CPTPReport:
    choi = s.choi
    herm = bool(np.abs(choi - choi.conj().T).max(initial=0.0) <= tol)
    min_eig = float(np.linalg.eigvalsh((choi + choi.conj().T) / 2).min(initial=0.0))
    reduced = partial_trace(s.choi_operator(), [(IN, f) for f in s.in_ids]).matrix
    residual = float(np.abs(reduced - np.eye(s.d_in) / s.d_in).max(initial=0.0))
    return CPTPReport(cp=herm and min_eig >= -tol, tp=residual <= tol, tp_residual=residual, min_eigenvalue=min_eig)


def kraus_operators(s: Superoperator, tol: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators of a CP map from the eigendecomposition of its Choi matrix."""
    vals, vecs = np.linalg.eigh((s.choi + s.choi.conj().T) / 2)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    out = []
    for val, vec in zip(vals[::-1], vecs.T[::-1]):
        if val <= tol * scale:
            continue
        out.append(math.sqrt(val * s.d_in) * vec.reshape(s.d_in, s.d_out).T)
    return out


def identity_channel(factors: Sequence[Factor]) -> Superoperator:
    d = math.prod(d for _, d in factors)
    return from_kraus([np.eye(d)], factors, factors)


def tensor_maps(a: Superoperator, b: Superoperator) -> Superoperator:
    """``a ⊗ b`` with inputs ``a.in + b.in`` and outputs ``a.out + b.out``."""
    ta = a.block()
    tb = b.block()
    t = np.einsum("iajb,kcld->ikacjlbd", ta, tb)
    side = a.d_in * b.d_in * a.d_out * b.d_out
    return Superoperator(a.in_factors + b.in_factors, a.out_factors + b.out_factors, t.reshape(side, side))
