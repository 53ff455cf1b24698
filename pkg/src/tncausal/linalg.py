"""Dense complex tensors, operators on composite spaces, and network contraction.

Every composite space is an ordered list of ``(factor_id, dim)`` pairs and
matrices are stored row-major over that list. Contraction of a network of
tensors runs pairwise along a plan produced by :func:`plan_contraction_order`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingEdgeError,
    DimensionMismatchError,
    DuplicateFactorError,
    NotHermitianError,
    NotPSDError,
    UnknownFactorError,
    ValidationError,
)

HERMITIAN_TOL = 1e-9
EIGEN_FLOOR = -1e-10
EXHAUSTIVE_NODE_LIMIT = 12

Factor = tuple[Hashable, int]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def _check_unique(ids: Sequence[Hashable], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateFactorError(f"duplicate {what} {i!r}")
        seen.add(i)


@dataclass(frozen=True)
class DenseTensor:
    """Complex array whose axes carry ids and dims."""

    axes: tuple[Factor, ...]
    data: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        axes = tuple((a, int(d)) for a, d in self.axes)
        _check_unique([a for a, _ in axes], "axis id")
        if any(d < 1 for _, d in axes):
            raise ValidationError("axis dims must be positive")
        shape = tuple(d for _, d in axes)
        data = np.asarray(self.data, dtype=complex)
        if data.size != math.prod(shape):
            raise DimensionMismatchError(
                f"data has {data.size} entries, axes need {math.prod(shape)}"
            )
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "data", _frozen(data.reshape(shape)))

    @property
    def ids(self) -> tuple[Hashable, ...]:
        return tuple(a for a, _ in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.axes)

    def transposed(self, order: Sequence[Hashable]) -> "DenseTensor":
        """Reorder axes to ``order`` (a permutation of the axis ids)."""
        index = {a: i for i, a in enumerate(self.ids)}
        if sorted(map(str, order)) != sorted(map(str, self.ids)):
            raise UnknownFactorError(f"{order!r} is not a permutation of {self.ids!r}")
        perm = [index[a] for a in order]
        return DenseTensor(tuple(self.axes[p] for p in perm), self.data.transpose(perm))

    def vector(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class SquareOperator:
    """Square matrix acting on the composite space ``factors``."""

    factors: tuple[Factor, ...]
    matrix: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        factors = tuple((f, int(d)) for f, d in self.factors)
        _check_unique([f for f, _ in factors], "factor id")
        side = math.prod(d for _, d in factors)
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (side, side):
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match factor side {side}"
            )
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "matrix", _frozen(matrix))

    @property
    def ids(self) -> tuple[Hashable, ...]:
        return tuple(f for f, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def tensor(self) -> np.ndarray:
        """Matrix reshaped to ``dims + dims`` (row indices first)."""
        return self.matrix.reshape(self.dims + self.dims)

    def permuted(self, order: Sequence[Hashable]) -> "SquareOperator":
        """Same operator with the factor list reordered to ``order``."""
        index = {f: i for i, f in enumerate(self.ids)}
        missing = [f for f in order if f not in index]
        if missing or len(order) != len(self.ids):
            raise UnknownFactorError(f"{list(order)!r} is not a permutation of {self.ids!r}")
        perm = [index[f] for f in order]
        n = len(perm)
        t = self.tensor().transpose(perm + [p + n for p in perm])
        factors = tuple(self.factors[p] for p in perm)
        side = self.dim
        return SquareOperator(factors, t.reshape(side, side))

    def canonical(self) -> "SquareOperator":
        """Factors sorted lexicographically by id."""
        return self.permuted(sorted(self.ids))

    def relabeled(self, mapping: Mapping[Hashable, Hashable]) -> "SquareOperator":
        factors = tuple((mapping.get(f, f), d) for f, d in self.factors)
        return SquareOperator(factors, self.matrix)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return is_hermitian(self.matrix, tol)

    def is_psd(self, tol: float = HERMITIAN_TOL) -> bool:
        return is_psd(self.matrix, tol)


def identity(factors: Sequence[Factor]) -> SquareOperator:
    side = math.prod(int(d) for _, d in factors)
    return SquareOperator(tuple(factors), np.eye(side))


def is_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    matrix = np.asarray(matrix)
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol)


def is_psd(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    matrix = np.asarray(matrix)
    if not is_hermitian(matrix, tol):
        return False
    herm = (matrix + matrix.conj().T) / 2
    return bool(np.linalg.eigvalsh(herm).min(initial=0.0) >= -tol)


def tensor_product(a: SquareOperator, b: SquareOperator) -> SquareOperator:
    """Kronecker product with factor list ``a.factors + b.factors``."""
    clash = set(a.ids) & set(b.ids)
    if clash:
        raise DuplicateFactorError(f"factor ids {sorted(map(str, clash))} appear in both operands")
    return SquareOperator(a.factors + b.factors, np.kron(a.matrix, b.matrix))


def partial_trace(m: SquareOperator, keep: Iterable[Hashable]) -> SquareOperator:
    """Trace out every factor not in ``keep``; kept factors retain their order."""
    keep = set(keep)
    unknown = keep - set(m.ids)
    if unknown:
        raise UnknownFactorError(f"unknown factor ids {sorted(map(str, unknown))}")
    n = len(m.factors)
    kept = [i for i, f in enumerate(m.ids) if f in keep]
    letters = [chr(ord("a") + i) for i in range(n)]
    upper = [chr(ord("A") + i) for i in range(n)]
    cols = [upper[i] if i in kept else letters[i] for i in range(n)]
    out = "".join(letters[i] for i in kept) + "".join(upper[i] for i in kept)
    t = np.einsum("".join(letters) + "".join(cols) + "->" + out, m.tensor())
    factors = tuple(m.factors[i] for i in kept)
    side = math.prod(d for _, d in factors)
    return SquareOperator(factors, t.reshape(side, side))


def max_entangled(d: int, normalized: bool = True) -> DenseTensor:
    """``sum_i |ii>``, divided by ``sqrt(d)`` when normalized."""
    if d < 1:
        raise ValidationError("dimension must be positive")
    vec = np.eye(d).reshape(-1).astype(complex)
    if normalized:
        vec /= math.sqrt(d)
    return DenseTensor((("0", d), ("1", d)), vec)


def psd_sqrt(m: SquareOperator | np.ndarray) -> SquareOperator | np.ndarray:
    """Hermitian PSD square root; eigenvalues in ``[-1e-10, 0)`` are clipped."""
    matrix = m.matrix if isinstance(m, SquareOperator) else np.asarray(m, dtype=complex)
    if not is_hermitian(matrix):
        raise NotHermitianError("operator is not Hermitian within 1e-9")
    vals, vecs = np.linalg.eigh((matrix + matrix.conj().T) / 2)
    if vals.min(initial=0.0) < EIGEN_FLOOR:
        raise NotPSDError(f"eigenvalue {vals.min():.3e} below {EIGEN_FLOOR}")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    if isinstance(m, SquareOperator):
        return SquareOperator(m.factors, root)
    return root


def embed_operator(op: SquareOperator, factors: Sequence[Factor]) -> SquareOperator:
    """Extend ``op`` by identities to the full space ``factors`` (in that order)."""
    rest = [(f, d) for f, d in factors if f not in set(op.ids)]
    full = tensor_product(op, identity(rest)) if rest else op
    return full.permuted([f for f, _ in factors])


# ---------------------------------------------------------------------------
# Contraction planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionPlan:
    """Pairwise contraction sequence in single-assignment form.

    Node ``i < n`` is input ``i``; step ``k`` creates node ``n + k`` from the
    two node indices it lists.
    """

    steps: tuple[tuple[int, int], ...]
    cost: float
    peak_size: int
    method: str


def _edge_bits(
    nodes: Sequence[tuple[Hashable, Sequence[Hashable]]],
    edge_dims: Mapping[Hashable, int],
    open_edges: Iterable[Hashable],
) -> tuple[list[int], list[float]]:
    open_edges = set(open_edges)
    counts: dict[Hashable, int] = {}
    for _, edges in nodes:
        for e in edges:
            counts[e] = counts.get(e, 0) + 1
    for e, c in counts.items():
        if e not in edge_dims:
            raise UnknownFactorError(f"edge {e!r} has no dimension")
        if c == 1 and e not in open_edges:
            raise DanglingEdgeError(f"edge {e!r} appears on a single stub")
        if c > 2:
            raise ValidationError(f"edge {e!r} appears on {c} stubs")
    order = sorted(counts, key=str)
    index = {e: i for i, e in enumerate(order)}
    logs = [math.log2(edge_dims[e]) for e in order]
    masks = []
    for _, edges in nodes:
        mask = 0
        for e in edges:
            mask ^= 1 << index[e]
        masks.append(mask)
    return masks, logs


def _log_size(mask: int, logs: Sequence[float]) -> float:
    total = 0.0
    i = 0
    while mask:
        if mask & 1:
            total += logs[i]
        mask >>= 1
        i += 1
    return total


def plan_contraction_order(
    nodes: Sequence[tuple[Hashable, Sequence[Hashable]]],
    edge_dims: Mapping[Hashable, int],
    open_edges: Iterable[Hashable] = (),
) -> ContractionPlan:
    """Plan a pairwise contraction tree for ``nodes``.

    Each node lists its incident edge ids; an id listed twice on one node is a
    self-pairing and is traced inside that node. Up to
    ``EXHAUSTIVE_NODE_LIMIT`` nodes the plan minimizes the total multiply
    count over all binary trees; larger networks use a greedy rule that always
    merges the pair with the smallest result.
    """
    key = (
        tuple(tuple(edges) for _, edges in nodes),
        tuple(sorted(((e, int(d)) for e, d in edge_dims.items()), key=str)),
        tuple(sorted(open_edges, key=str)),
    )
    return _plan_cached(key)


@lru_cache(maxsize=512)
def _plan_cached(key: tuple) -> ContractionPlan:
    node_edges, dim_items, open_edges = key
    nodes = list(enumerate(node_edges))
    edge_dims = dict(dim_items)
    masks, logs = _edge_bits(nodes, edge_dims, open_edges)
    n = len(masks)
    if n == 0:
        raise ValidationError("empty network")
    if n == 1:
        return ContractionPlan((), 0.0, round(2 ** _log_size(masks[0], logs)), "trivial")
    if n <= EXHAUSTIVE_NODE_LIMIT:
        return _plan_exhaustive(masks, logs)
    return _plan_greedy(masks, logs)


def _plan_exhaustive(masks: list[int], logs: list[float]) -> ContractionPlan:
    n = len(masks)
    full = (1 << n) - 1
    leg = [0] * (1 << n)
    lsize = [0.0] * (1 << n)
    for s in range(1, full + 1):
        low = s & -s
        leg[s] = leg[s ^ low] ^ masks[low.bit_length() - 1]
        lsize[s] = _log_size(leg[s], logs)
    best = [math.inf] * (1 << n)
    split = [0] * (1 << n)
    for i in range(n):
        best[1 << i] = 0.0
    for s in range(1, full + 1):
        if s & (s - 1) == 0:
            continue
        low = s & -s
        rest = s ^ low
        ls = lsize[s]
        top = math.inf
        choice = 0
        # submasks ``a`` of ``s`` that contain the lowest bit
        sub = rest
        while True:
            a = sub | low
            if a != s:
                b = s ^ a
                c = best[a] + best[b] + 2 ** ((lsize[a] + lsize[b] + ls) / 2)
                if c < top * (1 - 1e-12):
                    top = c
                    choice = a
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[s] = top
        split[s] = choice
    steps: list[tuple[int, int]] = []
    node_of: dict[int, int] = {1 << i: i for i in range(n)}
    peak = max(round(2 ** lsize[1 << i]) for i in range(n))

    def build(s: int) -> int:
        nonlocal peak
        if s in node_of:
            return node_of[s]
        a = split[s]
        ia, ib = build(a), build(s ^ a)
        steps.append((min(ia, ib), max(ia, ib)))
        node_of[s] = n + len(steps) - 1
        peak = max(peak, round(2 ** lsize[s]))
        return node_of[s]

    build(full)
    return ContractionPlan(tuple(steps), best[full], peak, "exhaustive")


def _plan_greedy(masks: list[int], logs: list[float]) -> ContractionPlan:
    n = len(masks)
    live = {i: masks[i] for i in range(n)}
    sizes = {i: _log_size(masks[i], logs) for i in range(n)}
    steps: list[tuple[int, int]] = []
    cost = 0.0
    peak = max(round(2 ** s) for s in sizes.values())
    nxt = n
    while len(live) > 1:
        ids = sorted(live)
        best_key = None
        best_pair = None
        for x in range(len(ids)):
            for y in range(x + 1, len(ids)):
                i, j = ids[x], ids[y]
                shared = live[i] & live[j]
                if not shared:
                    continue
                res = _log_size(live[i] ^ live[j], logs)
                key = (res - max(sizes[i], sizes[j]), res, i, j)
                if best_key is None or key < best_key:
                    best_key, best_pair = key, (i, j)
        if best_pair is None:
            # disconnected components: outer product of the two smallest
            i, j = sorted(ids, key=lambda k: (sizes[k], k))[:2]
            best_pair = (min(i, j), max(i, j))
        i, j = best_pair
        merged = live[i] ^ live[j]
        res = _log_size(merged, logs)
        cost += 2 ** ((sizes[i] + sizes[j] + res) / 2)
        peak = max(peak, round(2 ** res))
        del live[i], live[j]
        live[nxt] = merged
        sizes[nxt] = res
        steps.append((i, j))
        nxt += 1
    return ContractionPlan(tuple(steps), cost, peak, "greedy")


# ---------------------------------------------------------------------------
# Network contraction
# ---------------------------------------------------------------------------

AxisRef = tuple[int, Hashable]


def _trace_self_pairs(data: np.ndarray, labels: list, ) -> tuple[np.ndarray, list]:
    """Trace axes that share a label inside a single tensor."""
    while True:
        seen: dict = {}
        pair = None
        for pos, lab in enumerate(labels):
            if lab in seen:
                pair = (seen[lab], pos)
                break
            seen[lab] = pos
        if pair is None:
            return data, labels
        data = np.trace(data, axis1=pair[0], axis2=pair[1])
        labels = [lab for k, lab in enumerate(labels) if k not in pair]


def network_labels(
    tensors: Sequence[DenseTensor], pairings: Sequence[tuple[AxisRef, AxisRef]]
) -> tuple[list[list[Hashable]], dict[Hashable, int], list[Hashable]]:
    """Assign a shared label to each pairing and a free label to every other axis."""
    labels: list[list[Hashable]] = [[("free", a) for a in t.ids] for t in tensors]
    dims: dict[Hashable, int] = {}
    used: set[AxisRef] = set()
    for k, (left, right) in enumerate(pairings):
        for ref in (left, right):
            if ref in used:
                raise ValidationError(f"axis {ref!r} paired twice")
            used.add(ref)
        (ti, ai), (tj, aj) = left, right
        try:
            di = dict(tensors[ti].axes)[ai]
            dj = dict(tensors[tj].axes)[aj]
        except (KeyError, IndexError) as exc:
            raise UnknownFactorError(f"bad axis reference in pairing {k}") from exc
        if di != dj:
            raise DimensionMismatchError(f"pairing {left!r}-{right!r} joins dims {di} and {dj}")
        lab = ("pair", k)
        labels[ti][tensors[ti].ids.index(ai)] = lab
        labels[tj][tensors[tj].ids.index(aj)] = lab
        dims[lab] = di
    free: list[Hashable] = []
    for t, labs in zip(tensors, labels):
        for (a, d), lab in zip(t.axes, labs):
            if lab[0] == "free":
                if lab in dims:
                    raise DuplicateFactorError(f"free axis id {a!r} used by two tensors")
                dims[lab] = d
                free.append(lab)
    return labels, dims, free


def contract_network(
    tensors: Sequence[DenseTensor],
    pairings: Sequence[tuple[AxisRef, AxisRef]],
    order: ContractionPlan | None = None,
) -> DenseTensor:
    """Contract ``tensors`` along ``pairings`` following ``order``.

    A pairing joins axis ``(i, id_a)`` of tensor ``i`` with ``(j, id_b)`` of
    tensor ``j`` (``i == j`` traces the two axes). Unpaired axes are free and
    appear in the result sorted by axis id. Without an explicit plan one is
    computed by :func:`plan_contraction_order`.
    """
    labels, dims, free = network_labels(tensors, pairings)
    if order is None:
        order = plan_contraction_order(
            [(i, labs) for i, labs in enumerate(labels)], dims, open_edges=free
        )
    work: dict[int, tuple[np.ndarray, list]] = {}
    for i, (t, labs) in enumerate(zip(tensors, labels)):
        work[i] = _trace_self_pairs(np.asarray(t.data), list(labs))
    nxt = len(tensors)
    for i, j in order.steps:
        (a, la), (b, lb) = work.pop(i), work.pop(j)
        shared = [lab for lab in la if lab in lb]
        ia = [la.index(lab) for lab in shared]
        ib = [lb.index(lab) for lab in shared]
        data = np.tensordot(a, b, axes=(ia, ib))
        labs = [lab for lab in la if lab not in shared] + [lab for lab in lb if lab not in shared]
        work[nxt] = _trace_self_pairs(data, labs)
        nxt += 1
    if len(work) != 1:
        raise ValidationError("contraction plan does not cover every tensor")
    data, labs = work.popitem()[1]
    out_order = sorted(free, key=lambda lab: str(lab[1]))
    perm = [labs.index(lab) for lab in out_order]
    data = np.transpose(data, perm) if perm else np.asarray(data)
    axes = tuple((lab[1], dims[lab]) for lab in out_order)
    return DenseTensor(axes, data)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats, np.eye(1, dtype=complex))
