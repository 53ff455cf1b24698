"""Command-line interface and JSON document format.

Documents carry ``version``, ``kind`` (``tn``, ``cm`` or ``tensor``), a graph
section and an operators section. Complex arrays are stored as
``{"shape": [...], "data": [[re, im], ...]}`` in row-major order, with operator
factors listed explicitly. Direction bitstrings run over edges in
lexicographic id order.

Exit codes: 0 success, 2 inconsistent model or intervention, 3 validation error.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import click
import numpy as np

from .choi import Superoperator
from .cm import (
    CausalModel,
    Detected,
    Inconsistent,
    Instrument,
    NotDetected,
    detect_signalling,
    probabilities,
)
from .errors import AllSamplesInconsistentError, ValidationError
from .graphs import (
    OBSERVED,
    UNOBSERVED,
    DirectedCausalGraph,
    DirectedEdge,
    UndirectedEdge,
    UndirectedMultigraph,
    d_separated,
    format_directions,
    p_separated,
    parse_directions,
)
from .holo import (
    build_happy_patch,
    check_perfect,
    holo_influence,
    radial_orientation,
    six_leg_perfect_tensor,
)
from .influence import RegionPair, bridge_check, detect_influence
from .interventions import SamplerConfig
from .linalg import DenseTensor, SquareOperator
from .mapping import TraceConditionViolated, cm_to_tn, rotation_family, tn_to_cm, tn_to_cm_general
from .teleport import ZeroSuccess, build_teleport_model, conditional_probabilities
from .tn import TensorNetwork, contract, embed_tensor

FORMAT_VERSION = "tncausal/1"
EXIT_OK = 0
EXIT_INCONSISTENT = 2
EXIT_INVALID = 3


# ---------------------------------------------------------------------------
# documents


def encode_array(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a, dtype=complex)
    flat = a.reshape(-1)
    return {"shape": list(a.shape), "data": [[float(z.real), float(z.imag)] for z in flat]}


def decode_array(obj: Mapping[str, Any]) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in obj["shape"])
        pairs = np.asarray(obj["data"], dtype=float).reshape(-1, 2)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed array: {exc}") from exc
    if pairs.shape[0] != math.prod(shape):
        raise ValidationError(f"array data has {pairs.shape[0]} entries, shape {shape} needs {math.prod(shape)}")
    return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(shape)


def _factors(obj: Sequence) -> tuple[tuple[str, int], ...]:
    try:
        return tuple((str(f), int(d)) for f, d in obj)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed factor list: {exc}") from exc


def _check_header(doc: Mapping[str, Any], kind: str) -> None:
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported document version {doc.get('version')!r}")
    if doc.get("kind") != kind:
        raise ValidationError(f"expected a {kind!r} document, got {doc.get('kind')!r}")


def tn_to_document(tn: TensorNetwork) -> dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "kind": "tn",
        "vertices": [{"id": v} for v in tn.graph.vertices],
        "edges": [{"id": e.id, "u": e.u, "w": e.w, "dim": e.dim} for e in tn.edges],
        "operators": {
            v: {"kind": "state", "factors": [list(f) for f in op.factors], "matrix": encode_array(op.matrix)}
            for v, op in tn.vertex_ops.items()
        },
    }


def tn_from_document(doc: Mapping[str, Any]) -> TensorNetwork:
    _check_header(doc, "tn")
    try:
        vertices = tuple(str(v["id"]) for v in doc["vertices"])
        edges = tuple(UndirectedEdge(str(e["id"]), str(e["u"]), str(e["w"]), int(e["dim"])) for e in doc["edges"])
        ops = {}
        for v, spec in doc["operators"].items():
            factors = _factors(spec["factors"])
            if spec["kind"] == "state":
                ops[v] = SquareOperator(factors, decode_array(spec["matrix"]))
            elif spec["kind"] == "tensor-coeffs":
                coeffs = decode_array(spec["tensor"]).reshape(tuple(d for _, d in factors))
                ops[v] = embed_tensor(DenseTensor(factors, coeffs))
            else:
                raise ValidationError(f"unknown tensor-network operator kind {spec['kind']!r}")
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}") from exc
    return TensorNetwork(UndirectedMultigraph(vertices, edges), ops)


def cm_to_document(m: CausalModel) -> dict[str, Any]:
    ops: dict[str, Any] = {}
    for v, mech in m.mechanisms.items():
        if isinstance(mech, Instrument):
            ops[v] = {
                "kind": "instrument",
                "in": [list(f) for f in mech.in_factors],
                "out": [list(f) for f in mech.out_factors],
                "labels": list(mech.labels),
                "povm": [encode_array(p) for p in mech.povm],
            }
        else:
            ops[v] = {
                "kind": "channel-choi",
                "in": [list(f) for f in mech.in_factors],
                "out": [list(f) for f in mech.out_factors],
                "choi": encode_array(mech.choi),
            }
    g = m.graph
    return {
        "version": FORMAT_VERSION,
        "kind": "cm",
        "vertices": [{"id": v, "kind": k} for v, k in g.vertices],
        "edges": [{"id": e.id, "src": e.src, "dst": e.dst, "dim": e.dim} for e in g.edges],
        "operators": ops,
    }


def cm_from_document(doc: Mapping[str, Any]) -> CausalModel:
    _check_header(doc, "cm")
    try:
        vertices = tuple((str(v["id"]), str(v["kind"])) for v in doc["vertices"])
        edges = tuple(
            DirectedEdge(str(e["id"]), str(e["src"]), str(e["dst"]), int(e["dim"])) for e in doc["edges"]
        )
        kinds = dict(vertices)
        mechs: dict[str, Any] = {}
        for v, spec in doc["operators"].items():
            ins = _factors(spec.get("in", []))
            outs = _factors(spec.get("out", []))
            kind = spec["kind"]
            want = OBSERVED if kind == "instrument" else UNOBSERVED
            if kinds.get(v) != want:
                raise ValidationError(f"operator kind {kind!r} does not fit {kinds.get(v)!r} vertex {v!r}")
            if kind == "instrument":
                mechs[v] = Instrument(ins, outs, tuple(spec["labels"]), tuple(decode_array(p) for p in spec["povm"]))
            elif kind == "channel-choi":
                mechs[v] = Superoperator(ins, outs, decode_array(spec["choi"]))
            elif kind == "state":
                if ins:
                    raise ValidationError(f"state at {v!r} cannot have inputs")
                mechs[v] = Superoperator((), outs, decode_array(spec["matrix"]))
            else:
                raise ValidationError(f"unknown causal-model operator kind {kind!r}")
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}") from exc
    return CausalModel(DirectedCausalGraph(vertices, edges), mechs)


def tensor_to_document(t: DenseTensor) -> dict[str, Any]:
    return {"version": FORMAT_VERSION, "kind": "tensor", "legs": [list(a) for a in t.axes], "tensor": encode_array(t.data)}


def tensor_from_document(doc: Mapping[str, Any]) -> DenseTensor:
    _check_header(doc, "tensor")
    try:
        legs = _factors(doc["legs"])
        data = decode_array(doc["tensor"]).reshape(tuple(d for _, d in legs))
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}") from exc
    return DenseTensor(legs, data)


def read_document(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


def write_document(doc: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


# ---------------------------------------------------------------------------
# output helpers


def fmt(x: float) -> str:
    return format(float(x), ".17g")


class CommandFailure(Exception):
    def __init__(self, code: int, message: str, payload: Mapping[str, Any] | None = None):
        super().__init__(message)
        self.code = code
        self.payload = dict(payload or {})


def _emit(as_json: bool, payload: Mapping[str, Any], lines: Sequence[str]) -> None:
    if as_json:
        click.echo(json.dumps(payload))
    else:
        for line in lines:
            click.echo(line)


def _run(as_json: bool, body: Callable[[], None]) -> None:
    try:
        body()
    except CommandFailure as exc:
        _emit(as_json, {"status": "error", "exit_code": exc.code, "message": str(exc), **exc.payload}, [])
        if not as_json:
            click.echo(str(exc), err=True)
        sys.exit(exc.code)
    except AllSamplesInconsistentError as exc:
        _emit(as_json, {"status": "inconsistent", "message": str(exc)}, [])
        if not as_json:
            click.echo(f"INCONSISTENT: {exc}", err=True)
        sys.exit(EXIT_INCONSISTENT)
    except ValidationError as exc:
        _emit(as_json, {"status": "error", "error": type(exc).__name__, "message": str(exc)}, [])
        if not as_json:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_INVALID)


def _csv(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(s.strip() for s in value.split(",") if s.strip())


def _config(seed: int, samples: int, instruments: int, tol: float, product: bool = False) -> SamplerConfig:
    if samples < 1:
        raise ValidationError("samples must be positive")
    n_inst = min(instruments, samples)
    return SamplerConfig(
        seed=seed, n_unitaries=math.ceil(samples / n_inst), n_instruments=n_inst, tol=tol, product_instruments=product
    )


def _verdict_payload(v: Detected | NotDetected | None) -> dict[str, Any]:
    if v is None:
        return {"verdict": None}
    if isinstance(v, Detected):
        w = v.witness
        return {
            "verdict": "detected",
            "witness": {"a": w.a, "a_prime": w.a_prime, "b": w.b, "y": _jsonable(w.y), "deviation": w.deviation},
            "n_inconsistent": v.n_inconsistent,
        }
    return {
        "verdict": "not_detected",
        "n_samples": v.n_samples,
        "n_inconsistent": v.n_inconsistent,
        "max_deviation": v.max_deviation,
    }


def _verdict_line(v: Detected | NotDetected | None) -> str:
    if v is None:
        return "verdict: undefined"
    if isinstance(v, Detected):
        w = v.witness
        return f"verdict: DETECTED  a={w.a} a'={w.a_prime} b={w.b} y={w.y} deviation={fmt(w.deviation)}"
    return f"verdict: NOT DETECTED  samples={v.n_samples} inconsistent={v.n_inconsistent} max_deviation={fmt(v.max_deviation)}"


def _jsonable(x: Any) -> Any:
    if isinstance(x, tuple):
        return [_jsonable(i) for i in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _label(x: Any) -> str:
    return ",".join(str(i) for i in x) if isinstance(x, tuple) else str(x)


def _distribution_lines(variables: Sequence[str], probs: Mapping[tuple, float]) -> list[str]:
    lines = [f"# variables: {', '.join(map(str, variables))}"]
    for x, p in probs.items():
        if abs(p) > 1e-12:
            lines.append(f"P({_label(tuple(x))}) = {fmt(p)}")
    return lines


# ---------------------------------------------------------------------------
# commands

json_option = click.option("--json", "as_json", is_flag=True, help="Print a machine-readable JSON report.")
seed_option = click.option("--seed", default=0, show_default=True, help="Seed for sampled interventions.")
samples_option = click.option("--samples", default=32, show_default=True, help="Number of (unitary, instrument) pairs.")
instruments_option = click.option("--instruments", default=4, show_default=True, help="Instruments in the sampled pool.")
tol_option = click.option("--tol", default=1e-9, show_default=True, help="Deviation counted as influence.")


@click.group()
def main() -> None:
    """Tensor networks and quantum causal models.

    Direction bitstrings list one bit per edge in lexicographic edge-id order;
    bit 0 points the edge from its smaller endpoint to its larger one.
    """


@main.command("contract")
@click.argument("path", type=click.Path(exists=True))
@json_option
def contract_cmd(path: str, as_json: bool) -> None:
    """Print <L|rho_P|L> of a tensor network."""

    def body() -> None:
        value = contract(tn_from_document(read_document(path)))
        _emit(as_json, {"status": "ok", "value": value}, [fmt(value)])

    _run(as_json, body)


@main.command("probs")
@click.argument("path", type=click.Path(exists=True))
@json_option
def probs_cmd(path: str, as_json: bool) -> None:
    """Print the outcome distribution of a causal model."""

    def body() -> None:
        res = probabilities(cm_from_document(read_document(path)))
        if isinstance(res, Inconsistent):
            _emit(as_json, {"status": "inconsistent", "normalizer": res.normalizer}, ["INCONSISTENT"])
            sys.exit(EXIT_INCONSISTENT)
        payload = {
            "status": "ok",
            "variables": list(res.variables),
            "normalizer": res.normalizer,
            "probs": [[_jsonable(x), p] for x, p in res.probs.items()],
        }
        _emit(as_json, payload, _distribution_lines(res.variables, res.probs))

    _run(as_json, body)


@main.group("map")
def map_group() -> None:
    """Convert between causal models and tensor networks."""


@map_group.command("cm2tn")
@click.argument("path", type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
@json_option
def cm2tn_cmd(path: str, output: str, as_json: bool) -> None:
    """Write the tensor network of a causal model."""

    def body() -> None:
        tn = cm_to_tn(cm_from_document(read_document(path)))
        write_document(tn_to_document(tn), output)
        _emit(as_json, {"status": "ok", "output": output}, [f"wrote {output}"])

    _run(as_json, body)


@map_group.command("tn2cm")
@click.argument("path", type=click.Path(exists=True))
@click.option("--directions", required=True, help="One bit per edge in lexicographic edge-id order.")
@click.option("--general", is_flag=True, help="Add ancilla self-loops where the trace condition fails.")
@click.option("-o", "--output", required=True, type=click.Path())
@json_option
def tn2cm_cmd(path: str, directions: str, general: bool, output: str, as_json: bool) -> None:
    """Write the causal model of a tensor network under an orientation."""

    def body() -> None:
        tn = tn_from_document(read_document(path))
        d = parse_directions(directions, tn.graph.edge_ids)
        if general:
            res = tn_to_cm_general(tn, d)
            write_document(cm_to_document(res.model), output)
            payload = {
                "status": "ok",
                "output": output,
                "marked": sorted(res.marked),
                "alphas": dict(res.alphas),
                "alpha_product": res.alpha_product,
            }
            lines = [f"wrote {output}", f"marked: {', '.join(sorted(res.marked)) or '-'}"]
            lines += [f"alpha[{v}] = {fmt(a)}" for v, a in sorted(res.alphas.items()) if v in res.marked]
            _emit(as_json, payload, lines)
            return
        res = tn_to_cm(tn, d)
        if isinstance(res, TraceConditionViolated):
            raise CommandFailure(
                EXIT_INVALID,
                f"trace condition fails at: {', '.join(res.vertices)}",
                {"vertices": list(res.vertices), "residuals": dict(res.residuals)},
            )
        write_document(cm_to_document(res), output)
        _emit(as_json, {"status": "ok", "output": output}, [f"wrote {output}"])

    _run(as_json, body)


@main.command("influence")
@click.argument("path", type=click.Path(exists=True))
@click.option("--region-a", required=True, help="Comma-separated edges carrying the unitary.")
@click.option("--region-b", required=True, help="Comma-separated edges carrying the instrument.")
@click.option("--measure", type=click.Choice(["operational", "chqy"]), default="operational", show_default=True)
@seed_option
@samples_option
@instruments_option
@tol_option
@json_option
def influence_cmd(path, region_a, region_b, measure, seed, samples, instruments, tol, as_json) -> None:
    """Randomized search for causal influence between two edge regions."""

    def body() -> None:
        tn = tn_from_document(read_document(path))
        verdict = detect_influence(
            tn, RegionPair(_csv(region_a), _csv(region_b)), _config(seed, samples, instruments, tol), measure
        )
        _emit(as_json, {"status": "ok", **_verdict_payload(verdict)}, [_verdict_line(verdict)])

    _run(as_json, body)


@main.command("signal")
@click.argument("path", type=click.Path(exists=True))
@click.option("--lab-a", required=True, help="Comma-separated edges of the intervening lab.")
@click.option("--lab-b", required=True, help="Comma-separated edges of the measuring lab.")
@seed_option
@samples_option
@instruments_option
@tol_option
@json_option
def signal_cmd(path, lab_a, lab_b, seed, samples, instruments, tol, as_json) -> None:
    """Randomized search for signalling between two labs of a causal model."""

    def body() -> None:
        m = cm_from_document(read_document(path))
        verdict = detect_signalling(m, _csv(lab_a), _csv(lab_b), _config(seed, samples, instruments, tol))
        _emit(as_json, {"status": "ok", **_verdict_payload(verdict)}, [_verdict_line(verdict)])

    _run(as_json, body)


@main.command("bridge")
@click.argument("path", type=click.Path(exists=True))
@click.option("--directions", required=True, help="One bit per edge in lexicographic edge-id order.")
@click.option("--region-a", required=True)
@click.option("--region-b", required=True)
@seed_option
@samples_option
@instruments_option
@json_option
def bridge_cmd(path, directions, region_a, region_b, seed, samples, instruments, as_json) -> None:
    """Compare the network influence measure with the image model's conditional probabilities."""

    def body() -> None:
        tn = tn_from_document(read_document(path))
        d = parse_directions(directions, tn.graph.edge_ids)
        rep = bridge_check(tn, d, RegionPair(_csv(region_a), _csv(region_b)), _config(seed, samples, instruments, 1e-9))
        payload = {
            "status": "ok",
            "ok": rep.ok,
            "n_samples": rep.n_samples,
            "max_deviation": rep.max_deviation,
            "inconsistency_agrees": rep.inconsistency_agrees,
            "n_inconsistent": rep.n_inconsistent,
            "verdicts_agree": rep.verdicts_agree,
            "network": _verdict_payload(rep.tn_verdict),
            "model": _verdict_payload(rep.cm_verdict),
            "marked": sorted(rep.marked),
        }
        lines = [
            f"samples: {rep.n_samples}",
            f"max |M - P(y|a,b)|: {fmt(rep.max_deviation)}",
            f"inconsistent pairs: {rep.n_inconsistent} (flags agree: {rep.inconsistency_agrees})",
            f"network {_verdict_line(rep.tn_verdict)}",
            f"model {_verdict_line(rep.cm_verdict)}",
            f"marked: {', '.join(sorted(rep.marked)) or '-'}",
            f"result: {'OK' if rep.ok else 'MISMATCH'}",
        ]
        _emit(as_json, payload, lines)

    _run(as_json, body)


def _separation_command(name: str, test: Callable) -> None:
    @main.command(name, help=f"Test {name[0]}-separation of X and Y given Z in a model's graph.")
    @click.argument("path", type=click.Path(exists=True))
    @click.option("--x", "xs", required=True, help="Comma-separated vertices.")
    @click.option("--y", "ys", required=True, help="Comma-separated vertices.")
    @click.option("--z", "zs", default="", help="Comma-separated conditioning vertices.")
    @json_option
    def cmd(path, xs, ys, zs, as_json) -> None:
        def body() -> None:
            g = cm_from_document(read_document(path)).graph
            result = bool(test(g, _csv(xs), _csv(ys), _csv(zs)))
            _emit(as_json, {"status": "ok", "separated": result}, ["separated" if result else "connected"])

        _run(as_json, body)


_separation_command("dsep", d_separated)
_separation_command("psep", p_separated)


@main.command("rotations")
@click.argument("path", type=click.Path(exists=True))
@json_option
def rotations_cmd(path: str, as_json: bool) -> None:
    """Generalized mapping under every direction string."""

    def body() -> None:
        tn = tn_from_document(read_document(path))
        target = contract(tn)
        d_edges = math.prod(e.dim for e in tn.edges)
        rows = []
        for d, res in rotation_family(tn):
            cycle = probabilities(res.model).normalizer
            rows.append(
                {
                    "directions": format_directions(d),
                    "marked": sorted(res.marked),
                    "alpha_product": res.alpha_product,
                    "cycle": cycle,
                    "predicted_contraction": res.contraction_from_cycle(cycle, d_edges),
                }
            )
        lines = [f"# contraction {fmt(target)}", "# directions  marked  alpha_product  cycle  predicted_contraction"]
        for r in rows:
            lines.append(
                f"{r['directions']}  {','.join(r['marked']) or '-'}  {fmt(r['alpha_product'])}  "
                f"{fmt(r['cycle'])}  {fmt(r['predicted_contraction'])}"
            )
        _emit(as_json, {"status": "ok", "contraction": target, "rows": rows}, lines)

    _run(as_json, body)


@main.command("teleport")
@click.argument("path", type=click.Path(exists=True))
@click.option("--split", default=None, help="Comma-separated edges to split (default: every edge).")
@json_option
def teleport_cmd(path: str, split: str | None, as_json: bool) -> None:
    """Compile a model into an acyclic one with post-selected teleportation."""

    def body() -> None:
        m = cm_from_document(read_document(path))
        edges = _csv(split) if split is not None else m.graph.edge_ids
        res = conditional_probabilities(build_teleport_model(m, edges))
        if isinstance(res, ZeroSuccess):
            _emit(as_json, {"status": "inconsistent", "success_prob": res.success_prob}, ["INCONSISTENT: zero success"])
            sys.exit(EXIT_INCONSISTENT)
        dist = res.distribution
        payload = {
            "status": "ok",
            "success_prob": res.success_prob,
            "variables": list(dist.variables),
            "probs": [[_jsonable(x), p] for x, p in dist.probs.items()],
        }
        lines = [f"success probability: {fmt(res.success_prob)}"] + _distribution_lines(dist.variables, dist.probs)
        _emit(as_json, payload, lines)

    _run(as_json, body)


@main.group("holo")
def holo_group() -> None:
    """Perfect tensors and hexagonal holographic patches."""


@holo_group.command("tensor")
@click.option("-o", "--output", required=True, type=click.Path())
def holo_tensor_cmd(output: str) -> None:
    """Write the six-leg perfect tensor."""
    write_document(tensor_to_document(six_leg_perfect_tensor()), output)
    click.echo(f"wrote {output}")


@holo_group.command("build")
@click.option("--layers", type=click.IntRange(0, 2), required=True)
@click.option("--expose", default="", help="Comma-separated open legs (v:leg) to turn into edges.")
@click.option("-o", "--output", type=click.Path(), default=None)
@json_option
def holo_build_cmd(layers: int, expose: str, output: str | None, as_json: bool) -> None:
    """Build a patch, report its shape and contraction, optionally write its network."""

    def body() -> None:
        patch = build_happy_patch(layers, expose=_csv(expose))
        plan = patch.plan()
        if output:
            write_document(tn_to_document(patch.network), output)
        payload = {
            "status": "ok",
            "ket_tensors": len(patch.ket_tensors),
            "bulk_edges": list(patch.bulk_edges),
            "boundary_legs": len(patch.boundary_legs),
            "cut_legs": len(patch.cut_legs),
            "exposed": list(patch.exposed),
            "contraction": patch.contraction(),
            "norm_squared": patch.norm_squared(),
            "peak_size": plan.peak_size,
        }
        lines = [
            f"ket tensors: {len(patch.ket_tensors)}",
            f"bulk edges: {len(patch.bulk_edges)}",
            f"boundary legs: {len(patch.boundary_legs)}",
            f"cut legs: {len(patch.cut_legs)}",
            f"contraction: {fmt(payload['contraction'])}",
            f"norm squared: {fmt(payload['norm_squared'])}",
            f"peak intermediate: {plan.peak_size}",
        ]
        if output:
            lines.append(f"wrote {output}")
        _emit(as_json, payload, lines)

    _run(as_json, body)


@holo_group.command("check-perfect")
@click.argument("path", type=click.Path(exists=True), required=False)
@json_option
def holo_check_cmd(path: str | None, as_json: bool) -> None:
    """Check every bipartition of a tensor (default: the six-leg perfect tensor)."""

    def body() -> None:
        t = six_leg_perfect_tensor() if path is None else tensor_from_document(read_document(path))
        rep = check_perfect(t)
        payload = {
            "status": "ok",
            "perfect": rep.perfect(),
            "n_bipartitions": len(rep.results),
            "max_residual": rep.max_residual,
            "results": [{"legs": list(r.legs), "residual": r.residual, "constant": r.constant} for r in rep.results],
        }
        lines = [
            f"bipartitions: {len(rep.results)}",
            f"max residual: {fmt(rep.max_residual)}",
            f"perfect: {'yes' if rep.perfect() else 'no'}",
        ]
        _emit(as_json, payload, lines)

    _run(as_json, body)


@holo_group.command("influence")
@click.option("--layers", type=click.IntRange(0, 2), default=2, show_default=True)
@click.option("--expose", default="", help="Comma-separated open legs (v:leg) to turn into edges.")
@click.option("--region-a", required=True)
@click.option("--region-b", required=True)
@click.option("--directions", default="radial", show_default=True,
              help="Bitstring over the patch's edges, 'radial', or 'none' to skip the graph check.")
@seed_option
@samples_option
@instruments_option
@tol_option
@json_option
def holo_influence_cmd(layers, expose, region_a, region_b, directions, seed, samples, instruments, tol, as_json) -> None:
    """Sampled influence on a patch with a graph-separation cross-check."""

    def body() -> None:
        patch = build_happy_patch(layers, expose=_csv(expose))
        if directions == "none":
            d = None
        elif directions == "radial":
            d = radial_orientation(patch)
        else:
            d = parse_directions(directions, patch.network.graph.edge_ids)
        config = _config(seed, samples, instruments, tol, product=True)
        rep = holo_influence(patch, _csv(region_a), _csv(region_b), config, d)
        payload = {"status": "ok", **_verdict_payload(rep.verdict), "consistent": rep.consistent}
        lines = [_verdict_line(rep.verdict)]
        if rep.separation is not None:
            sep = rep.separation
            payload.update(
                {
                    "directions": format_directions(sep.directions),
                    "marked": sorted(sep.marked),
                    "d_separated": sep.d_separated,
                    "p_separated": sep.p_separated,
                    "forced_by_graph": rep.forced_by_graph,
                }
            )
            dsep = "n/a (cyclic)" if sep.d_separated is None else str(sep.d_separated)
            lines += [
                f"marked: {', '.join(sorted(sep.marked)) or '-'}",
                f"d-separated: {dsep}",
                f"p-separated: {sep.p_separated}",
                f"graph forces no influence: {rep.forced_by_graph}",
                f"consistent: {rep.consistent}",
            ]
        _emit(as_json, payload, lines)

    _run(as_json, body)


if __name__ == "__main__":
    main()
