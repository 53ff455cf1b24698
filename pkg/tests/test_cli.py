from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner
from numpy.testing import assert_array_equal

from tncausal.cli import (
    EXIT_INCONSISTENT,
    EXIT_INVALID,
    FORMAT_VERSION,
    cm_from_document,
    cm_to_document,
    decode_array,
    encode_array,
    main,
    read_document,
    tensor_from_document,
    tensor_to_document,
    tn_from_document,
    tn_to_document,
    write_document,
)
from tncausal.cm import cycle_weights
from tncausal.graphs import UndirectedEdge, UndirectedMultigraph
from tncausal.holo import b_name, bulk_edge_id, six_leg_perfect_tensor
from tncausal.linalg import DenseTensor, SquareOperator
from tncausal.mapping import cm_to_tn
from tncausal.tn import TensorNetwork

from conftest import X, bell_model, chain_model, loop_model, random_psd, two_cycle_model
from test_cm import sink_chain


def edge_network() -> TensorNetwork:
    """Single edge ``{A, B}`` with ``P_A = |0><0|`` and ``P_B = I/2``."""
    g = UndirectedMultigraph(("A", "B"), (UndirectedEdge("e", "A", "B", 2),))
    return TensorNetwork(
        g,
        {"A": SquareOperator((("e", 2),), np.diag([1.0, 0.0])), "B": SquareOperator((("e", 2),), np.eye(2) / 2)},
    )


def coefficient_document(c, m, b) -> dict:
    """``c -i- M -j- b`` with every vertex given by tensor coefficients."""

    def vertex(factors, data):
        return {"kind": "tensor-coeffs", "factors": factors, "tensor": encode_array(np.asarray(data))}

    return {
        "version": FORMAT_VERSION,
        "kind": "tn",
        "vertices": [{"id": "b"}, {"id": "c"}, {"id": "m"}],
        "edges": [{"id": "i", "u": "c", "w": "m", "dim": 2}, {"id": "j", "u": "b", "w": "m", "dim": 3}],
        "operators": {
            "c": vertex([["i", 2]], c),
            "m": vertex([["i", 2], ["j", 3]], m),
            "b": vertex([["j", 3]], b),
        },
    }


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def save(tmp_path):
    def _save(doc, name="doc.json"):
        path = tmp_path / name
        write_document(doc, path)
        return str(path)

    return _save


def invoke_json(runner, args):
    out = runner.invoke(main, [*args, "--json"])
    return out, json.loads(out.output.splitlines()[-1])


class TestDocuments:
    def test_array_round_trip_exact(self, rng):
        a = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
        back = decode_array(json.loads(json.dumps(encode_array(a))))
        assert_array_equal(back, a)

    def test_tn_round_trip(self, rng, tmp_path):
        tn = cm_to_tn(two_cycle_model(rng))
        write_document(tn_to_document(tn), tmp_path / "tn.json")
        back = tn_from_document(read_document(tmp_path / "tn.json"))
        assert back.graph.edge_ids == tn.graph.edge_ids
        for v, op in tn.vertex_ops.items():
            assert back.vertex_ops[v].factors == op.factors
            assert_array_equal(back.vertex_ops[v].matrix, op.matrix)

    def test_cm_round_trip(self, rng, tmp_path):
        for m in (bell_model(), two_cycle_model(rng, 3)):
            write_document(cm_to_document(m), tmp_path / "cm.json")
            back = cm_from_document(read_document(tmp_path / "cm.json"))
            assert back.graph.vertices == m.graph.vertices
            for v, mech in m.mechanisms.items():
                if hasattr(mech, "povm"):
                    assert back.mechanisms[v].labels == mech.labels
                    for p, q in zip(back.mechanisms[v].povm, mech.povm):
                        assert_array_equal(p, q)
                else:
                    assert_array_equal(back.mechanisms[v].choi, mech.choi)

    def test_tensor_round_trip(self):
        t = six_leg_perfect_tensor()
        back = tensor_from_document(json.loads(json.dumps(tensor_to_document(t))))
        assert back.axes == t.axes
        assert_array_equal(back.data, t.data)

    def test_state_kind_in_cm(self, save, runner):
        doc = cm_to_document(chain_model())
        doc["operators"]["P"] = {"kind": "state", "out": [["pa", 2]], "matrix": encode_array(np.diag([0.0, 1.0]))}
        out = runner.invoke(main, ["probs", save(doc)])
        assert out.exit_code == 0
        assert "P(1) = 1" in out.output


class TestContract:
    def test_coefficient_document(self, rng, runner, save):
        c, m, b = rng.normal(size=2), rng.normal(size=(2, 3)), rng.normal(size=3)
        out = runner.invoke(main, ["contract", save(coefficient_document(c, m, b))])
        assert out.exit_code == 0
        assert float(out.output) == pytest.approx(abs(c @ m @ b) ** 2, rel=1e-12)

    def test_json(self, runner, save):
        out, payload = invoke_json(runner, ["contract", save(tn_to_document(edge_network()))])
        assert payload["status"] == "ok"
        assert payload["value"] == pytest.approx(0.5)

    def test_seventeen_digits(self, runner, save):
        out = runner.invoke(main, ["contract", save(tn_to_document(edge_network()))])
        assert out.output.strip() == format(0.5, ".17g")


class TestProbs:
    def test_bell(self, runner, save):
        out = runner.invoke(main, ["probs", save(cm_to_document(bell_model()))])
        assert out.exit_code == 0
        rows = [line for line in out.output.splitlines() if line.startswith("P(")]
        assert rows == ["P(0,0) = 0.5", "P(1,1) = 0.5"]

    def test_inconsistent(self, runner, save):
        out = runner.invoke(main, ["probs", save(cm_to_document(loop_model(X)))])
        assert out.exit_code == EXIT_INCONSISTENT
        assert "INCONSISTENT" in out.output

    def test_json(self, runner, save):
        out, payload = invoke_json(runner, ["probs", save(cm_to_document(bell_model()))])
        assert payload["variables"] == ["A", "B"]
        probs = {tuple(x): p for x, p in payload["probs"]}
        assert probs[(0, 0)] == pytest.approx(0.5)


class TestMap:
    def test_tn2cm_trace_condition(self, runner, save, tmp_path):
        out = runner.invoke(main, ["map", "tn2cm", save(tn_to_document(edge_network())), "--directions", "1", "-o", str(tmp_path / "o.json")])
        assert out.exit_code == EXIT_INVALID
        assert "A" in out.output
        assert not (tmp_path / "o.json").exists()

    def test_tn2cm_trace_condition_json(self, runner, save, tmp_path):
        out, payload = invoke_json(
            runner, ["map", "tn2cm", save(tn_to_document(edge_network())), "--directions", "1", "-o", str(tmp_path / "o.json")]
        )
        assert out.exit_code == EXIT_INVALID
        assert payload["vertices"] == ["A"]

    def test_tn2cm_valid_direction(self, runner, save, tmp_path):
        target = tmp_path / "cm.json"
        out = runner.invoke(main, ["map", "tn2cm", save(tn_to_document(edge_network())), "--directions", "0", "-o", str(target)])
        assert out.exit_code == 0
        m = cm_from_document(read_document(target))
        assert [(e.src, e.dst) for e in m.graph.edges] == [("A", "B")]

    def test_tn2cm_general(self, runner, save, tmp_path):
        out, payload = invoke_json(
            runner,
            ["map", "tn2cm", save(tn_to_document(edge_network())), "--directions", "1", "--general", "-o", str(tmp_path / "g.json")],
        )
        assert out.exit_code == 0
        assert payload["marked"] == ["A"]
        assert cm_from_document(read_document(tmp_path / "g.json")).graph.edges

    def test_cm2tn_then_contract(self, rng, runner, save, tmp_path):
        m = two_cycle_model(rng)
        target = str(tmp_path / "tn.json")
        assert runner.invoke(main, ["map", "cm2tn", save(cm_to_document(m)), "-o", target]).exit_code == 0
        out = runner.invoke(main, ["contract", target])
        expected = float(cycle_weights(m).sum().real) / m.edge_dim_total
        assert float(out.output) == pytest.approx(expected, rel=1e-10)

    def test_wrong_bit_count(self, runner, save, tmp_path):
        out = runner.invoke(main, ["map", "tn2cm", save(tn_to_document(edge_network())), "--directions", "01", "-o", str(tmp_path / "o.json")])
        assert out.exit_code == EXIT_INVALID


class TestInfluence:
    def test_forward_detected(self, runner, save):
        path = save(tn_to_document(cm_to_tn(sink_chain())))
        out = runner.invoke(main, ["influence", path, "--region-a", "e1", "--region-b", "e2"])
        assert out.exit_code == 0
        assert out.output.startswith("verdict: DETECTED")

    def test_seed_reproducible(self, rng, runner, save):
        path = save(tn_to_document(cm_to_tn(two_cycle_model(rng))))
        args = ["influence", path, "--region-a", "ab", "--region-b", "bc", "--seed", "7", "--json"]
        assert runner.invoke(main, args).output == runner.invoke(main, args).output

    def test_chqy(self, runner, save):
        path = save(tn_to_document(cm_to_tn(sink_chain())))
        out, payload = invoke_json(runner, ["influence", path, "--region-a", "e1", "--region-b", "e2", "--measure", "chqy"])
        assert payload["verdict"] == "detected"

    def test_overlapping_regions(self, runner, save):
        path = save(tn_to_document(cm_to_tn(sink_chain())))
        out = runner.invoke(main, ["influence", path, "--region-a", "e1", "--region-b", "e1"])
        assert out.exit_code == EXIT_INVALID

    def test_signal_bell(self, runner, save):
        out, payload = invoke_json(runner, ["signal", save(cm_to_document(bell_model())), "--lab-a", "sa", "--lab-b", "sb"])
        assert out.exit_code == 0
        assert payload["verdict"] == "not_detected"

    def test_bridge(self, runner, save):
        path = save(tn_to_document(cm_to_tn(sink_chain())))
        out, payload = invoke_json(runner, ["bridge", path, "--directions", "01", "--region-a", "e1", "--region-b", "e2"])
        assert payload["ok"]
        assert payload["n_samples"] == 32
        assert payload["max_deviation"] <= 1e-9


class TestGraphCommands:
    def test_dsep_chain(self, runner, save):
        path = save(cm_to_document(chain_model()))
        assert runner.invoke(main, ["dsep", path, "--x", "P", "--y", "B", "--z", "A"]).output.strip() == "separated"
        assert runner.invoke(main, ["dsep", path, "--x", "P", "--y", "B"]).output.strip() == "connected"

    def test_psep_two_cycle(self, rng, runner, save):
        out, payload = invoke_json(runner, ["psep", save(cm_to_document(two_cycle_model(rng))), "--x", "A", "--y", "C"])
        assert payload["separated"] is False

    def test_dsep_cyclic_rejected(self, rng, runner, save):
        out = runner.invoke(main, ["dsep", save(cm_to_document(two_cycle_model(rng))), "--x", "A", "--y", "C"])
        assert out.exit_code == EXIT_INVALID

    def test_rotations(self, rng, runner, save):
        tn = TensorNetwork(
            UndirectedMultigraph(("A", "B"), (UndirectedEdge("e", "A", "B", 2), UndirectedEdge("f", "A", "B", 2))),
            {v: SquareOperator((("e", 2), ("f", 2)), random_psd(rng, 4)) for v in "AB"},
        )
        out, payload = invoke_json(runner, ["rotations", save(tn_to_document(tn))])
        assert len(payload["rows"]) == 4
        for row in payload["rows"]:
            assert row["predicted_contraction"] == pytest.approx(payload["contraction"], rel=1e-9)

    def test_help_mentions_bit_order(self, runner):
        assert "lexicographic" in runner.invoke(main, ["--help"]).output


class TestTeleport:
    def test_two_cycle(self, rng, runner, save):
        out, payload = invoke_json(runner, ["teleport", save(cm_to_document(two_cycle_model(rng)))])
        assert out.exit_code == 0
        assert 0 < payload["success_prob"] <= 1
        assert sum(p for _, p in payload["probs"]) == pytest.approx(1.0)

    def test_partial_split(self, rng, runner, save):
        out = runner.invoke(main, ["teleport", save(cm_to_document(two_cycle_model(rng))), "--split", "ab"])
        assert out.exit_code == 0
        assert out.output.startswith("success probability:")

    def test_retained_cycle(self, rng, runner, save):
        out = runner.invoke(main, ["teleport", save(cm_to_document(two_cycle_model(rng))), "--split", "bc"])
        assert out.exit_code == EXIT_INVALID

    def test_zero_success(self, runner, save):
        out = runner.invoke(main, ["teleport", save(cm_to_document(loop_model(X)))])
        assert out.exit_code == EXIT_INCONSISTENT


class TestHolo:
    def test_tensor_then_check(self, runner, tmp_path):
        target = str(tmp_path / "t.json")
        assert runner.invoke(main, ["holo", "tensor", "-o", target]).exit_code == 0
        out, payload = invoke_json(runner, ["holo", "check-perfect", target])
        assert payload["perfect"] and payload["n_bipartitions"] == 41

    def test_check_ghz(self, runner, save):
        data = np.zeros((2,) * 4)
        data[0, 0, 0, 0] = data[1, 1, 1, 1] = 2**-0.5
        t = DenseTensor(tuple((f"l{i}", 2) for i in range(4)), data)
        out = runner.invoke(main, ["holo", "check-perfect", save(tensor_to_document(t))])
        assert "perfect: no" in out.output

    def test_build(self, runner, tmp_path):
        out, payload = invoke_json(runner, ["holo", "build", "--layers", "2", "-o", str(tmp_path / "p.json")])
        assert payload["ket_tensors"] == 13
        assert payload["boundary_legs"] == 42
        assert payload["peak_size"] <= 4**8
        assert tn_from_document(read_document(tmp_path / "p.json")).graph.edges

    def test_influence_separated(self, runner):
        region_b = ",".join(bulk_edge_id("a", b_name(k)) for k in (1, 4, 5, 6))
        out, payload = invoke_json(
            runner, ["holo", "influence", "--region-a", bulk_edge_id("a", b_name(2)), "--region-b", region_b]
        )
        assert payload["verdict"] == "not_detected"
        assert payload["d_separated"] is True

    def test_region_on_boundary(self, runner):
        out = runner.invoke(main, ["holo", "influence", "--region-a", "a-b.1", "--region-b", "b.1:2"])
        assert out.exit_code == EXIT_INVALID


class TestValidation:
    def test_bad_version(self, runner, save):
        doc = tn_to_document(edge_network())
        doc["version"] = "other/9"
        assert runner.invoke(main, ["contract", save(doc)]).exit_code == EXIT_INVALID

    def test_wrong_kind(self, runner, save):
        assert runner.invoke(main, ["probs", save(tn_to_document(edge_network()))]).exit_code == EXIT_INVALID

    def test_not_json(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        out, payload = invoke_json(runner, ["contract", str(path)])
        assert out.exit_code == EXIT_INVALID
        assert payload["status"] == "error"

    def test_missing_field(self, runner, save):
        doc = tn_to_document(edge_network())
        del doc["edges"]
        assert runner.invoke(main, ["contract", save(doc)]).exit_code == EXIT_INVALID

    def test_kind_mismatch(self, runner, save):
        doc = cm_to_document(bell_model())
        doc["vertices"][0]["kind"] = "observed"
        assert runner.invoke(main, ["probs", save(doc)]).exit_code == EXIT_INVALID
