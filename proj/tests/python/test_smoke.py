import json
import math

import numpy as np
import pytest

import bleg


def test_synthetic_dataset_shapes():
    graphs = bleg.synthetic_dataset(n_graphs=4, n_nodes=10, time_points=30, signal=0.5, seed=3)
    assert len(graphs) == 4
    g = graphs[0]
    assert g["features"].shape[0] == 10
    assert g["adjacency"].shape == (10, 10)
    assert np.allclose(g["adjacency"], g["adjacency"].T)
    again = bleg.synthetic_dataset(n_graphs=4, n_nodes=10, time_points=30, signal=0.5, seed=3)
    assert np.array_equal(g["features"], again[0]["features"])


def test_serialize_round_trip():
    g = bleg.synthetic_dataset(n_graphs=2, n_nodes=8, time_points=30, seed=1)[0]
    text = bleg.serialize_graph(g["features"], g["adjacency"])
    edges, means = bleg.parse_graph_text(text)
    assert len(means) == 8
    for i, j, w in edges:
        assert i < j
        assert w != 0.0


def test_metrics_worked_example():
    m = bleg.compute_metrics([1, 0, 1, 1], [1, 0, 0, 1], [0.9, 0.2, 0.6, 0.8])
    assert m["acc"] == pytest.approx(0.75)
    assert m["auc"] == pytest.approx(1.0)
    undefined = bleg.compute_metrics([1, 1], [1, 1], [0.7, 0.8])
    assert undefined["auc"] is None


def test_split_is_a_partition():
    labels = [0, 1] * 20
    assignment = bleg.make_split(labels, "ratio", seed=5)
    assert len(assignment) == len(labels)


def test_alignment_loss_zero_for_identical_rows():
    z = np.random.default_rng(0).normal(size=(5, 4))
    assert bleg.alignment_loss(z, z) == pytest.approx(0.0, abs=1e-12)
    assert bleg.alignment_loss(z, -z) > 0.0


def test_information_identities():
    # X = Y xor Z with independent fair bits.
    probs = [0.0] * 8
    for y in (0, 1):
        for z in (0, 1):
            probs[((y ^ z) * 2 + y) * 2 + z] = 0.25
    sizes = [2, 2, 2]
    assert bleg.mutual_information(sizes, probs, [0], [1]) == pytest.approx(0.0, abs=1e-12)
    assert bleg.mutual_information(sizes, probs, [0], [1], [2]) == pytest.approx(math.log(2))
    report = bleg.theorem_check(sizes, probs)
    assert report["chain_rule_gap"] < 1e-12
    assert report["strict_gain"]


def test_cli_in_process(tmp_path):
    code, out, err = bleg.run(["theory-check", "--run-dir", str(tmp_path / "run"), "--seed", "2"])
    assert code == 0, err
    last = json.loads(out.strip().splitlines()[-1])
    assert last["status"] == "ok"
    code, _, err = bleg.run(["sft", "--out", str(tmp_path)])
    assert code == 1
    assert json.loads(err)["error"]["command"] == "sft"


def test_errors_are_translated():
    with pytest.raises(bleg.BlegError):
        bleg.serialize_graph(np.zeros((3, 2)), np.zeros((4, 4)))
