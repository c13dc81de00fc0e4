# tests/test_storage.py
import json

import numpy as np
import pytest

from plapkit import schemas, storage
from plapkit.dgraph import GraphError, lattice_ball_graph, path_graph


def test_fmt_keeps_full_precision():
    assert storage.fmt(0.1) == "0.10000000000000001"
    assert float(storage.fmt(1 / 3)) == 1 / 3
    assert storage.fmt(2) == "2"


def test_graph_file_preserves_structure(tmp_path):
    g = lattice_ball_graph(2, 3)
    path = storage.save_graph(g, tmp_path / "ball.json")
    loaded = storage.load_graph(path)
    assert loaded.node_ids == g.node_ids
    assert loaded.root == g.root
    np.testing.assert_array_equal(loaded.tails, g.tails)
    np.testing.assert_array_equal(loaded.boundary, g.boundary)
    np.testing.assert_array_equal(loaded.coords, g.coords)


def test_graph_payload_with_custom_ids():
    payload = schemas.GraphIn.model_validate(
        {
            "nodes": [{"id": 10, "boundary": True}, {"id": 20, "measure": 2.0}, {"id": 30, "boundary": True}],
            "edges": [{"tail": 10, "head": 20}, {"tail": 30, "head": 20, "weight": 3.0}],
            "root": 20,
        }
    )
    g = storage.graph_from_payload(payload)
    assert g.root == 1
    assert g.coords is None
    assert g.index_of(30) == 2
    np.testing.assert_array_equal(g.heads, [1, 1])
    np.testing.assert_array_equal(g.weights, [1.0, 3.0])


def test_graph_payload_errors():
    dangling = schemas.GraphIn.model_validate({"nodes": [{"id": 0}, {"id": 1}], "edges": [{"tail": 0, "head": 5}]})
    with pytest.raises(GraphError, match="unknown node 5"):
        storage.graph_from_payload(dangling)
    duplicate = schemas.GraphIn.model_validate({"nodes": [{"id": 0}, {"id": 0}], "edges": []})
    with pytest.raises(GraphError):
        storage.graph_from_payload(duplicate)


def test_field_files(tmp_path):
    g = path_graph(2)
    u = np.array([0.5, -1.0, 2.0, 0.25, 1e-20])
    np.testing.assert_array_equal(storage.load_field(g, storage.save_field(g, u, tmp_path / "u.csv")), u)
    np.testing.assert_array_equal(storage.load_field(g, storage.save_field(g, u, tmp_path / "u.json")), u)
    m = np.arange(10, dtype=float).reshape(5, 2) / 3.0
    np.testing.assert_array_equal(storage.load_field(g, storage.save_field(g, m, tmp_path / "m.csv")), m)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "id,v0,v1"


def test_field_errors(tmp_path):
    g = path_graph(2)
    (tmp_path / "short.json").write_text(json.dumps({"values": {"0": 1.0}}))
    with pytest.raises(GraphError, match="misses 4"):
        storage.load_field(g, tmp_path / "short.json")
    (tmp_path / "bad.csv").write_text("node,value\n0,1\n")
    with pytest.raises(GraphError):
        storage.load_field(g, tmp_path / "bad.csv")


def test_write_json_is_stable(tmp_path):
    out = schemas.CapacityOut(family="ray", p=2.0, rows=[(4, 0.25)], scaled=[1.0], trend="vanishing")
    first = storage.write_json(out, tmp_path / "a" / "capacity.json").read_bytes()
    second = storage.write_json(out, tmp_path / "b" / "capacity.json").read_bytes()
    assert first == second
    assert first.endswith(b"}\n")
    assert json.loads(first)["schema_version"] == "1"
