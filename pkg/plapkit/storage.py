# plapkit/storage.py
"""Graph, field and report files: the data access layer of the toolkit."""
import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
from pydantic import BaseModel

from . import schemas
from .dgraph import GraphError, WeightedGraph

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def fmt(x: float) -> str:
    """17 significant digits, the CSV number format."""
    return format(float(x), ".17g")


# Graphs
def graph_from_payload(payload: schemas.GraphIn) -> WeightedGraph:
    ids = [node.id for node in payload.nodes]
    index = {node_id: i for i, node_id in enumerate(ids)}
    if len(index) != len(ids):
        raise GraphError("duplicate node id in graph file")
    try:
        tails = [index[e.tail] for e in payload.edges]
        heads = [index[e.head] for e in payload.edges]
    except KeyError as e:
        raise GraphError(f"edge references unknown node {e.args[0]}") from e
    coords = None
    if payload.nodes and all(node.coords is not None for node in payload.nodes):
        coords = np.array([node.coords for node in payload.nodes], dtype=np.int64)
    root = index[payload.root] if payload.root is not None else 0
    return WeightedGraph(
        tails=np.array(tails, dtype=np.int64),
        heads=np.array(heads, dtype=np.int64),
        weights=np.array([e.weight for e in payload.edges], dtype=float),
        measure=np.array([node.measure for node in payload.nodes], dtype=float),
        boundary=np.array([node.boundary for node in payload.nodes], dtype=bool),
        node_ids=tuple(ids),
        coords=coords,
        root=root,
    )


def graph_to_payload(g: WeightedGraph) -> schemas.GraphIn:
    nodes = [
        schemas.NodeIn(
            id=g.node_ids[i],
            measure=float(g.measure[i]),
            boundary=bool(g.boundary[i]),
            coords=None if g.coords is None else [int(c) for c in g.coords[i]],
        )
        for i in range(g.n_nodes)
    ]
    edges = [
        schemas.EdgeIn(
            tail=g.node_ids[int(t)], head=g.node_ids[int(h)], weight=float(w)
        )
        for t, h, w in zip(g.tails, g.heads, g.weights)
    ]
    return schemas.GraphIn(nodes=nodes, edges=edges, root=g.node_ids[g.root])


def load_graph(path: PathLike) -> WeightedGraph:
    payload = schemas.GraphIn.model_validate_json(Path(path).read_text(encoding="utf-8"))
    g = graph_from_payload(payload)
    logger.debug("loaded graph %s: %d nodes, %d edges", path, g.n_nodes, g.n_edges)
    return g


def save_graph(g: WeightedGraph, path: PathLike) -> Path:
    return write_json(graph_to_payload(g), path)


# Fields
def field_from_values(g: WeightedGraph, values: Dict[int, Union[float, List[float]]]) -> np.ndarray:
    missing = [node_id for node_id in g.node_ids if node_id not in values]
    if missing:
        raise GraphError(f"field misses {len(missing)} node(s), e.g. id {missing[0]}")
    rows = [values[node_id] for node_id in g.node_ids]
    out = np.array(rows, dtype=float)
    if out.ndim == 2 and out.shape[1] == 0:
        raise GraphError("map field with empty target")
    return out


def field_to_values(g: WeightedGraph, u: np.ndarray) -> Dict[int, Union[float, List[float]]]:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return {node_id: float(u[i]) for i, node_id in enumerate(g.node_ids)}
    return {node_id: [float(x) for x in u[i]] for i, node_id in enumerate(g.node_ids)}


def load_field(g: WeightedGraph, path: PathLike) -> np.ndarray:
    """JSON {"values": {id: value | [values]}} or CSV with header id,v0[,v1,...]."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[0] != "id":
            raise GraphError(f"field CSV {path} must start with an 'id' column")
        values: Dict[int, Union[float, List[float]]] = {}
        for row in reader:
            if not row:
                continue
            numbers = [float(x) for x in row[1:]]
            values[int(row[0])] = numbers[0] if len(header) == 2 else numbers
        return field_from_values(g, values)
    payload = schemas.FieldIn.model_validate_json(text)
    return field_from_values(g, payload.values)


def save_field(g: WeightedGraph, u: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return write_csv(path, field_header(u), field_rows(g, u))
    return write_json(schemas.FieldIn(values=field_to_values(g, u)), path)


def field_header(u: np.ndarray) -> List[str]:
    u = np.asarray(u)
    if u.ndim == 1:
        return ["id", "value"]
    return ["id"] + [f"v{i}" for i in range(u.shape[1])]


def field_rows(g: WeightedGraph, u: np.ndarray) -> List[List[str]]:
    u = np.asarray(u, dtype=float)
    rows = []
    for i, node_id in enumerate(g.node_ids):
        values = [u[i]] if u.ndim == 1 else list(u[i])
        rows.append([str(node_id)] + [fmt(x) for x in values])
    return rows


# Writers
def write_json(model: BaseModel, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    path.write_text(buffer.getvalue(), encoding="utf-8")
    logger.debug("wrote %s", path)
    return path
