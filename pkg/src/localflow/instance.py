"""JSON interchange for flow problems and seeded instance generators.

Graph files look like::

    {"vertices": [0, 1, 2],
     "edges": [{"id": 0, "tail": 0, "head": 1, "cost": {"kind": "quadratic", "a": 1.0}}],
     "external_flow": {"0": 1.0, "2": -1.0}}

Vertices missing from ``external_flow`` get zero.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from localflow.costs import LogCoshCost, QuadraticCost, cost_from_dict
from localflow.graph import (
    DirectedGraph,
    cycle_graph,
    grid_graph,
    path_graph,
    random_regular_graph,
)
from localflow.sensitivity import FlowProblem

FAMILIES = ("cycle", "path", "grid", "random-regular")


class InstanceError(ValueError):
    """Malformed graph file."""


def _key(label):
    return str(label)


def problem_from_dict(d: dict) -> FlowProblem:
    try:
        vertices = list(d["vertices"])
        edges = list(d["edges"])
        flow = dict(d.get("external_flow", {}))
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"graph file is missing a field: {exc}") from None
    index = {_key(v): i for i, v in enumerate(vertices)}
    if len(index) != len(vertices):
        raise InstanceError("duplicate vertex ids")
    tails, heads, ids, costs = [], [], [], []
    for e in edges:
        try:
            tails.append(index[_key(e["tail"])])
            heads.append(index[_key(e["head"])])
        except KeyError as exc:
            raise InstanceError(f"edge refers to unknown vertex {exc}") from None
        ids.append(e.get("id", len(ids)))
        costs.append(cost_from_dict(e.get("cost", {"kind": "quadratic"})))
    b = np.zeros(len(vertices))
    for k, val in flow.items():
        if _key(k) not in index:
            raise InstanceError(f"external flow at unknown vertex {k!r}")
        b[index[_key(k)]] = float(val)
    g = DirectedGraph(len(vertices), np.array(tails, dtype=np.int64),
                      np.array(heads, dtype=np.int64),
                      vertex_labels=tuple(vertices), edge_labels=tuple(ids))
    return FlowProblem(g, costs, b)


def problem_to_dict(p: FlowProblem) -> dict:
    g = p.graph
    return {
        "vertices": list(g.vertex_labels),
        "edges": [{"id": g.edge_labels[e], "tail": g.vertex_labels[t],
                   "head": g.vertex_labels[h], "cost": p.costs.models[e].to_dict()}
                  for e, (t, h) in enumerate(g.edges)],
        "external_flow": {_key(g.vertex_labels[v]): float(p.b[v])
                          for v in np.flatnonzero(p.b)},
    }


def load_problem(path) -> FlowProblem:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON ({exc})") from None
    return problem_from_dict(d)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_problem(p: FlowProblem, path):
    Path(path).write_text(dumps(problem_to_dict(p)))


def make_graph(family: str, size: int, k: int = 3, seed=None) -> DirectedGraph:
    if family == "cycle":
        return cycle_graph(size)
    if family == "path":
        return path_graph(size)
    if family == "grid":
        return grid_graph(size)
    if family == "random-regular":
        return random_regular_graph(size, k, seed=seed)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def make_costs(kind: str, m: int, alpha=1.0, beta=2.0):
    if kind == "quadratic":
        return [QuadraticCost(alpha)] * m
    if kind == "logcosh":
        return [LogCoshCost(alpha, beta)] * m
    raise ValueError(f"unknown cost kind {kind!r}")


def unit_demand(g: DirectedGraph, source: int = 0) -> np.ndarray:
    """One unit from ``source`` to the (lowest-id) vertex farthest from it."""
    b = np.zeros(g.n_vertices)
    if g.n_vertices > 1:
        sink = int(np.argmax(g.distances_from([source])))
        b[source], b[sink] = 1.0, -1.0
    return b


def random_demand(n: int, rng: np.random.Generator) -> np.ndarray:
    b = rng.standard_normal(n)
    return b - b.mean()
