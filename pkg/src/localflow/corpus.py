"""A fixed, seeded set of small test instances covering the graph and cost families."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from localflow.costs import LogCoshCost, QuadraticCost
from localflow.graph import (
    DirectedGraph,
    cycle_graph,
    grid_graph,
    path_graph,
    random_regular_graph,
)
from localflow.instance import random_demand
from localflow.sensitivity import FlowProblem

CORPUS_SEED = 7


@dataclass(frozen=True)
class Instance:
    name: str
    problem: FlowProblem

    @property
    def kind(self) -> str:
        return self.name.rsplit("-", 1)[1]


def _quadratic(g, rng):
    return [QuadraticCost(a=float(rng.uniform(1.0, 2.0)), c=float(rng.uniform(-0.5, 0.5)))
            for _ in range(g.n_edges)]


def _logcosh(g, rng):
    return [LogCoshCost(alpha=1.0, beta=float(rng.uniform(1.5, 3.0))) for _ in range(g.n_edges)]


def _uniform(g, rng):
    # Q = 1: identical curvature everywhere, linear terms vary
    return [QuadraticCost(a=1.0, c=float(rng.uniform(-0.5, 0.5))) for _ in range(g.n_edges)]


_COSTS = {"quadratic": _quadratic, "logcosh": _logcosh, "uniform": _uniform}


def corpus_graphs() -> list[tuple[str, DirectedGraph]]:
    return [
        ("triangle", cycle_graph(3)),
        ("path5", path_graph(5)),
        ("path12", path_graph(12)),
        ("cycle5", cycle_graph(5)),
        ("cycle8", cycle_graph(8)),
        ("cycle13", cycle_graph(13)),
        ("cycle20", cycle_graph(20)),
        ("grid3", grid_graph(3)),
        ("grid4", grid_graph(4)),
        ("grid5", grid_graph(5)),
        ("grid6", grid_graph(6)),
        ("rr3_12", random_regular_graph(12, 3, seed=1)),
        ("rr3_30", random_regular_graph(30, 3, seed=2)),
        ("rr3_50", random_regular_graph(50, 3, seed=3)),
    ]


def build_corpus(kinds=("quadratic", "logcosh", "uniform"), seed: int = CORPUS_SEED) -> list[Instance]:
    """Every corpus graph with each requested cost kind and a random balanced demand."""
    out = []
    rng = np.random.default_rng(seed)
    for name, g in corpus_graphs():
        for kind in kinds:
            costs = _COSTS[kind](g, rng)
            b = random_demand(g.n_vertices, rng)
            out.append(Instance(f"{name}-{kind}", FlowProblem(g, costs, b)))
    return out
