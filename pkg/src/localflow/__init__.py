"""Sensitivity, decay of correlation and localized re-solves for min-cost network flow."""
from localflow._backend import BACKEND
from localflow.costs import EdgeCosts, LogCoshCost, QuadraticCost
from localflow.graph import DirectedGraph, GraphError, Subgraph, ball, induced_subgraph
from localflow.sensitivity import (
    ConvergenceError,
    FlowProblem,
    InfeasibleFlowError,
    SensitivityOperator,
    Solution,
    sensitivity_at,
    sensitivity_operator,
    solve_exact,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConvergenceError", "DirectedGraph", "EdgeCosts", "FlowProblem", "GraphError",
    "InfeasibleFlowError", "LogCoshCost", "QuadraticCost", "SensitivityOperator", "Solution",
    "Subgraph", "ball", "induced_subgraph", "sensitivity_at", "sensitivity_operator",
    "solve_exact",
]
