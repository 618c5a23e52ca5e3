"""Projected gradient descent on ``{A x = b}``, global and with a frozen boundary.

The localized map only moves the flow on the edges of a subgraph ``G'`` and
keeps every other edge at its current value; with ``x`` consistent outside
``G'`` this is ordinary projected gradient descent on the reduced problem

    min sum_{e in E'} f_e(u_e)   s.t.   A' u = b',
    b' = b_{V'} - A_{V', E' complement} x_{E' complement}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from localflow.graph import Subgraph
from localflow.sensitivity import (
    FlowProblem,
    InfeasibleFlowError,
    Solution,
    check_balanced,
    laplacian_pseudoinverse,
)


class BoundaryConsistencyError(ValueError):
    """Frozen flow does not satisfy conservation outside the subgraph."""


class SupportError(ValueError):
    """Perturbation has mass outside the subgraph's vertices."""


@dataclass(frozen=True)
class PGDConfig:
    step: float | None = None       # None -> 1 / beta of the problem
    max_iters: int = 1000
    tol: float = 0.0                 # stop when |x_{k+1} - x_k| <= tol

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def step_for(self, p: FlowProblem) -> float:
        return float(self.step) if self.step is not None else 1.0 / float(p.costs.beta.max())


@dataclass(frozen=True)
class LocalSolveResult:
    x_hat: np.ndarray
    iterations: int
    frozen_edges: np.ndarray
    trace: list = field(default_factory=list)


class Projector:
    """``x -> x - A^T (A A^T)^+ (A x - b)``; the pseudoinverse is built once."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        m = self.A.shape[0]
        if self.A.shape[1] == 0:
            self.M = np.zeros((0, m))
        else:
            # A A^T is the unweighted Laplacian of the (connected) graph
            self.M = self.A.T @ laplacian_pseudoinverse(self.A @ self.A.T)

    def __call__(self, x, b):
        return x - self.M @ (self.A @ x - b)


_PROJECTORS = {}


def projector_for(key, A) -> Projector:
    """Projector cached by ``key`` (a graph or subgraph; both hash by content/identity)."""
    proj = _PROJECTORS.get(key)
    if proj is None:
        if len(_PROJECTORS) > 256:
            _PROJECTORS.clear()
        proj = _PROJECTORS[key] = Projector(A)
    return proj


def project_affine(A, b, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``{u : A u = b}`` for a connected incidence matrix."""
    b = check_balanced(b)
    return Projector(A)(np.asarray(x, dtype=float), b)


def pgd_step(p: FlowProblem, cfg: PGDConfig, x) -> np.ndarray:
    eta = cfg.step_for(p)
    proj = projector_for(p.graph, p.A)
    return proj(x - eta * p.gradient(x), p.b)


def pgd_solve(p: FlowProblem, cfg: PGDConfig, x0=None, record=False):
    """Run ``cfg.max_iters`` steps (or until successive iterates are within ``cfg.tol``).

    Returns ``(x, iterations, trace)``; ``trace`` holds the iterates when
    ``record`` is set.
    """
    x = np.zeros(p.graph.n_edges) if x0 is None else np.array(x0, dtype=float)
    trace = [x.copy()] if record else []
    it = 0
    while it < cfg.max_iters:
        x_new = pgd_step(p, cfg, x)
        it += 1
        if record:
            trace.append(x_new.copy())
        done = np.linalg.norm(x_new - x) <= cfg.tol
        x = x_new
        if done:
            break
    return x, it, trace


# -- localized map -------------------------------------------------------

def check_boundary(p: FlowProblem, sub: Subgraph, b, x, tol=1e-9):
    """``A_{V'^c, E'^c} x_{E'^c} = b_{V'^c}``."""
    Vc, Ec = sub.vertex_complement, sub.edge_complement
    if len(Vc) == 0:
        return
    lhs = p.A[np.ix_(Vc, Ec)] @ np.asarray(x)[Ec]
    gap = np.abs(lhs - np.asarray(b)[Vc]).max()
    if gap > tol * max(1.0, np.abs(b).max(), np.abs(x).max()):
        raise BoundaryConsistencyError(
            f"frozen flow violates conservation outside the subgraph by {gap:.3e}")


def reduced_flow(p: FlowProblem, sub: Subgraph, b, x) -> np.ndarray:
    """``b' = b_{V'} - A_{V', E'^c} x_{E'^c}``; always balanced for consistent ``x``."""
    V, Ec = sub.vertex_array, sub.edge_complement
    b_red = np.asarray(b, dtype=float)[V] - p.A[np.ix_(V, Ec)] @ np.asarray(x)[Ec]
    scale = max(1.0, np.abs(b_red).max())
    if abs(b_red.sum()) > 1e-9 * scale:
        raise InfeasibleFlowError(f"reduced external flow is not balanced: {b_red.sum():.3e}")
    return b_red


def reduced_problem(p: FlowProblem, sub: Subgraph, b, x) -> FlowProblem:
    """The flow problem on ``G'`` with costs restricted to ``E'`` and external flow ``b'``."""
    b_red = reduced_flow(p, sub, b, x)
    b_red = b_red - b_red.mean()   # remove roundoff-level imbalance
    return FlowProblem(sub.as_graph(), p.costs.subset(sub.edge_array), b_red)


def _local_projector(p: FlowProblem, sub: Subgraph) -> Projector:
    E, V = sub.edge_array, sub.vertex_array
    return projector_for(sub, p.A[np.ix_(V, E)])


def localized_step(p: FlowProblem, sub: Subgraph, b_new, x, cfg: PGDConfig | None = None,
                   check=True) -> np.ndarray:
    """One step of projected gradient descent restricted to the edges of ``sub``."""
    cfg = cfg or PGDConfig()
    x = np.asarray(x, dtype=float)
    b_new = check_balanced(b_new)
    if check:
        check_boundary(p, sub, b_new, x)
    E = sub.edge_array
    out = x.copy()
    if len(E) == 0:
        return out
    b_red = reduced_flow(p, sub, b_new, x)
    eta = cfg.step_for(p)
    u = x[E] - eta * p.gradient(x)[E]
    out[E] = _local_projector(p, sub)(u, b_red)
    return out


def local_resolve(p: FlowProblem, x_star_b: Solution, pert, sub: Subgraph, t: int,
                  cfg: PGDConfig | None = None, record=False) -> LocalSolveResult:
    """``t`` localized steps for ``b + pert`` started from ``x*(b)``."""
    cfg = cfg or PGDConfig()
    pert = check_balanced(pert, "perturbation")
    outside = sub.vertex_complement
    if len(outside) and np.any(pert[outside] != 0):
        raise SupportError("perturbation is not supported inside the subgraph")
    if t < 0:
        raise ValueError("t must be nonnegative")
    b_new = p.b + pert
    x = np.array(x_star_b.x, dtype=float)
    check_boundary(p, sub, b_new, x)
    E = sub.edge_array
    trace = [x.copy()] if record else []
    if len(E):
        b_red = reduced_flow(p, sub, b_new, x)
        proj = _local_projector(p, sub)
        costs = p.costs.subset(E)
        eta = cfg.step_for(p)
        u = x[E].copy()
        # E'^c never changes, so b' is fixed for the whole run
        for _ in range(t):
            u = proj(u - eta * costs.grad(u), b_red)
            if record:
                x_rec = x.copy()
                x_rec[E] = u
                trace.append(x_rec)
        x[E] = u
    elif record:
        trace.extend(x.copy() for _ in range(t))
    return LocalSolveResult(x_hat=x, iterations=int(t), frozen_edges=sub.edge_complement,
                            trace=trace)


def feasibility_residual(p: FlowProblem, x, b=None) -> float:
    b = p.b if b is None else b
    return float(np.linalg.norm(p.A @ x - b))

