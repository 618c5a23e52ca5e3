"""Exact min-cost flow solves and the sensitivity of the optimal flow.

For a strongly convex separable cost the optimal flow ``x*(b)`` is C^1 along
``{b : sum(b) = 0}`` with derivative

    S(b) = Sigma(b) A^T L(b)^+,   Sigma(b) = diag(1 / f_e''(x*_e)),
    L(b) = A Sigma(b) A^T = Deg(b) - W(b),

the Laplacian of the undirected graph weighted by ``Sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from localflow.costs import EdgeCosts
from localflow.graph import DirectedGraph, incidence_matrix

FEASIBILITY_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""


class InfeasibleFlowError(ValueError):
    """External flow (or perturbation) does not sum to zero."""


def check_balanced(b, what="external flow"):
    b = np.asarray(b, dtype=float)
    if abs(b.sum()) > FEASIBILITY_TOL * np.linalg.norm(b):
        raise InfeasibleFlowError(f"{what} is not balanced: sum = {b.sum():.3e}")
    return b


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Minimize ``sum_e f_e(x_e)`` subject to ``A x = b``."""

    graph: DirectedGraph
    costs: EdgeCosts
    b: np.ndarray

    def __post_init__(self):
        costs = self.costs if isinstance(self.costs, EdgeCosts) else EdgeCosts(self.costs)
        object.__setattr__(self, "costs", costs)
        if len(costs) != self.graph.n_edges:
            raise ValueError("need exactly one cost per edge")
        b = check_balanced(self.b)
        if b.shape != (self.graph.n_vertices,):
            raise ValueError("b must have one entry per vertex")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @property
    def A(self) -> np.ndarray:
        return _incidence(self.graph)

    def with_flow(self, b) -> "FlowProblem":
        return FlowProblem(self.graph, self.costs, b)

    def objective(self, x) -> float:
        return float(self.costs.value(x).sum())

    def gradient(self, x) -> np.ndarray:
        return self.costs.grad(x)


_INCIDENCE = {}


def _incidence(g):
    # graphs are immutable and hash by identity
    A = _INCIDENCE.get(g)
    if A is None:
        if len(_INCIDENCE) > 512:
            _INCIDENCE.clear()
        A = incidence_matrix(g)
        A.flags.writeable = False
        _INCIDENCE[g] = A
    return A


@dataclass(frozen=True)
class Solution:
    x: np.ndarray
    dual: np.ndarray
    residual: float
    stationarity: float
    iterations: int


def laplacian_pseudoinverse(L, tol=1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a connected-graph Laplacian.

    Uses ``(L + J/n)^{-1} - J/n``; falls back to a thresholded symmetric
    eigendecomposition when that matrix is not numerically positive definite.
    Raises ``ValueError`` unless the kernel is exactly ``span{1}``.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if L.shape != (n, n) or not np.allclose(L, L.T, rtol=0, atol=1e-12 * max(1.0, np.abs(L).max())):
        raise ValueError("Laplacian must be a symmetric square matrix")
    scale = max(1.0, np.abs(L).max())
    if np.abs(L.sum(axis=1)).max() > 1e-10 * scale:
        raise ValueError("rows of a Laplacian must sum to zero")
    if n == 1:
        return np.zeros((1, 1))
    J = np.full((n, n), 1.0 / n)
    try:
        cf = linalg.cho_factor(L + J, check_finite=False)
        # a valid factor with a tiny pivot means the kernel is bigger than span{1}
        if np.abs(np.diag(cf[0])).min() ** 2 > tol * scale:
            Lp = linalg.cho_solve(cf, np.eye(n), check_finite=False) - J
            return 0.5 * (Lp + Lp.T)
    except linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(L)
    keep = w > tol * max(w.max(), 1e-300)
    if n - keep.sum() != 1:
        raise ValueError(f"Laplacian kernel has dimension {n - keep.sum()}, expected 1")
    return (V[:, keep] / w[keep]) @ V[:, keep].T


@dataclass(frozen=True)
class SensitivityOperator:
    """``S = Sigma A^T L^+`` together with the weighted-graph data it is built from."""

    S: np.ndarray
    sigma: np.ndarray
    laplacian: np.ndarray
    laplacian_pinv: np.ndarray
    weights: np.ndarray        # W(b), symmetric V x V
    degrees: np.ndarray        # diagonal of Deg(b)
    graph: DirectedGraph

    def apply(self, direction) -> np.ndarray:
        return directional_derivative(self, direction)


def weighted_laplacian(g: DirectedGraph, sigma):
    """``(W, deg, L)`` for edge weights ``sigma`` on the undirected graph."""
    n = g.n_vertices
    W = np.zeros((n, n))
    W[g.tails, g.heads] = sigma
    W[g.heads, g.tails] = sigma
    deg = W.sum(axis=1)
    return W, deg, np.diag(deg) - W


def solve_exact(p: FlowProblem, tol: float = 1e-12, max_iter: int = 100) -> Solution:
    """Optimal flow by damped Newton ascent on the dual.

    The primal point is recovered edgewise as ``x_e = (f_e')^{-1}(-(A^T nu)_e)``;
    the dual Hessian is ``-L(nu)`` and the dual stays in ``1-perp``.
    """
    A = p.A
    costs = p.costs
    b = p.b
    n = p.graph.n_vertices
    nu = np.zeros(n)
    x = costs.inverse_gradient(-(A.T @ nu))
    g = A @ x - b
    target = tol * max(1.0, np.linalg.norm(b))

    def dual_value(x, nu):
        return p.objective(x) + nu @ (A @ x - b)

    def newton_step(x, nu, g):
        sigma = 1.0 / costs.hess(x)
        _, _, L = weighted_laplacian(p.graph, sigma)
        step = laplacian_pseudoinverse(L) @ g
        return step - step.mean()

    phi = dual_value(x, nu)
    it = 0
    while np.linalg.norm(g) > target:
        if it >= max_iter:
            raise ConvergenceError(
                f"dual Newton did not converge: |Ax-b| = {np.linalg.norm(g):.3e} "
                f"after {it} iterations")
        it += 1
        step = newton_step(x, nu, g)
        slope = g @ step
        t = 1.0
        while True:
            nu_new = nu + t * step
            x_new = costs.inverse_gradient(-(A.T @ nu_new))
            phi_new = dual_value(x_new, nu_new)
            # near the optimum the dual gain drops below roundoff; then the
            # residual norm decides
            if (phi_new >= phi + 0.25 * t * slope
                    or np.linalg.norm(A @ x_new - b) <= 0.5 * np.linalg.norm(g)
                    or t < 1e-10):
                break
            t *= 0.5
        nu, x, phi = nu_new, x_new, phi_new
        g = A @ x - b
    if it and np.linalg.norm(g) > 0:
        # one undamped polishing step, kept only if it helps
        nu_new = nu + newton_step(x, nu, g)
        x_new = costs.inverse_gradient(-(A.T @ nu_new))
        g_new = A @ x_new - b
        if np.linalg.norm(g_new) < np.linalg.norm(g):
            nu, x, g = nu_new, x_new, g_new
    nu = nu - nu.mean()
    stationarity = float(np.linalg.norm(costs.grad(x) + A.T @ nu))
    return Solution(x=x, dual=nu, residual=float(np.linalg.norm(A @ x - b)),
                    stationarity=stationarity, iterations=it)


def sensitivity_operator(p: FlowProblem, sol: Solution) -> SensitivityOperator:
    sigma = 1.0 / p.costs.hess(sol.x)
    W, deg, L = weighted_laplacian(p.graph, sigma)
    Lp = laplacian_pseudoinverse(L)
    S = (sigma[:, None] * p.A.T) @ Lp
    return SensitivityOperator(S=S, sigma=sigma, laplacian=L, laplacian_pinv=Lp,
                               weights=W, degrees=deg, graph=p.graph)


def sensitivity_at(p: FlowProblem, tol: float = 1e-12) -> SensitivityOperator:
    return sensitivity_operator(p, solve_exact(p, tol))


def directional_derivative(s: SensitivityOperator, direction) -> np.ndarray:
    """``d x*(b + eps p) / d eps`` at ``eps = 0``, i.e. ``S p``."""
    direction = check_balanced(direction, "perturbation direction")
    return s.S @ direction


def general_sensitivity(A, sigma, full_rank=False) -> np.ndarray:
    """``Sigma A^T (A Sigma A^T)^+`` for an arbitrary constraint matrix.

    With ``full_rank=True`` the middle factor is inverted directly, which is
    only valid when ``A`` has full row rank.
    """
    A = np.asarray(A, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    SAt = sigma[:, None] * A.T if sigma.ndim == 1 else sigma @ A.T
    M = A @ SAt
    if full_rank:
        return SAt @ np.linalg.inv(M)
    return SAt @ np.linalg.pinv(M, hermitian=True)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def finite_perturbation(p: FlowProblem, pert, quad_tol: float = 1e-9,
                        max_nodes: int = 1024, solve_tol: float = 1e-12) -> np.ndarray:
    """``x*(b + pert) - x*(b)`` as the integral of ``S(b + eps pert) pert`` over [0, 1].

    Composite 5-point Gauss-Legendre; the panel count doubles until two
    successive rules agree to ``quad_tol``.
    """
    pert = check_balanced(pert, "perturbation")
    if not np.any(pert):
        return np.zeros(p.graph.n_edges)

    cache = {}

    def integrand(eps):
        key = float(eps)
        if key not in cache:
            s = sensitivity_at(p.with_flow(p.b + key * pert), solve_tol)
            cache[key] = s.S @ pert
        return cache[key]

    def rule(panels):
        edges = np.linspace(0.0, 1.0, panels + 1)
        total = np.zeros(p.graph.n_edges)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
                total += half * weight * integrand(mid + half * node)
        return total

    panels = 1
    coarse = rule(panels)
    while True:
        if 2 * panels * len(_GL_NODES) > max_nodes:
            raise ConvergenceError("quadrature did not reach tolerance within node budget")
        panels *= 2
        fine = rule(panels)
        if np.linalg.norm(fine - coarse) <= quad_tol:
            return fine
        coarse = fine
