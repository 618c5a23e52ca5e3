"""Bias/variance bounds for localized re-solves, the measured decomposition, and (r, t) tuning.

With ``rho = Q k+ / k- - 1 + (Q / k-) mu``, ``c = sqrt(2 k+) Q / k-`` and
``gamma = c (1 + c sqrt(k+ - 1))`` a run of ``t`` localized steps on ``G'``
after perturbing ``b`` by ``p`` satisfies

    |Bias|     <= |p| gamma rho^d / (1 - rho)^2      (0 when G' = G)
    |Variance| <= |p| c exp(-t / (2Q)) / (1 - rho)

where ``d`` is the distance from the inner boundary of ``G'`` to the support
of ``p``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from localflow.graph import Subgraph, adjacency_spectrum, inner_boundary, set_distance
from localflow.sensitivity import FlowProblem, Solution, check_balanced, solve_exact
from localflow.solver import PGDConfig, local_resolve, reduced_problem


class NoGuaranteeError(ValueError):
    """``rho >= 1``: the localized error bounds say nothing."""

    def __init__(self, rho):
        super().__init__(f"rho = {rho:.6g} >= 1, localized error bounds are void")
        self.rho = rho


@dataclass(frozen=True)
class LocalBoundParams:
    Q: float
    k_minus: int
    k_plus: int
    mu: float

    def __post_init__(self):
        if not (self.Q >= 1 and 0 < self.k_minus <= self.k_plus):
            raise ValueError("need Q >= 1 and 0 < k_minus <= k_plus")

    @classmethod
    def from_problem(cls, p: FlowProblem) -> "LocalBoundParams":
        g = p.graph
        _, mu = adjacency_spectrum(g)
        return cls(Q=p.costs.condition_number, k_minus=int(g.degrees.min()),
                   k_plus=int(g.degrees.max()), mu=float(mu))

    @property
    def rho(self) -> float:
        return self.Q * self.k_plus / self.k_minus - 1 + self.Q / self.k_minus * self.mu

    @property
    def c(self) -> float:
        return math.sqrt(2 * self.k_plus) * self.Q / self.k_minus

    @property
    def gamma(self) -> float:
        c = self.c
        return c * (1 + c * math.sqrt(self.k_plus - 1))

    def require_contraction(self):
        if not self.rho < 1:
            raise NoGuaranteeError(self.rho)

    def constants(self) -> dict:
        return {"Q": self.Q, "k_minus": self.k_minus, "k_plus": self.k_plus, "mu": self.mu,
                "c": self.c, "gamma": self.gamma}


def local_error_bounds(params: LocalBoundParams, p_norm, d_boundary, t, is_global):
    """``(bias_bound, variance_bound)``."""
    params.require_contraction()
    rho, c, Q = params.rho, params.c, params.Q
    bias = 0.0 if is_global else p_norm * params.gamma * rho ** d_boundary / (1 - rho) ** 2
    var = p_norm * c * math.exp(-t / (2 * Q)) / (1 - rho)
    return float(bias), float(var)


def boundary_distance(sub: Subgraph, support) -> int:
    """``d(inner boundary of sub, support)``; 0 when the boundary is empty but sub is proper."""
    delta = inner_boundary(sub)
    if not delta:
        return 0
    return int(set_distance(sub.parent, delta, support))


@dataclass(frozen=True)
class ErrorReport:
    bias_measured: float
    variance_measured: float
    error_measured: float
    bias_bound: float | None
    variance_bound: float | None
    rho: float
    constants: dict
    d_boundary: int
    t: int
    guaranteed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def measure_decomposition(p: FlowProblem, x_star_b: Solution, pert, sub: Subgraph, t: int,
                          params: LocalBoundParams | None = None, cfg: PGDConfig | None = None,
                          tol: float = 1e-12) -> ErrorReport:
    """Measured Bias/Variance/Error of a ``t``-step localized run next to the bounds.

    Bias = x*(b + p) - lim, Variance = lim - x_hat, where ``lim`` is the exact
    optimum of the reduced problem on ``sub`` with the outside frozen at x*(b).
    """
    pert = check_balanced(pert, "perturbation")
    params = params or LocalBoundParams.from_problem(p)
    run = local_resolve(p, x_star_b, pert, sub, t, cfg)
    b_new = p.b + pert
    x_new = solve_exact(p.with_flow(b_new), tol).x
    lim = np.array(x_star_b.x, dtype=float)
    E = sub.edge_array
    if len(E):
        lim[E] = solve_exact(reduced_problem(p, sub, b_new, x_star_b.x), tol).x
    bias = float(np.linalg.norm(x_new - lim))
    var = float(np.linalg.norm(lim - run.x_hat))
    err = float(np.linalg.norm(x_new - run.x_hat))
    support = np.flatnonzero(pert)
    d = boundary_distance(sub, support) if len(support) else 0
    p_norm = float(np.linalg.norm(pert))
    if params.rho < 1:
        bb, vb = local_error_bounds(params, p_norm, d, t, sub.is_whole)
        guaranteed = True
    else:
        bb = vb = None
        guaranteed = False
    return ErrorReport(bias_measured=bias, variance_measured=var, error_measured=err,
                       bias_bound=bb, variance_bound=vb, rho=float(params.rho),
                       constants=params.constants(), d_boundary=d, t=int(t),
                       guaranteed=guaranteed)


@dataclass(frozen=True)
class TuningResult:
    radius: int
    iterations: int
    epsilon: float
    nu_bias: float
    xi_bias: float
    nu_var: float
    xi_var: float
    complexity_estimate: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _ceil_nonneg(x):
    return max(0, math.ceil(x))


def tune(epsilon, p_norm, params: LocalBoundParams, z: int = 0, n_r=None,
         omega: float = 3.0) -> TuningResult:
    """Smallest ``r >= z`` and ``t >= 0`` with each error term at most ``epsilon / 2``.

    ``z`` is the radius of the perturbation's support around the anchor, so a
    ball of radius ``r`` has its boundary at distance ``r - z`` from it.  Pass
    ``n_r`` (vertices in that ball) to get the cost model filled in.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    params.require_contraction()
    rho, c, Q = params.rho, params.c, params.Q
    nu_bias = params.gamma / ((1 - rho) ** 2 * rho ** z)
    xi_bias = math.log(1 / rho)
    nu_var = c / (1 - rho)
    xi_var = 1 / (2 * Q)
    half = epsilon / 2

    def bias_ok(r):
        return p_norm * nu_bias * math.exp(-xi_bias * r) <= half

    def var_ok(t):
        return p_norm * nu_var * math.exp(-xi_var * t) <= half

    r = max(z, _ceil_nonneg(math.log(p_norm * nu_bias / half) / xi_bias) if p_norm > 0 else z)
    # the closed form can be off by one through roundoff
    while not bias_ok(r):
        r += 1
    while r > z and bias_ok(r - 1):
        r -= 1
    t = _ceil_nonneg(math.log(p_norm * nu_var / half) / xi_var) if p_norm > 0 else 0
    while not var_ok(t):
        t += 1
    while t > 0 and var_ok(t - 1):
        t -= 1
    cost = complexity_estimate(n_r, t, omega) if n_r is not None else None
    return TuningResult(radius=int(r), iterations=int(t), epsilon=float(epsilon),
                        nu_bias=nu_bias, xi_bias=xi_bias, nu_var=nu_var, xi_var=xi_var,
                        complexity_estimate=cost)


def complexity_estimate(n_r, t, omega: float = 3.0) -> float:
    """Operation-count model ``n_r**omega + n_r**2 * t`` of a localized re-solve."""
    if not 2.0 <= omega <= 3.0:
        raise ValueError("omega must lie in [2, 3]")
    return float(n_r) ** omega + float(n_r) ** 2 * t


def local_constants(p: FlowProblem, sub: Subgraph) -> dict:
    """Diagnostic: the same constants with degrees and spectrum of ``sub`` alone."""
    g = sub.as_graph()
    _, mu = adjacency_spectrum(g)
    params = LocalBoundParams(Q=p.costs.subset(sub.edge_array).condition_number
                            if len(sub.edges) else 1.0,
                            k_minus=max(1, int(g.degrees.min())),
                            k_plus=max(1, int(g.degrees.max())), mu=float(mu))
    return {**params.constants(), "rho": params.rho}
