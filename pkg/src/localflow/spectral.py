"""Random walks on the weighted graph ``(V, E, W(b))`` and the bounds built on them.

Covers the diffusion walk ``P = Deg^{-1} W``, the walk killed at a cemetery
vertex, the Green's-function representation of ``L^+``, the localized decay
bound for ``dx*/deps`` and the eigenvalue interlacing estimates for weighted
subgraphs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from localflow._backend import kernels
from localflow.graph import (
    DirectedGraph,
    Subgraph,
    adjacency_spectrum,
    second_magnitude,
    set_distance,
)
from localflow.sensitivity import SensitivityOperator, check_balanced

DEFAULT_SEED = 20240601
SERIES_TOL = 1e-10


class NonContractiveWalkError(ValueError):
    """Series/bound requested for a walk with lambda >= 1 (e.g. bipartite)."""

    def __init__(self, lam, what="operation"):
        super().__init__(f"{what} needs lambda < 1, got lambda = {lam:.6g}")
        self.lam = lam


@dataclass(frozen=True)
class WalkData:
    P: np.ndarray
    pi: np.ndarray
    eigenvalues: np.ndarray     # of Deg^{1/2} P Deg^{-1/2}, descending
    lam: float
    degrees: np.ndarray
    weights: np.ndarray
    laplacian_pinv: np.ndarray

    @property
    def contractive(self) -> bool:
        return self.lam < 1.0 - 1e-12


def walk_data(s: SensitivityOperator) -> WalkData:
    W, d = s.weights, s.degrees
    P = W / d[:, None]
    pi = d / d.sum()
    root = np.sqrt(d)
    gamma = W / np.outer(root, root)
    eigs = np.linalg.eigvalsh(0.5 * (gamma + gamma.T))[::-1]
    return WalkData(P=P, pi=pi, eigenvalues=eigs, lam=second_magnitude(eigs),
                    degrees=d, weights=W, laplacian_pinv=s.laplacian_pinv)


def walk_series(w: WalkData, left, right, tol=SERIES_TOL):
    """Truncated ``sum_t left^T P^t right``.

    ``right`` must satisfy ``sum(Deg @ right) = 0`` so that the series
    converges when lambda < 1.  The horizon is the first ``T`` whose geometric
    tail certificate drops below ``tol``.  Returns ``(value, T, tail_bound)``.
    """
    if not w.contractive:
        raise NonContractiveWalkError(w.lam, "Green's function series")
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    d = w.degrees
    scale = np.linalg.norm(left / np.sqrt(d)) * np.linalg.norm(right * np.sqrt(d))
    if scale == 0:
        return 0.0, 0, 0.0
    lam = w.lam
    if lam == 0:
        horizon = 0
    else:
        # scale * lam^(T+1) / (1 - lam) <= tol
        horizon = max(0, int(np.ceil(np.log(tol * (1 - lam) / scale) / np.log(lam))) - 1)
    total = 0.0
    y = right.copy()
    for _ in range(horizon + 1):
        total += left @ y
        y = w.P @ y
    tail = scale * lam ** (horizon + 1) / (1 - lam)
    return float(total), horizon, float(tail)


def green_difference(w: WalkData, u, v, wv, z, method="pinv", tol=SERIES_TOL):
    """``(e_u - e_v)^T L^+ (e_w - e_z)``.

    ``method="pinv"`` reads it off the pseudoinverse; ``method="series"`` sums
    ``(e_u - e_v)^T P^t (e_w/d_w - e_z/d_z)`` over t, which needs lambda < 1.
    """
    n = len(w.degrees)
    if method == "pinv":
        Lp = w.laplacian_pinv
        return float(Lp[u, wv] - Lp[u, z] - Lp[v, wv] + Lp[v, z])
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    left = np.zeros(n)
    left[u] += 1.0
    left[v] -= 1.0
    right = np.zeros(n)
    right[wv] += 1.0 / w.degrees[wv]
    right[z] -= 1.0 / w.degrees[z]
    return walk_series(w, left, right, tol)[0]


def green_potential(w: WalkData, u, v, f, method="pinv", tol=SERIES_TOL):
    """``(e_u - e_v)^T L^+ f`` for a balanced ``f``, by either route."""
    f = np.asarray(f, dtype=float)
    if method == "pinv":
        return float((w.laplacian_pinv[u] - w.laplacian_pinv[v]) @ f)
    left = np.zeros(len(f))
    left[u] += 1.0
    left[v] -= 1.0
    return walk_series(w, left, f / w.degrees, tol)[0]


@dataclass(frozen=True)
class KilledWalkData:
    z_bar: int
    keep: np.ndarray                 # vertices other than z_bar, in order
    restricted_laplacian: np.ndarray
    restricted_transition: np.ndarray
    restricted_degrees: np.ndarray
    green: np.ndarray                # inverse of the restricted Laplacian
    P: np.ndarray                    # full transition matrix, for simulation

    def local(self, v) -> int:
        if v == self.z_bar:
            raise ValueError("vertex is the cemetery")
        return int(np.searchsorted(self.keep, v))


def killed_walk(s: SensitivityOperator, z_bar: int) -> KilledWalkData:
    n = len(s.degrees)
    keep = np.array([v for v in range(n) if v != z_bar], dtype=np.int64)
    Lbar = s.laplacian[np.ix_(keep, keep)]
    dbar = s.degrees[keep]
    Pbar = s.weights[np.ix_(keep, keep)] / dbar[:, None]
    green = np.linalg.inv(Lbar)
    P = s.weights / s.degrees[:, None]
    return KilledWalkData(z_bar=int(z_bar), keep=keep, restricted_laplacian=Lbar,
                          restricted_transition=Pbar, restricted_degrees=dbar,
                          green=green, P=P)


def killed_green_series(k: KilledWalkData) -> np.ndarray:
    """``sum_t Pbar^t Dbar^{-1}`` in closed form, ``(I - Pbar)^{-1} Dbar^{-1}``."""
    m = len(k.keep)
    return np.linalg.solve(np.eye(m) - k.restricted_transition, np.diag(1.0 / k.restricted_degrees))


def hitting_probability(k: KilledWalkData, v: int, w: int) -> float:
    """``P_v(T_w < T_zbar)`` from the Green function of the killed walk."""
    i, j = k.local(v), k.local(w)
    return float(k.green[i, j] / k.green[j, j])


def expected_visits(k: KilledWalkData, w: int) -> float:
    """``E_w[#visits to w before T_zbar]`` = ``d_w * green[w, w]``."""
    j = k.local(w)
    return float(k.restricted_degrees[j] * k.green[j, j])


def hitting_probability_linear(P, target: int, absorb: int) -> np.ndarray:
    """Harmonic-function oracle: ``h = 1`` on target, ``0`` on absorb, ``h = P h`` elsewhere."""
    n = P.shape[0]
    free = np.array([v for v in range(n) if v not in (target, absorb)], dtype=np.int64)
    h = np.zeros(n)
    h[target] = 1.0
    if len(free):
        M = np.eye(len(free)) - P[np.ix_(free, free)]
        h[free] = np.linalg.solve(M, P[free, target])
    return h


def pinv_via_restricted(s: SensitivityOperator, z_bar: int) -> np.ndarray:
    """``(e_v - e_zbar)^T L^+ (e_w - e_zbar)`` for all ``v, w != zbar``."""
    Lp = s.laplacian_pinv
    n = Lp.shape[0]
    keep = np.array([v for v in range(n) if v != z_bar], dtype=np.int64)
    return (Lp[np.ix_(keep, keep)] - Lp[keep, z_bar][:, None]
            - Lp[z_bar, keep][None, :] + Lp[z_bar, z_bar])


@dataclass(frozen=True)
class WalkEstimate:
    n_walks: int
    hit_probability: float
    hit_stderr: float
    mean_visits: float
    visits_stderr: float


def simulate_killed_walk(k: KilledWalkData, start: int, target: int,
                         n_walks: int = 100_000, seed: int = DEFAULT_SEED) -> WalkEstimate:
    """Monte Carlo estimates of ``P_start(T_target < T_zbar)`` and visit counts."""
    P = k.P
    n = P.shape[0]
    rows, cols = np.nonzero(P)
    indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
    cdf = np.cumsum(P[rows, cols])
    # per-row cumulative sums, last entry pinned to 1
    starts = indptr[:-1]
    offsets = np.repeat(np.concatenate([[0.0], cdf])[starts], np.diff(indptr))
    cdf = cdf - offsets
    cdf[indptr[1:] - 1] = 1.0
    hits, vs, vsq = kernels.simulate_killed_walks(
        indptr, cols.astype(np.int64), np.ascontiguousarray(cdf), int(start),
        int(k.z_bar), int(target), int(n_walks), int(seed) & 0xFFFFFFFFFFFFFFFF)
    phat = hits / n_walks
    mean = vs / n_walks
    var = max(vsq / n_walks - mean * mean, 0.0)
    return WalkEstimate(n_walks=n_walks, hit_probability=phat,
                        hit_stderr=float(np.sqrt(phat * (1 - phat) / n_walks)),
                        mean_visits=mean, visits_stderr=float(np.sqrt(var / n_walks)))


# -- decay of correlation ----------------------------------------------------

def _vertex_list(U):
    return list(U.vertices) if isinstance(U, Subgraph) else [int(v) for v in U]


def induced_edges(g: DirectedGraph, U) -> np.ndarray:
    """Edges with both endpoints in ``U`` (the edge set the localized norm runs over)."""
    inside = np.zeros(g.n_vertices, dtype=bool)
    inside[_vertex_list(U)] = True
    return np.flatnonzero(inside[g.tails] & inside[g.heads])


def localized_norm(g: DirectedGraph, vec, U) -> float:
    """``|vec|`` restricted to the edges induced by ``U``."""
    return float(np.linalg.norm(np.asarray(vec)[induced_edges(g, U)]))


def _neighbor_count_in(g: DirectedGraph, U):
    inside = np.zeros(g.n_vertices, dtype=bool)
    inside[U] = True
    return max(int(inside[g.neighbors(v)].sum()) for v in U)


def decay_constant(s: SensitivityOperator, U) -> float:
    """``max_U sqrt(2|N(v) & U|) / min_U d(b)_v * max_{u,v in U} W(b)_uv``.

    ``U`` is a vertex set or a ``Subgraph``.
    """
    U = _vertex_list(U)
    wmax = float(s.weights[np.ix_(U, U)].max())
    return np.sqrt(2 * _neighbor_count_in(s.graph, U)) / float(s.degrees[U].min()) * wmax


def _edge_pairs_in(g: DirectedGraph, U):
    e = induced_edges(g, U)
    return g.tails[e], g.heads[e]


def walk_potential(w: WalkData, f) -> np.ndarray:
    """``h`` with ``h_u - h_v = sum_t (P^t f)_u - (P^t f)_v`` (needs lambda < 1).

    Closed form ``(I - P + 1 pi^T)^{-1} (f - 1 pi^T f)`` of the centred series.
    """
    n = len(w.pi)
    f = np.asarray(f, dtype=float)
    M = np.eye(n) - w.P + np.outer(np.ones(n), w.pi)
    return np.linalg.solve(M, f - w.pi @ f)


def walk_block_bound(w: WalkData, g: DirectedGraph, U, Z, f_Z):
    """Both sides of the spectral bound on walk-potential differences across ``U``.

    Left: ``sqrt(1/2 sum_{u,v in U, uv in E} g_uv^2)`` with ``g_uv`` the
    difference of ``sum_t P^t f`` for ``f`` supported on ``Z``.  Right:
    ``alpha lam^d(U,Z) / (1 - lam) sqrt(sum_z f_z^2 d_z)`` with
    ``alpha = max_U sqrt(2|N(u) & U|) / min_U sqrt(d_u)``.
    """
    if not w.contractive:
        raise NonContractiveWalkError(w.lam, "walk block bound")
    U, Z = _vertex_list(U), [int(z) for z in Z]
    f = np.zeros(len(w.pi))
    f[Z] = f_Z
    h = walk_potential(w, f)
    a, b = _edge_pairs_in(g, U)
    lhs = float(np.linalg.norm(h[a] - h[b]))   # each undirected edge once = 1/2 of ordered pairs
    alpha = np.sqrt(2 * _neighbor_count_in(g, U)) / np.sqrt(w.degrees[U].min())
    d = set_distance(g, U, Z)
    rhs = alpha * w.lam ** d / (1 - w.lam) * float(np.sqrt(np.sum(np.square(f_Z) * w.degrees[Z])))
    return lhs, float(rhs)


def pinv_block_bound(w: WalkData, g: DirectedGraph, U, Z, f_Z):
    """Both sides of the same bound for ``L^+ f`` with balanced ``f`` on ``Z``.

    Right side uses ``max_U sqrt(2|N(u) & U|) / min_U d_u``.
    """
    if not w.contractive:
        raise NonContractiveWalkError(w.lam, "pseudoinverse block bound")
    U, Z = _vertex_list(U), [int(z) for z in Z]
    f = np.zeros(len(w.pi))
    f[Z] = f_Z
    check_balanced(f, "block-bound source")
    phi = w.laplacian_pinv @ f
    a, b = _edge_pairs_in(g, U)
    lhs = float(np.linalg.norm(phi[a] - phi[b]))
    gamma = np.sqrt(2 * _neighbor_count_in(g, U)) / w.degrees[U].min()
    d = set_distance(g, U, Z)
    rhs = gamma * w.lam ** d / (1 - w.lam) * float(np.linalg.norm(f_Z))
    return lhs, float(rhs)


def conservative_decay_constant(g: DirectedGraph, U, w_minus, w_plus) -> float:
    """Same constant with every weight only known to lie in ``[w_minus, w_plus]``."""
    U = _vertex_list(U)
    n_in = _neighbor_count_in(g, U)
    if n_in == 0:
        return 0.0
    return np.sqrt(2 * n_in) / (int(g.degrees[U].min()) * w_minus) * w_plus


def decay_bound(s: SensitivityOperator, U, Z, p_norm_on_Z, lam=None, constant=None) -> float:
    """``c * lam^d(U, Z) / (1 - lam) * |p|_Z`` with c and lam evaluated at b.

    Pass ``lam``/``constant`` to use other (e.g. conservative) values.
    """
    if lam is None:
        lam = walk_data(s).lam
    if lam >= 1.0 - 1e-12:
        raise NonContractiveWalkError(lam, "decay bound")
    c = decay_constant(s, U) if constant is None else constant
    d = set_distance(s.graph, _vertex_list(U), Z)
    return float(c * lam ** d / (1 - lam) * p_norm_on_Z)


def conservative_lambda(g: DirectedGraph, w_minus, w_plus) -> float:
    """Interlacing bound on lambda over all weightings with weights in ``[w_minus, w_plus]``."""
    _, mu = adjacency_spectrum(g)
    return interlacing_bound(int(g.degrees.min()), int(g.degrees.max()), w_minus, w_plus, mu)


def conservative_decay_bound(s: SensitivityOperator, U, Z, p_norm_on_Z,
                             w_minus, w_plus) -> float:
    """Decay bound valid for every ``b``: interlacing lambda and bracketed weights."""
    g = s.graph
    lam = conservative_lambda(g, w_minus, w_plus)
    c = conservative_decay_constant(g, U, w_minus, w_plus)
    return decay_bound(s, U, Z, p_norm_on_Z, lam=lam, constant=c)


# -- interlacing -------------------------------------------------------------

def interlacing_bound(k_minus, k_plus, w_minus, w_plus, mu) -> float:
    """Upper bound on lambda' for any weighted connected subgraph."""
    if not (0 < w_minus <= w_plus and 0 < k_minus <= k_plus):
        raise ValueError("need 0 < w_minus <= w_plus and 0 < k_minus <= k_plus")
    return w_plus * k_plus / (w_minus * k_minus) - 1.0 + w_plus / (w_minus * k_minus) * mu


def interlacing_interval(adj_eigs_desc, m, k_minus, k_plus, w_minus, w_plus):
    """Two-sided interval for each eigenvalue ``lambda'_i``, i = 1..m, of a subgraph walk."""
    mu = np.asarray(adj_eigs_desc, dtype=float)
    n = len(mu)
    i = np.arange(1, m + 1)
    lower = (1 - w_plus * k_plus / (w_minus * k_minus)
             + w_plus / (w_minus * k_minus) * mu[i + n - m - 1])
    upper = (1 - w_minus * k_minus / (w_plus * k_plus)
             + w_minus / (w_plus * k_plus) * mu[i - 1])
    return lower, upper


def subgraph_walk_eigenvalues(g: DirectedGraph, sub: Subgraph, edge_weights) -> np.ndarray:
    """Eigenvalues (descending) of ``D'^{-1} W'`` on a weighted connected subgraph."""
    idx = {v: i for i, v in enumerate(sub.vertices)}
    m = len(idx)
    W = np.zeros((m, m))
    for e in sub.edges:
        a, b = idx[int(g.tails[e])], idx[int(g.heads[e])]
        W[a, b] = W[b, a] = edge_weights[e]
    d = W.sum(axis=1)
    if m == 1:
        return np.array([1.0])
    root = np.sqrt(d)
    gamma = W / np.outer(root, root)
    return np.linalg.eigvalsh(0.5 * (gamma + gamma.T))[::-1]


@dataclass(frozen=True)
class SpectralReport:
    lam: float
    mu: float
    rho: float
    pi: list
    walk_eigenvalues: list
    adjacency_eigenvalues: list
    residuals: dict

    def to_dict(self):
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "rho": self.rho,
            "pi": self.pi,
            "walk_eigenvalues": self.walk_eigenvalues,
            "adjacency_eigenvalues": self.adjacency_eigenvalues,
            "residuals": self.residuals,
        }


def spectral_report(s: SensitivityOperator, Q: float) -> SpectralReport:
    g = s.graph
    w = walk_data(s)
    eigs, mu = adjacency_spectrum(g)
    k_minus, k_plus = int(g.degrees.min()), int(g.degrees.max())
    rho = Q * k_plus / k_minus - 1 + Q / k_minus * mu
    residuals = {
        "row_stochastic": float(np.abs(w.P.sum(axis=1) - 1).max()),
        "stationary": float(np.abs(w.pi @ w.P - w.pi).max()),
        "top_eigenvalue": float(abs(w.eigenvalues[0] - 1.0)),
    }
    return SpectralReport(lam=w.lam, mu=mu, rho=float(rho), pi=w.pi.tolist(),
                          walk_eigenvalues=w.eigenvalues.tolist(),
                          adjacency_eigenvalues=eigs.tolist(), residuals=residuals)

