"""Pure Python / numpy versions of the hot kernels.

These mirror ``_ckernels.pyx`` exactly (same signatures, same random stream)
and are used whenever the compiled extension is unavailable.
"""
from collections import deque

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_WALK_MUL = np.uint64(0xD1B54A32D192ED03)


def _splitmix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed, walk, step):
    """Counter-based uniforms in [0, 1) indexed by (seed, walk, step)."""
    with np.errstate(over="ignore"):
        walk = np.asarray(walk, dtype=np.uint64)
        step = np.asarray(step, dtype=np.uint64)
        key = _splitmix64(np.uint64(seed) + walk * _WALK_MUL)
        z = _splitmix64(key + step)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def bfs_distances(indptr, indices, sources):
    """Unweighted multi-source BFS; unreachable vertices get -1."""
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue.append(int(s))
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            if dist[w] < 0:
                dist[w] = du
                queue.append(int(w))
    return dist


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / np.square(1.0 + e)


def inverse_gradient(a, s, y, tol=1e-12, max_iter=200):
    """Solve ``a*x + s*tanh(x) = y`` elementwise (a > 0, s >= 0).

    Safeguarded Newton: the iterate stays inside a bracket that is grown
    geometrically from ``[y/(a+s) - 1, y/a + 1]`` and falls back to
    bisection whenever Newton leaves it.
    """
    a = np.asarray(a, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a, s, y = np.broadcast_arrays(a, s, y)

    def g(x):
        return a * x + s * np.tanh(x) - y

    lo = np.minimum(y / (a + s), y / a) - 1.0
    hi = np.maximum(y / (a + s), y / a) + 1.0
    width = hi - lo
    for _ in range(64):
        bad_lo = g(lo) > 0
        bad_hi = g(hi) < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)

    x = np.clip(y / (a + s), lo, hi)
    thresh = tol * np.maximum(1.0, np.abs(y))
    for _ in range(max_iter):
        r = g(x)
        done = np.abs(r) <= thresh
        if done.all():
            break
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        xn = x - r / (a + s * _sech2(x))
        outside = ~((xn > lo) & (xn < hi))
        xn = np.where(outside, 0.5 * (lo + hi), xn)
        stuck = (hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))
        x = np.where(done | stuck, x, xn)
        if (done | stuck).all():
            break
    # one last Newton correction takes a converged iterate to full precision
    xn = x - g(x) / (a + s * _sech2(x))
    return np.where((xn >= lo) & (xn <= hi), xn, x)


def simulate_killed_walks(indptr, indices, cdf, start, absorb, target,
                          n_walks, seed, max_steps=10_000_000):
    """Run ``n_walks`` walks from ``start`` until they hit ``absorb``.

    Returns ``(hits, visits_sum, visits_sq_sum)`` where ``hits`` counts walks
    that reached ``target`` before ``absorb`` and ``visits`` is the number of
    times ``target`` was occupied (time 0 included) before absorption.
    """
    n_walks = int(n_walks)
    pos = np.full(n_walks, start, dtype=np.int64)
    walk_ids = np.arange(n_walks, dtype=np.uint64)
    visits = (pos == target).astype(np.int64)
    hit = pos == target
    alive = pos != absorb
    step = 0
    while alive.any():
        if step >= max_steps:
            raise RuntimeError("walk simulation exceeded max_steps")
        idx = np.flatnonzero(alive)
        u = uniform_stream(seed, walk_ids[idx], step)
        cur = pos[idx]
        nxt = np.empty_like(cur)
        # group by current vertex; first slot in the CSR row with u < cdf
        for c in np.unique(cur):
            sel = cur == c
            lo, hi = indptr[c], indptr[c + 1]
            k = lo + np.searchsorted(cdf[lo:hi], u[sel], side="right")
            nxt[sel] = indices[np.minimum(k, hi - 1)]
        pos[idx] = nxt
        at_target = nxt == target
        visits[idx] += at_target
        hit[idx] |= at_target
        alive[idx] = nxt != absorb
        step += 1
    return int(hit.sum()), int(visits.sum()), int((visits * visits).sum())
