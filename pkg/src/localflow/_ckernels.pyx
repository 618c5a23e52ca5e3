# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp, fabs, fmax
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef uint64_t _WALK_MUL = 0xD1B54A32D192ED03ULL
cdef double _EPS = 2.220446049250313e-16


cdef inline uint64_t _splitmix64(uint64_t z) nogil:
    z = z + _GOLDEN
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t step) nogil:
    return <double>(_splitmix64(key + step) >> 11) * (1.0 / 9007199254740992.0)


def uniform_stream(uint64_t seed, walk, step):
    walk = np.asarray(walk, dtype=np.uint64)
    step = np.asarray(step, dtype=np.uint64)
    w, s = np.broadcast_arrays(walk, step)
    cdef cnp.uint64_t[:] wf = np.ascontiguousarray(w).ravel()
    cdef cnp.uint64_t[:] sf = np.ascontiguousarray(s).ravel()
    out = np.empty(wf.shape[0], dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t i
    for i in range(wf.shape[0]):
        o[i] = _uniform(_splitmix64(seed + wf[i] * _WALK_MUL), sf[i])
    return out.reshape(w.shape)


def bfs_distances(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices, sources):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full(n, -1, dtype=np.int64)
    queue_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[:] dist = dist_arr
    cdef cnp.int64_t[:] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0, k
    cdef int64_t u, w, du
    for s in sources:
        u = s
        if dist[u] < 0:
            dist[u] = 0
            queue[tail] = u
            tail += 1
    with nogil:
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u] + 1
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = du
                    queue[tail] = w
                    tail += 1
    return dist_arr


cdef inline double _sech2(double x) nogil:
    cdef double e = exp(-2.0 * fabs(x))
    return 4.0 * e / ((1.0 + e) * (1.0 + e))


cdef inline double _g(double a, double s, double y, double x) nogil:
    return a * x + s * tanh(x) - y


def inverse_gradient(a, s, y, double tol=1e-12, int max_iter=200):
    a_b, s_b, y_b = np.broadcast_arrays(np.asarray(a, dtype=np.float64),
                                        np.asarray(s, dtype=np.float64),
                                        np.asarray(y, dtype=np.float64))
    shape = a_b.shape
    cdef double[:] av = np.ascontiguousarray(a_b, dtype=np.float64).ravel()
    cdef double[:] sv = np.ascontiguousarray(s_b, dtype=np.float64).ravel()
    cdef double[:] yv = np.ascontiguousarray(y_b, dtype=np.float64).ravel()
    out = np.empty(av.shape[0], dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t i
    cdef int it
    cdef double ai, si, yi, lo, hi, width, x, r, xn, thresh, t0, t1
    with nogil:
        for i in range(av.shape[0]):
            ai = av[i]
            si = sv[i]
            yi = yv[i]
            t0 = yi / (ai + si)
            t1 = yi / ai
            lo = (t0 if t0 < t1 else t1) - 1.0
            hi = (t0 if t0 > t1 else t1) + 1.0
            width = hi - lo
            for it in range(64):
                if _g(ai, si, yi, lo) > 0:
                    width = 2.0 * width
                    lo = lo - width
                elif _g(ai, si, yi, hi) < 0:
                    width = 2.0 * width
                    hi = hi + width
                else:
                    break
            x = t0
            if x < lo:
                x = lo
            if x > hi:
                x = hi
            thresh = tol * fmax(1.0, fabs(yi))
            for it in range(max_iter):
                r = _g(ai, si, yi, x)
                if fabs(r) <= thresh:
                    break
                if r < 0:
                    lo = x
                elif r > 0:
                    hi = x
                if hi - lo <= 4 * _EPS * fmax(1.0, fabs(x)):
                    break
                xn = x - r / (ai + si * _sech2(x))
                if not (xn > lo and xn < hi):
                    xn = 0.5 * (lo + hi)
                x = xn
            xn = x - _g(ai, si, yi, x) / (ai + si * _sech2(x))
            if xn >= lo and xn <= hi:
                x = xn
            o[i] = x
    return out.reshape(shape)


def simulate_killed_walks(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices,
                          const double[:] cdf, int64_t start, int64_t absorb,
                          int64_t target, int64_t n_walks, uint64_t seed,
                          int64_t max_steps=10_000_000):
    cdef int64_t hits = 0, visits_sum = 0, visits_sq = 0
    cdef int64_t wk, pos, visits, lo, hi, k, step
    cdef bint hit
    cdef uint64_t key
    cdef double u
    cdef bint overflow = False
    with nogil:
        for wk in range(n_walks):
            key = _splitmix64(seed + (<uint64_t>wk) * _WALK_MUL)
            pos = start
            visits = 1 if pos == target else 0
            hit = pos == target
            step = 0
            while pos != absorb:
                if step >= max_steps:
                    overflow = True
                    break
                u = _uniform(key, <uint64_t>step)
                lo = indptr[pos]
                hi = indptr[pos + 1]
                k = lo
                while k < hi - 1 and not (u < cdf[k]):
                    k += 1
                pos = indices[k]
                if pos == target:
                    visits += 1
                    hit = True
                step += 1
            if overflow:
                break
            if hit:
                hits += 1
            visits_sum += visits
            visits_sq += visits * visits
    if overflow:
        raise RuntimeError("walk simulation exceeded max_steps")
    return int(hits), int(visits_sum), int(visits_sq)
