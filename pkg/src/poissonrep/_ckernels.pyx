# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def hash_uniforms(seed, stream, replicas, keys):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] reps = np.ascontiguousarray(replicas, dtype=np.uint64).reshape(-1)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] ks = np.ascontiguousarray(keys, dtype=np.uint64).reshape(-1)
    cdef Py_ssize_t nr = reps.shape[0], nk = ks.shape[0], r, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nr, nk))
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t st = <uint64_t>(int(stream) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t base = _mix(s ^ (st * GOLDEN))
    cdef uint64_t hr
    with nogil:
        for r in range(nr):
            hr = _mix(base + reps[r] * M1)
            for j in range(nk):
                out[r, j] = <double>(_mix(hr ^ ks[j]) >> 11) * INV53
    return out


def or_convolve(masks, probs, int n_bits):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ms = np.ascontiguousarray(masks, dtype=np.int64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qs = np.ascontiguousarray(probs, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n_bits
    cdef cnp.ndarray[cnp.float64_t, ndim=1] law = np.zeros(size)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nxt = np.zeros(size)
    cdef Py_ssize_t k, x
    cdef int64_t m
    cdef double q
    law[0] = 1.0
    for k in range(ms.shape[0]):
        q = qs[k]
        if q == 0.0:
            continue
        m = ms[k]
        for x in range(size):
            nxt[x] = law[x] * (1.0 - q)
        for x in range(size):
            nxt[x | m] += law[x] * q
        law, nxt = nxt, law
    return law


def greedy_net(w, int r, edge):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] E = np.ascontiguousarray(edge, dtype=np.uint8)
    cdef Py_ssize_t h = W.shape[0], wd = W.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.argsort(W, axis=None, kind="stable").astype(np.int64)
    cdef cnp.ndarray[cnp.int8_t, ndim=2] status = np.full((h, wd), -2, dtype=np.int8)
    cdef Py_ssize_t t, i, j, a, b, i0, i1, j0, j1
    cdef bint hit, unknown
    cdef signed char s
    for t in range(order.shape[0]):
        i = order[t] // wd
        j = order[t] % wd
        i0 = i - r if i - r > 0 else 0
        i1 = i + r + 1 if i + r + 1 < h else h
        j0 = j - r if j - r > 0 else 0
        j1 = j + r + 1 if j + r + 1 < wd else wd
        hit = False
        unknown = E[i, j] != 0
        for a in range(i0, i1):
            for b in range(j0, j1):
                s = status[a, b]
                if s == 1:
                    hit = True
                elif s == -1:
                    unknown = True
        if hit:
            status[i, j] = 0
        elif unknown:
            status[i, j] = -1
        else:
            status[i, j] = 1
    return status == 1, status >= 0


def voronoi_assign(ci, cj, u, Py_ssize_t h, Py_ssize_t wd, long rmax=-1):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] CI = np.ascontiguousarray(ci, dtype=np.int64).reshape(-1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] CJ = np.ascontiguousarray(cj, dtype=np.int64).reshape(-1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] U = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] labels = np.full((h, wd), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] dist = np.full((h, wd), np.iinfo(np.int64).max, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] best_u = np.full((h, wd), np.inf, dtype=np.float64)
    cdef Py_ssize_t i, j, k, nc = CI.shape[0], i0, i1, j0, j1
    cdef int64_t d, di, dj
    for k in range(nc):
        if rmax >= 0:
            i0 = CI[k] - rmax if CI[k] - rmax > 0 else 0
            i1 = CI[k] + rmax + 1 if CI[k] + rmax + 1 < h else h
            j0 = CJ[k] - rmax if CJ[k] - rmax > 0 else 0
            j1 = CJ[k] + rmax + 1 if CJ[k] + rmax + 1 < wd else wd
        else:
            i0, i1, j0, j1 = 0, h, 0, wd
        for i in range(i0, i1):
            di = i - CI[k]
            if di < 0:
                di = -di
            for j in range(j0, j1):
                dj = j - CJ[k]
                if dj < 0:
                    dj = -dj
                d = di if di > dj else dj
                if d < dist[i, j] or (d == dist[i, j] and U[k] < best_u[i, j]):
                    dist[i, j] = d
                    best_u[i, j] = U[k]
                    labels[i, j] = k
    return labels, dist


def w_chain(m, long w0):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] M = np.ascontiguousarray(m, dtype=np.int64).reshape(-1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(M.shape[0], dtype=np.int64)
    cdef Py_ssize_t n
    cdef int64_t w = w0
    for n in range(M.shape[0]):
        w = w - 1 if w - 1 > M[n] else M[n]
        out[n] = w
    return out


def first_hits(m_rows, long w0, long target):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] M = np.ascontiguousarray(m_rows, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(M.shape[0], dtype=np.int64)
    cdef Py_ssize_t r, n
    cdef int64_t w
    with nogil:
        for r in range(M.shape[0]):
            w = w0
            for n in range(M.shape[1]):
                w = w - 1 if w - 1 > M[r, n] else M[r, n]
                if w == target:
                    out[r] = n + 1
                    break
    return out
