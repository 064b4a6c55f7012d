# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Arithmetic order matches ``_pykernels`` exactly."""
import numpy as np
from libc.math cimport sqrt, INFINITY


def fps(const double[:, ::1] points, Py_ssize_t k, Py_ssize_t start):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t i, j, cur, best
    cdef double dx, dy, dz, s, bestd, cx, cy, cz
    out = np.empty(k, dtype=np.int64)
    sel = np.empty(k, dtype=np.float64)
    dist = np.full(n, INFINITY, dtype=np.float64)
    cdef long long[::1] o = out
    cdef double[::1] sd = sel
    cdef double[::1] d = dist
    with nogil:
        cur = start
        sd[0] = INFINITY
        for i in range(k):
            o[i] = cur
            d[cur] = -1.0
            if i == k - 1:
                break
            cx = points[cur, 0]
            cy = points[cur, 1]
            cz = points[cur, 2]
            best = -1
            bestd = -1.0
            for j in range(n):
                if d[j] >= 0.0:
                    dx = points[j, 0] - cx
                    dy = points[j, 1] - cy
                    dz = points[j, 2] - cz
                    s = dx * dx + dy * dy + dz * dz
                    if s < d[j]:
                        d[j] = s
                    if d[j] > bestd:
                        bestd = d[j]
                        best = j
            cur = best
            sd[i + 1] = sqrt(bestd)
    return out, sel


def relation_matrix(const double[:, ::1] fg, const double[:, ::1] cand):
    cdef Py_ssize_t n = fg.shape[0], m = cand.shape[0], dim = fg.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double acc, t
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] r = out
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for c in range(dim):
                    t = fg[i, c] - cand[j, c]
                    acc = acc + t * t
                r[i, j] = sqrt(acc)
    return out


def nearest_candidate(const double[:, ::1] fg, const double[:, ::1] cand):
    cdef Py_ssize_t n = fg.shape[0], m = cand.shape[0], dim = fg.shape[1]
    cdef Py_ssize_t i, j, c, lab
    cdef double acc, t, dist, best
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n, dtype=np.float64)
    cdef long long[::1] lv = labels
    cdef double[::1] mv = mind
    with nogil:
        for i in range(n):
            best = INFINITY
            lab = 0
            for j in range(m):
                acc = 0.0
                for c in range(dim):
                    t = fg[i, c] - cand[j, c]
                    acc = acc + t * t
                dist = sqrt(acc)
                if dist < best:
                    best = dist
                    lab = j
            lv[i] = lab
            mv[i] = best
    return labels, mind
