# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors :mod:`graphids._pykernels` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef struct KeyPos:
    double key
    long long pos


cdef inline bint _greater(double ka, long long pa, double kb, long long pb) noexcept nogil:
    return ka > kb or (ka == kb and pa > pb)


cdef void _sift_down(KeyPos *heap, long long n, long long i) noexcept nogil:
    # max-heap on (key, pos)
    cdef long long c
    cdef KeyPos tmp
    while True:
        c = 2 * i + 1
        if c >= n:
            return
        if c + 1 < n and _greater(heap[c + 1].key, heap[c + 1].pos, heap[c].key, heap[c].pos):
            c += 1
        if not _greater(heap[c].key, heap[c].pos, heap[i].key, heap[i].pos):
            return
        tmp = heap[i]
        heap[i] = heap[c]
        heap[c] = tmp
        i = c


cdef int _cmp_ll(const void *a, const void *b) noexcept nogil:
    cdef long long x = (<const long long *> a)[0]
    cdef long long y = (<const long long *> b)[0]
    return (x > y) - (x < y)


def sample_segments(const long long[:] indptr, const long long[:] nodes,
                    long long fanout, const double[:] keys):
    cdef Py_ssize_t m = nodes.shape[0]
    cdef Py_ssize_t j, i
    cdef long long start, deg, take, koff = 0, total = 0
    cdef long long maxdeg = 0

    out_ptr_arr = np.zeros(m + 1, dtype=np.int64)
    cdef long long[:] out_ptr = out_ptr_arr
    for j in range(m):
        deg = indptr[nodes[j] + 1] - indptr[nodes[j]]
        take = deg if deg < fanout else fanout
        total += take
        out_ptr[j + 1] = total
        if deg > maxdeg:
            maxdeg = deg

    out_pos_arr = np.empty(total, dtype=np.int64)
    cdef long long[:] out_pos = out_pos_arr
    cdef KeyPos *buf = <KeyPos *> malloc(max(fanout if fanout < maxdeg else maxdeg, 1) * sizeof(KeyPos))
    cdef long long *sel = <long long *> malloc(max(fanout if fanout < maxdeg else maxdeg, 1) * sizeof(long long))
    if buf == NULL or sel == NULL:
        free(buf)
        free(sel)
        raise MemoryError()
    cdef long long w
    try:
        with nogil:
            for j in range(m):
                start = indptr[nodes[j]]
                deg = indptr[nodes[j] + 1] - start
                w = out_ptr[j]
                if deg <= fanout:
                    for i in range(deg):
                        out_pos[w + i] = start + i
                else:
                    # keep the fanout smallest (key, pos) pairs in a bounded max-heap
                    for i in range(fanout):
                        buf[i].key = keys[koff + i]
                        buf[i].pos = start + i
                    i = fanout // 2
                    while i > 0:
                        i -= 1
                        _sift_down(buf, fanout, i)
                    for i in range(fanout, deg):
                        if _greater(buf[0].key, buf[0].pos, keys[koff + i], start + i):
                            buf[0].key = keys[koff + i]
                            buf[0].pos = start + i
                            _sift_down(buf, fanout, 0)
                    for i in range(fanout):
                        sel[i] = buf[i].pos
                    qsort(sel, fanout, sizeof(long long), _cmp_ll)
                    for i in range(fanout):
                        out_pos[w + i] = sel[i]
                    koff += deg
    finally:
        free(buf)
        free(sel)
    return out_ptr_arr, out_pos_arr


def descending_counts(const double[:] scores, const long long[:] labels):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, k = 0
    cdef long long tp = 0, fp = 0
    thr_arr = np.empty(n, dtype=np.float64)
    tp_arr = np.empty(n, dtype=np.int64)
    fp_arr = np.empty(n, dtype=np.int64)
    cdef double[:] thr = thr_arr
    cdef long long[:] tps = tp_arr
    cdef long long[:] fps = fp_arr
    with nogil:
        for i in range(n):
            if labels[i] != 0:
                tp += 1
            else:
                fp += 1
            if i == n - 1 or scores[i + 1] != scores[i]:
                thr[k] = scores[i]
                tps[k] = tp
                fps[k] = fp
                k += 1
    return thr_arr[:k], tp_arr[:k], fp_arr[:k]
