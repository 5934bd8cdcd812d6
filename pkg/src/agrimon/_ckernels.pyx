# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Arithmetic order mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan, NAN

cnp.import_array()

cdef enum:
    MEAN = 0
    MIN = 1
    MAX = 2
    COUNT = 3


def zonal_reduce(const double[:, ::1] values, const long long[::1] ids,
                 Py_ssize_t n_ids, int reducer):
    cdef Py_ssize_t n_slices = values.shape[0]
    cdef Py_ssize_t n_pix = values.shape[1]
    cdef Py_ssize_t s, p, z
    cdef double v
    out_arr = np.empty((n_slices, n_ids), dtype=np.float64)
    cnt_arr = np.zeros(n_ids, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[::1] cnt = cnt_arr
    with nogil:
        for s in range(n_slices):
            for z in range(n_ids):
                cnt[z] = 0
                out[s, z] = 0.0
            for p in range(n_pix):
                z = ids[p]
                if z < 0:
                    continue
                v = values[s, p]
                if isnan(v):
                    continue
                if reducer == MEAN:
                    out[s, z] += v
                elif reducer == MIN:
                    if cnt[z] == 0 or v < out[s, z]:
                        out[s, z] = v
                elif reducer == MAX:
                    if cnt[z] == 0 or v > out[s, z]:
                        out[s, z] = v
                cnt[z] += 1
            for z in range(n_ids):
                if cnt[z] == 0:
                    out[s, z] = NAN
                elif reducer == MEAN:
                    out[s, z] = out[s, z] / <double>cnt[z]
                elif reducer == COUNT:
                    out[s, z] = <double>cnt[z]
    return out_arr


def best_split_classify(const double[::1] xs, const long long[::1] ys, Py_ssize_t n_classes):
    """Best Gini split on a feature column already sorted by value."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, c
    cdef long long s_left = 0, s_right = 0
    cdef double score, best = -1.0
    cdef Py_ssize_t best_pos = -1
    left_arr = np.zeros(n_classes, dtype=np.int64)
    right_arr = np.zeros(n_classes, dtype=np.int64)
    cdef long long[::1] left = left_arr
    cdef long long[::1] right = right_arr
    with nogil:
        for i in range(n):
            right[ys[i]] += 1
        for c in range(n_classes):
            s_right += right[c] * right[c]
        for i in range(n - 1):
            c = ys[i]
            s_left += 2 * left[c] + 1
            s_right -= 2 * right[c] - 1
            left[c] += 1
            right[c] -= 1
            if xs[i] < xs[i + 1]:
                score = <double>s_left / <double>(i + 1) + <double>s_right / <double>(n - i - 1)
                if score > best:
                    best = score
                    best_pos = i
    return best, best_pos


def best_split_regress(const double[::1] xs, const double[::1] ys):
    """Best variance-reduction split on a feature column already sorted by value."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i
    cdef double total = 0.0, s_left = 0.0, s_right, nl, nr, score, best = -1.0
    cdef Py_ssize_t best_pos = -1
    with nogil:
        for i in range(n):
            total += ys[i]
        for i in range(n - 1):
            s_left += ys[i]
            if xs[i] < xs[i + 1]:
                s_right = total - s_left
                nl = <double>(i + 1)
                nr = <double>(n - i - 1)
                score = s_left * s_left / nl + s_right * s_right / nr
                if best_pos < 0 or score > best:
                    best = score
                    best_pos = i
    return best, best_pos
