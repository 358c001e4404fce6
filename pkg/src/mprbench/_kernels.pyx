# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels.  Must agree with ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def bm25_scores(
    const cnp.int64_t[::1] query_terms,
    const cnp.int64_t[::1] indptr,
    const cnp.int64_t[::1] doc_ids,
    const double[::1] tfs,
    const double[::1] idf,
    const double[::1] doc_len,
    double avgdl,
    double k1,
    double b,
):
    cdef Py_ssize_t n_docs = doc_len.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n_docs, dtype=np.float64)
    cdef double[::1] scores = out
    cdef Py_ssize_t qi, j, d
    cdef cnp.int64_t t
    cdef double tf, denom, w
    for qi in range(query_terms.shape[0]):
        t = query_terms[qi]
        w = idf[t]
        for j in range(indptr[t], indptr[t + 1]):
            d = doc_ids[j]
            tf = tfs[j]
            denom = tf + k1 * (1.0 - b + b * doc_len[d] / avgdl)
            scores[d] += w * tf * (k1 + 1.0) / denom
    return out


def kmeans_assign(const double[:, ::1] X, const double[:, ::1] C):
    cdef Py_ssize_t n = X.shape[0], k = C.shape[0], dim = X.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i, c, j
    cdef double acc, diff, best
    cdef cnp.int64_t best_c
    for i in range(n):
        best = -1.0
        best_c = 0
        for c in range(k):
            acc = 0.0
            for j in range(dim):
                diff = X[i, j] - C[c, j]
                acc += diff * diff
            if c == 0 or acc < best:
                best = acc
                best_c = c
        labels[i] = best_c
        dist[i] = best
    return labels_arr, dist_arr
