"""Pure-Python kernels; reference behaviour for the compiled ``_kernels``."""
from __future__ import annotations

import numpy as np


def bm25_scores(query_terms, indptr, doc_ids, tfs, idf, doc_len, avgdl, k1, b):
    scores = np.zeros(doc_len.shape[0], dtype=np.float64)
    for t in query_terms:
        lo, hi = indptr[t], indptr[t + 1]
        docs = doc_ids[lo:hi]
        tf = tfs[lo:hi]
        denom = tf + k1 * (1.0 - b + b * doc_len[docs] / avgdl)
        # doc ids are unique within a posting list, so fancy-index += is safe
        scores[docs] += idf[t] * tf * (k1 + 1.0) / denom
    return scores


def kmeans_assign(X, C):
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for i in range(n):
        diff = C - X[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        c = int(np.argmin(d2))
        labels[i] = c
        dist[i] = d2[c]
    return labels, dist
