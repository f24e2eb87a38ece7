# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled kernels. Contracts documented in kernels/__init__.py."""

import numpy as np

cimport numpy as cnp
from cython.operator cimport dereference as deref, preincrement as inc
from libc.stdlib cimport free, malloc
from libcpp.algorithm cimport sort
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

cnp.import_array()


def window_counts(docs, int window_size, int vocab_size):
    cdef unordered_map[long long, long long] pair_map
    cdef cnp.ndarray[cnp.int64_t, ndim=1] token_counts = np.zeros(vocab_size, dtype=np.int64)
    cdef long long[:] tc = token_counts
    cdef long long total = 0
    cdef const cnp.int32_t[:] doc
    cdef int n, spans, start, wlen, m, a, b, c, t
    cdef long long base
    cdef int* buf = <int*> malloc(window_size * sizeof(int))
    if buf == NULL:
        raise MemoryError()
    try:
        for arr in docs:
            doc = arr
            n = doc.shape[0]
            if n == 0:
                continue
            spans = 1 if n <= window_size else n - window_size + 1
            for start in range(spans):
                wlen = window_size if n - start >= window_size else n - start
                # sorted unique window contents via insertion sort
                m = 0
                for a in range(wlen):
                    t = doc[start + a]
                    b = m
                    while b > 0 and buf[b - 1] > t:
                        b -= 1
                    if b > 0 and buf[b - 1] == t:
                        continue
                    for c in range(m, b, -1):
                        buf[c] = buf[c - 1]
                    buf[b] = t
                    m += 1
                total += 1
                for a in range(m):
                    tc[buf[a]] += 1
                for a in range(m):
                    base = (<long long> buf[a]) * vocab_size
                    for b in range(a + 1, m):
                        pair_map[base + buf[b]] += 1
    finally:
        free(buf)

    cdef vector[long long] keys
    keys.reserve(pair_map.size())
    cdef unordered_map[long long, long long].iterator it = pair_map.begin()
    while it != pair_map.end():
        keys.push_back(deref(it).first)
        inc(it)
    sort(keys.begin(), keys.end())

    cdef Py_ssize_t npairs = keys.size()
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pair_i = np.empty(npairs, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pair_j = np.empty(npairs, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.empty(npairs, dtype=np.int64)
    cdef Py_ssize_t k
    cdef long long key
    for k in range(npairs):
        key = keys[k]
        pair_i[k] = key // vocab_size
        pair_j[k] = key % vocab_size
        counts[k] = pair_map[key]
    return int(total), token_counts, pair_i, pair_j, counts


def jaccard_pairs(doc_sets, double threshold):
    cdef Py_ssize_t ndocs = len(doc_sets)
    cdef vector[const cnp.int32_t*] ptrs
    cdef vector[int] lens
    cdef const cnp.int32_t[:] view
    ptrs.reserve(ndocs)
    lens.reserve(ndocs)
    # doc_sets keeps the arrays alive while we hold raw pointers
    for arr in doc_sets:
        view = arr
        lens.push_back(<int> view.shape[0])
        if view.shape[0] > 0:
            ptrs.push_back(&view[0])
        else:
            ptrs.push_back(NULL)

    cdef vector[long long] src, dst
    cdef vector[double] wts
    cdef Py_ssize_t i, j
    cdef int la, lb, p, q, inter, union_size
    cdef const cnp.int32_t* pa
    cdef const cnp.int32_t* pb
    cdef double jac
    for i in range(ndocs):
        la = lens[i]
        pa = ptrs[i]
        for j in range(i + 1, ndocs):
            lb = lens[j]
            pb = ptrs[j]
            inter = 0
            p = 0
            q = 0
            while p < la and q < lb:
                if pa[p] == pb[q]:
                    inter += 1
                    p += 1
                    q += 1
                elif pa[p] < pb[q]:
                    p += 1
                else:
                    q += 1
            union_size = la + lb - inter
            if union_size == 0:
                continue
            jac = (<double> inter) / union_size
            if jac > 0.0 and jac >= threshold:
                src.push_back(i)
                dst.push_back(j)
                wts.push_back(jac)

    cdef Py_ssize_t nedges = src.size()
    cdef cnp.ndarray[cnp.int64_t, ndim=1] src_arr = np.empty(nedges, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dst_arr = np.empty(nedges, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wts_arr = np.empty(nedges, dtype=np.float64)
    cdef Py_ssize_t k
    for k in range(nedges):
        src_arr[k] = src[k]
        dst_arr[k] = dst[k]
        wts_arr[k] = wts[k]
    return src_arr, dst_arr, wts_arr


def csr_dense_matmul(indptr, indices, data, dense):
    cdef const long long[:] ip = indptr
    cdef const long long[:] ix = indices
    cdef const double[:] dv = data
    cdef const double[:, ::1] B = dense
    cdef Py_ssize_t n_rows = ip.shape[0] - 1
    cdef Py_ssize_t d = B.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n_rows, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, c
    cdef long long k, j
    cdef double w
    for i in range(n_rows):
        for k in range(ip[i], ip[i + 1]):
            j = ix[k]
            w = dv[k]
            for c in range(d):
                o[i, c] += w * B[j, c]
    return out
