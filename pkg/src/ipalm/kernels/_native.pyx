# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot kernels. Mirrors ``_fallback`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from cython.operator cimport dereference as deref

cnp.import_array()

BACKEND = "native"

ctypedef fused real:
    float
    double


def pair_key(long long a, long long b):
    return (a << 32) | b


def scatter_add_rows(real[:, ::1] out, const int64_t[::1] ids, const real[:, ::1] src):
    cdef Py_ssize_t i, j, r
    cdef Py_ssize_t n = out.shape[1]
    cdef Py_ssize_t rows = out.shape[0]
    if src.shape[0] != ids.shape[0] or src.shape[1] != n:
        raise ValueError("scatter_add_rows: src shape does not match ids/out")
    for i in range(ids.shape[0]):
        r = ids[i]
        if r < 0 or r >= rows:
            raise IndexError(f"scatter_add_rows: row {r} outside [0, {rows})")
    with nogil:
        for i in range(ids.shape[0]):
            r = ids[i]
            for j in range(n):
                out[r, j] += src[i, j]


def merge_pair(int32_t[::1] buf, const int64_t[::1] starts, int32_t[::1] lens,
               const int64_t[::1] counts, word_ids, int a, int b, int new):
    cdef unordered_map[int64_t, int64_t] deltas
    cdef vector[pair[int64_t, int64_t]] incid
    cdef vector[int32_t] merged
    cdef int64_t[::1] wids = np.ascontiguousarray(word_ids, dtype=np.int64)
    cdef Py_ssize_t t, i, s, n, m
    cdef int64_t w, c, k
    cdef int32_t x, y
    cdef bint found
    with nogil:
        for t in range(wids.shape[0]):
            w = wids[t]
            s = starts[w]
            n = lens[w]
            found = False
            for i in range(n - 1):
                if buf[s + i] == a and buf[s + i + 1] == b:
                    found = True
                    break
            if not found:
                continue
            c = counts[w]
            for i in range(n - 1):
                k = ((<int64_t> buf[s + i]) << 32) | buf[s + i + 1]
                deltas[k] -= c
            merged.clear()
            i = 0
            while i < n:
                if i < n - 1 and buf[s + i] == a and buf[s + i + 1] == b:
                    merged.push_back(new)
                    i += 2
                else:
                    merged.push_back(buf[s + i])
                    i += 1
            m = merged.size()
            for i in range(m - 1):
                x = merged[i]
                y = merged[i + 1]
                k = ((<int64_t> x) << 32) | y
                deltas[k] += c
                if x == new or y == new:
                    incid.push_back(pair[int64_t, int64_t](k, w))
            for i in range(m):
                buf[s + i] = merged[i]
            lens[w] = <int32_t> m

    cdef vector[int64_t] keys
    for kv in deltas:
        if kv.second != 0:
            keys.push_back(kv.first)
    sort(keys.begin(), keys.end())
    sort(incid.begin(), incid.end())
    out_keys = np.empty(keys.size(), dtype=np.int64)
    out_deltas = np.empty(keys.size(), dtype=np.int64)
    cdef int64_t[::1] ok = out_keys
    cdef int64_t[::1] od = out_deltas
    for i in range(<Py_ssize_t> keys.size()):
        ok[i] = keys[i]
        od[i] = deltas[keys[i]]
    # unique incidences
    new_keys = []
    new_words = []
    cdef Py_ssize_t q
    for q in range(<Py_ssize_t> incid.size()):
        if q > 0 and incid[q] == incid[q - 1]:
            continue
        new_keys.append(incid[q].first)
        new_words.append(incid[q].second)
    return (out_keys, out_deltas,
            np.array(new_keys, dtype=np.int64), np.array(new_words, dtype=np.int64))


cdef class MergeTable:
    cdef unordered_map[int64_t, pair[int32_t, int32_t]] ranks

    def __init__(self, pairs, int first_id):
        cdef int i = 0
        for a, b in pairs:
            self.ranks[((<int64_t> a) << 32) | <int64_t> b] = pair[int32_t, int32_t](i, first_id + i)
            i += 1

    def encode(self, symbols):
        cdef vector[int32_t] sym
        cdef vector[int32_t] out
        for s in symbols:
            sym.push_back(s)
        cdef Py_ssize_t i, n
        cdef int32_t best_rank, best_id, a = 0, b = 0
        cdef int64_t k
        cdef unordered_map[int64_t, pair[int32_t, int32_t]].iterator it
        while sym.size() > 1:
            best_rank = -1
            n = sym.size()
            for i in range(n - 1):
                k = ((<int64_t> sym[i]) << 32) | sym[i + 1]
                it = self.ranks.find(k)
                if it != self.ranks.end():
                    if best_rank < 0 or deref(it).second.first < best_rank:
                        best_rank = deref(it).second.first
                        best_id = deref(it).second.second
                        a = sym[i]
                        b = sym[i + 1]
            if best_rank < 0:
                break
            out.clear()
            i = 0
            while i < n:
                if i < n - 1 and sym[i] == a and sym[i + 1] == b:
                    out.push_back(best_id)
                    i += 2
                else:
                    out.push_back(sym[i])
                    i += 1
            sym.swap(out)
        return [sym[i] for i in range(<Py_ssize_t> sym.size())]

