# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled round kernels; semantics match ``_pykernels`` bit for bit."""
import numpy as np

from libc.stdint cimport int64_t, uint8_t, uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t splitmix64(uint64_t z) noexcept nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cpdef uint64_t round_key(uint64_t seed, uint64_t stream, uint64_t round_index):
    cdef uint64_t k = splitmix64(seed ^ (stream * GOLDEN))
    return splitmix64(k ^ round_index)


def step(const int64_t[::1] indptr, const int64_t[::1] indices,
         const int64_t[::1] levels, const int64_t[::1] lmax,
         int variant, seed, round_index):
    cdef Py_ssize_t n = levels.shape[0]
    cdef Py_ssize_t v, j
    cdef uint64_t key = round_key(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), 1,
                                  <uint64_t>(round_index & 0xFFFFFFFFFFFFFFFF))
    cdef int64_t lv, cap
    new_arr = np.empty(n, dtype=np.int64)
    flags = np.zeros((4, n), dtype=np.uint8)
    cdef int64_t[::1] new = new_arr
    cdef uint8_t[:, ::1] f = flags
    with nogil:
        for v in range(n):
            lv = levels[v]
            cap = lmax[v]
            if 0 < lv < cap:
                if (splitmix64(key ^ <uint64_t>v) >> (64 - lv)) == 0:
                    f[0, v] = 1
            elif lv <= 0:
                if variant == 1:
                    f[0, v] = 1
                else:
                    f[2, v] = 1
        # push each beep to the neighbours; cost is the beepers' total degree
        for v in range(n):
            if f[0, v]:
                for j in range(indptr[v], indptr[v + 1]):
                    f[1, indices[j]] = 1
            if f[2, v]:
                for j in range(indptr[v], indptr[v + 1]):
                    f[3, indices[j]] = 1
        for v in range(n):
            lv = levels[v]
            cap = lmax[v]
            if variant != 1 and f[3, v]:
                new[v] = cap
            elif f[1, v]:
                new[v] = lv + 1 if lv < cap else cap
            elif f[0, v]:
                new[v] = -cap if variant == 1 else 0
            elif variant != 1 and f[2, v]:
                new[v] = lv
            else:
                new[v] = lv - 1 if lv > 2 else 1
    b = flags.view(np.bool_)
    return new_arr, b[0], b[1], b[2], b[3]


def stable_masks(const int64_t[::1] indptr, const int64_t[::1] indices,
                 const int64_t[::1] levels, const int64_t[::1] lmax, int variant):
    cdef Py_ssize_t n = levels.shape[0]
    cdef Py_ssize_t v, j
    cdef int64_t core
    out = np.zeros((2, n), dtype=np.uint8)
    cdef uint8_t[:, ::1] f = out
    with nogil:
        for v in range(n):
            core = -lmax[v] if variant == 1 else 0
            if levels[v] != core:
                continue
            f[0, v] = 1
            for j in range(indptr[v], indptr[v + 1]):
                if levels[indices[j]] != lmax[indices[j]]:
                    f[0, v] = 0
                    break
        for v in range(n):
            if f[0, v]:
                f[1, v] = 1
                for j in range(indptr[v], indptr[v + 1]):
                    f[1, indices[j]] = 1
    b = out.view(np.bool_)
    return b[0], b[1]
