# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trial kernel; mirrors ``_kernel_py.simulate_block`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, uint8_t, int8_t
from libc.math cimport NAN

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t state, int k) noexcept nogil:
    return <double>(mix64(state + <uint64_t>(k + 1) * GOLDEN) >> 11) * INV53


cdef inline double lookup(const double[::1] table, double u) noexcept nogil:
    cdef Py_ssize_t m = table.shape[0]
    cdef double pos = u * (m - 1)
    cdef int64_t j = <int64_t>pos
    if j > m - 2:
        j = m - 2
    cdef double frac = pos - j
    cdef double lo = table[j]
    return lo + frac * (table[j + 1] - lo)


def simulate_block(uint64_t key, uint64_t start, Py_ssize_t n,
                   double herald_p, double xi, double p_in, double p_out,
                   double dark_p, double gate, q_in, q_out):
    cdef const double[::1] tin = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef const double[::1] tout = np.ascontiguousarray(q_out, dtype=np.float64)
    herald_a = np.empty(n, dtype=np.uint8)
    qrng_a = np.empty(n, dtype=np.uint8)
    kind_a = np.empty(n, dtype=np.int8)
    time_a = np.empty(n, dtype=np.float64)
    cdef uint8_t[::1] herald = herald_a
    cdef uint8_t[::1] qrng = qrng_a
    cdef int8_t[::1] kind = kind_a
    cdef double[::1] tm = time_a
    cdef Py_ssize_t i
    cdef uint64_t state
    cdef bint h, qin, sig, dark
    cdef double ps, tsig, tdark
    with nogil:
        for i in range(n):
            state = mix64(key + (start + <uint64_t>i + 1) * GOLDEN)
            h = uniform(state, 0) < herald_p
            qin = uniform(state, 1) < xi
            ps = p_in if qin else p_out
            sig = h and (uniform(state, 2) < ps)
            tsig = lookup(tin, uniform(state, 3)) if qin else lookup(tout, uniform(state, 3))
            dark = uniform(state, 4) < dark_p
            tdark = uniform(state, 5) * gate
            herald[i] = h
            qrng[i] = qin
            if sig and (not dark or tsig <= tdark):
                kind[i] = 1
                tm[i] = tsig
            elif dark:
                kind[i] = 2
                tm[i] = tdark
            else:
                kind[i] = 0
                tm[i] = NAN
    return herald_a, qrng_a, kind_a, time_a
