# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based Gaussian generation and the
implicit-Euler micro chain. Same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin, M_PI
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    """
    static inline unsigned long long spde_mulhilo(unsigned long long a,
                                                  unsigned long long b,
                                                  unsigned long long *hi) {
        unsigned __int128 p = (unsigned __int128)a * (unsigned __int128)b;
        *hi = (unsigned long long)(p >> 64);
        return (unsigned long long)p;
    }
    """
    uint64_t spde_mulhilo(uint64_t a, uint64_t b, uint64_t *hi) nogil

DEF M0 = 0xD2E7470EE14C6C93
DEF M1 = 0xCA5A826395121157
DEF W0 = 0x9E3779B97F4A7C15
DEF W1 = 0xBB67AE8584CAA73B

KEY_SALT = 0x53504445484D4D


cdef inline void _philox(uint64_t *c, uint64_t k0, uint64_t k1) noexcept nogil:
    cdef uint64_t hi0, hi1, lo0, lo1, t1
    cdef int r
    for r in range(10):
        if r:
            k0 += <uint64_t>W0
            k1 += <uint64_t>W1
        lo0 = spde_mulhilo(<uint64_t>M0, c[0], &hi0)
        lo1 = spde_mulhilo(<uint64_t>M1, c[2], &hi1)
        t1 = c[1]
        c[0] = hi1 ^ t1 ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0


cdef inline void _normals4(uint64_t seed, uint64_t block, uint64_t step,
                           uint64_t replica, uint64_t role, double *z) noexcept nogil:
    cdef uint64_t c[4]
    cdef double u0, u1, u2, u3, r
    c[0] = block
    c[1] = step
    c[2] = replica
    c[3] = role
    _philox(c, seed, <uint64_t>0x53504445484D4D)
    u0 = (<double>(c[0] >> 11) + 0.5) * 1.1102230246251565e-16
    u1 = (<double>(c[1] >> 11) + 0.5) * 1.1102230246251565e-16
    u2 = (<double>(c[2] >> 11) + 0.5) * 1.1102230246251565e-16
    u3 = (<double>(c[3] >> 11) + 0.5) * 1.1102230246251565e-16
    r = sqrt(-2.0 * log(u0))
    z[0] = r * cos(2.0 * M_PI * u1)
    z[1] = r * sin(2.0 * M_PI * u1)
    r = sqrt(-2.0 * log(u2))
    z[2] = r * cos(2.0 * M_PI * u3)
    z[3] = r * sin(2.0 * M_PI * u3)


def philox4x64(counters, key0, key1=KEY_SALT):
    cdef cnp.ndarray[cnp.uint64_t, ndim=2] c = np.ascontiguousarray(
        np.asarray(counters, dtype=np.uint64).reshape(-1, 4)).copy()
    cdef Py_ssize_t i
    cdef uint64_t k0 = <uint64_t>int(key0), k1 = <uint64_t>int(key1)
    with nogil:
        for i in range(c.shape[0]):
            _philox(&c[i, 0], k0, k1)
    return c.reshape(np.shape(counters))


def gaussians(seed, replicas, role, step0, Py_ssize_t n_steps, Py_ssize_t n_modes):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] rep = np.ascontiguousarray(
        replicas, dtype=np.uint64).reshape(-1)
    cdef Py_ssize_t k_n = rep.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((k_n, n_steps, n_modes))
    cdef uint64_t sd = <uint64_t>int(seed), rl = <uint64_t>int(role), s0 = <uint64_t>int(step0)
    cdef Py_ssize_t k, s, b, j, n_blocks = (n_modes + 3) // 4
    cdef double z[4]
    with nogil:
        for k in range(k_n):
            for s in range(n_steps):
                for b in range(n_blocks):
                    _normals4(sd, b, s0 + s, rep[k], rl, z)
                    for j in range(4):
                        if 4 * b + j < n_modes:
                            out[k, s, 4 * b + j] = z[j]
    return out


def micro_chain(y0, decay, scale, seed, replicas, role, step0,
                Py_ssize_t n_steps, Py_ssize_t n_window):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.array(y0, dtype=np.float64, copy=True, order="C")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(decay, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] rep = np.ascontiguousarray(
        replicas, dtype=np.uint64).reshape(-1)
    cdef Py_ssize_t k_n = y.shape[0], n = y.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] window = np.empty((k_n, n_window, n))
    cdef uint64_t sd = <uint64_t>int(seed), rl = <uint64_t>int(role), s0 = <uint64_t>int(step0)
    cdef Py_ssize_t k, s, b, j, i, first = n_steps - n_window, n_blocks = (n + 3) // 4
    cdef double z[4]
    with nogil:
        for k in range(k_n):
            for s in range(n_steps):
                for b in range(n_blocks):
                    _normals4(sd, b, s0 + s, rep[k], rl, z)
                    for j in range(4):
                        i = 4 * b + j
                        if i < n:
                            # same operation order as the numpy fallback
                            y[k, i] = y[k, i] * a[i] + z[j] * sc[i]
                if s >= first:
                    for i in range(n):
                        window[k, s - first, i] = y[k, i]
    return y, window
