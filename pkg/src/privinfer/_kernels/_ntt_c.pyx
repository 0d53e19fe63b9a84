# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled negacyclic NTT over an RNS basis of word-sized primes.

Twiddle products use Shoup's precomputed quotients, so every modulus must be
below 2**31 and every input residue below 2**32.
"""

from libc.stdint cimport uint64_t


cdef inline uint64_t _mulmod_shoup(uint64_t x, uint64_t w, uint64_t w_shoup, uint64_t p) nogil:
    cdef uint64_t q = (w_shoup * x) >> 32
    cdef uint64_t r = w * x - q * p
    return r - p if r >= p else r


def ntt_forward(uint64_t[:, ::1] a, uint64_t[::1] moduli, uint64_t[:, ::1] psi_rev,
                uint64_t[:, ::1] psi_rev_shoup):
    """In-place Cooley-Tukey negacyclic NTT; natural order in, bit-reversed out."""
    cdef Py_ssize_t k = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, m, i, j, j1, t
    cdef uint64_t p, s, ss, u, v
    with nogil:
        for r in range(k):
            p = moduli[r]
            t = n
            m = 1
            while m < n:
                t >>= 1
                for i in range(m):
                    j1 = 2 * i * t
                    s = psi_rev[r, m + i]
                    ss = psi_rev_shoup[r, m + i]
                    for j in range(j1, j1 + t):
                        u = a[r, j]
                        v = _mulmod_shoup(a[r, j + t], s, ss, p)
                        a[r, j] = u + v if u + v < p else u + v - p
                        a[r, j + t] = u - v if u >= v else u + p - v
                m <<= 1


def ntt_inverse(uint64_t[:, ::1] a, uint64_t[::1] moduli, uint64_t[:, ::1] psi_inv_rev,
                uint64_t[:, ::1] psi_inv_rev_shoup, uint64_t[::1] n_inv):
    """In-place Gentleman-Sande inverse of :func:`ntt_forward`, scaled by 1/n."""
    cdef Py_ssize_t k = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, m, h, i, j, j1, t
    cdef uint64_t p, s, ss, u, v, ni
    with nogil:
        for r in range(k):
            p = moduli[r]
            t = 1
            m = n
            while m > 1:
                h = m >> 1
                j1 = 0
                for i in range(h):
                    s = psi_inv_rev[r, h + i]
                    ss = psi_inv_rev_shoup[r, h + i]
                    for j in range(j1, j1 + t):
                        u = a[r, j]
                        v = a[r, j + t]
                        a[r, j] = u + v if u + v < p else u + v - p
                        a[r, j + t] = _mulmod_shoup(u + p - v, s, ss, p)
                    j1 += 2 * t
                t <<= 1
                m = h
            ni = n_inv[r]
            for j in range(n):
                a[r, j] = (a[r, j] * ni) % p
