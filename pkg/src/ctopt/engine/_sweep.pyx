# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled reverse sweep over a flat tape."""
from libc.stdint cimport int64_t


def reverse_sweep(const int64_t[::1] ptr, const int64_t[::1] par, const double[::1] partial,
                  double[::1] grad, int64_t root):
    cdef int64_t node, k, stop
    cdef double g
    with nogil:
        node = root
        while node >= 0:
            g = grad[node]
            if g != 0.0:
                stop = ptr[node + 1]
                k = ptr[node]
                while k < stop:
                    grad[par[k]] += g * partial[k]
                    k += 1
            node -= 1
