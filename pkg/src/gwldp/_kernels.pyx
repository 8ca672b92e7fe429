# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree-growth loops. Mirrors ``_kernels_py`` draw for draw."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

NAME = "cython"


cdef inline int _pick(double u, const double[:] cum, int m) noexcept nogil:
    cdef int j = 0
    while j < m - 1 and u >= cum[j]:
        j += 1
    return j


cdef Py_ssize_t _grow(bitgen_t* rng, const double[:] root_cum,
                      const double[:, :] cum, const int[:] nconf,
                      const int[:, :] clen, const int[:, :] coff,
                      const int[:] child_types, Py_ssize_t cap,
                      int[:] types_out, int[:] cfg_out) noexcept nogil:
    cdef Py_ssize_t size = 1, i = 0, s
    cdef int t, j, off, L
    cdef double u
    u = rng.next_double(rng.state)
    types_out[0] = _pick(u, root_cum, root_cum.shape[0])
    while i < size:
        t = types_out[i]
        u = rng.next_double(rng.state)
        j = _pick(u, cum[t], nconf[t])
        cfg_out[i] = j
        L = clen[t, j]
        off = coff[t, j]
        if size + L > cap:
            return -1
        for s in range(L):
            types_out[size + s] = child_types[off + s]
        size += L
        i += 1
    return size


def grow(generator, tables, Py_ssize_t cap, int[:] types_out, int[:] cfg_out):
    """Grow one tree breadth-first; returns its size, or -1 past ``cap``."""
    bit_generator = generator.bit_generator
    cdef bitgen_t* rng = <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef const double[:] root_cum = tables.root_cum
    cdef const double[:, :] cum = tables.cum
    cdef const int[:] nconf = tables.nconf
    cdef const int[:, :] clen = tables.clen
    cdef const int[:, :] coff = tables.coff
    cdef const int[:] child_types = tables.child_types
    cdef Py_ssize_t r
    with bit_generator.lock:
        with nogil:
            r = _grow(rng, root_cum, cum, nconf, clen, coff, child_types, cap, types_out, cfg_out)
    return r


def grow_sized(generator, tables, Py_ssize_t n, Py_ssize_t max_attempts,
               int[:] types_out, int[:] cfg_out):
    """Rejection loop: grow until a tree of exactly ``n`` vertices appears.

    Returns the number of attempts used, negated when ``max_attempts`` ran out.
    """
    bit_generator = generator.bit_generator
    cdef bitgen_t* rng = <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef const double[:] root_cum = tables.root_cum
    cdef const double[:, :] cum = tables.cum
    cdef const int[:] nconf = tables.nconf
    cdef const int[:, :] clen = tables.clen
    cdef const int[:, :] coff = tables.coff
    cdef const int[:] child_types = tables.child_types
    cdef Py_ssize_t a = 0, r = -1
    with bit_generator.lock:
        with nogil:
            for a in range(1, max_attempts + 1):
                r = _grow(rng, root_cum, cum, nconf, clen, coff, child_types, n, types_out, cfg_out)
                if r == n:
                    break
    if r == n:
        return a
    return -max_attempts
