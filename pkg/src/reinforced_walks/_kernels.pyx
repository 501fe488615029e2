# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; see ``_pykernels`` for the reference semantics."""
from libc.stdint cimport int8_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TO_UNIT = 1.0 / 9007199254740992.0


cdef inline double _unit(uint64_t key, uint64_t ctr) noexcept nogil:
    cdef uint64_t z = key + (ctr + 1) * GOLDEN
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    z = z ^ (z >> 31)
    # signed conversion is a single instruction; the value fits in 53 bits
    return <double>(<int64_t>(z >> 11)) * TO_UNIT


cdef void _record(double[:, :, ::1] out, Py_ssize_t m, Py_ssize_t g, double* z,
                  Py_ssize_t nw, bint reduced) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s, zbar, d
    if not reduced:
        for i in range(nw):
            out[m, g, i] = z[i]
        return
    s = z[0]
    for i in range(1, nw):
        s = s + z[i]
    zbar = s / nw
    d = z[0] - zbar
    s = d * d
    for i in range(1, nw):
        d = z[i] - zbar
        s = s + d * d
    out[m, g, 0] = zbar
    out[m, g, 1] = z[0] - zbar
    out[m, g, 2] = s / nw


def simulate(const double[:, ::1] z0, const double[::1] rates, double rho, double alpha, double q,
             const uint64_t[::1] keys, int64_t start, const int64_t[::1] grid, double[:, :, ::1] out,
             bint reduced, int64_t[::1] fix_run_start=None, int8_t[::1] fix_last=None,
             uint8_t[:, ::1] draws=None):
    cdef Py_ssize_t n_rep = z0.shape[0], nw = z0.shape[1], n_grid = grid.shape[0]
    cdef Py_ssize_t m, i, g
    cdef int64_t n, k, run_start
    cdef double t0 = (1.0 - rho) * q
    cdef double t1 = rho + t0
    cdef double omal = 1.0 - alpha
    cdef double target[2]
    cdef double r, omr, s, zbar, p, u
    cdef uint64_t key, base
    cdef bint hit, last = 0
    cdef bint track = fix_run_start is not None and nw == 1
    cdef bint keep = draws is not None
    cdef double* z = <double*> malloc(nw * sizeof(double))
    # indexed load instead of a data-dependent branch on the draw
    target[0] = t0
    target[1] = t1
    if z == NULL:
        raise MemoryError()
    try:
        with nogil:
            for m in range(n_rep):
                for i in range(nw):
                    z[i] = z0[m, i]
                key = keys[m]
                g = 0
                n = start
                run_start = 1
                while True:
                    while g < n_grid and grid[g] == n:
                        _record(out, m, g, z, nw, reduced)
                        g = g + 1
                    if g == n_grid:
                        break
                    r = rates[n - start]
                    omr = 1.0 - r
                    if nw == 1:
                        zbar = z[0]
                    else:
                        s = z[0]
                        for i in range(1, nw):
                            s = s + z[i]
                        zbar = s / nw
                    base = <uint64_t> n * <uint64_t> nw
                    for i in range(nw):
                        p = omal * z[i] + alpha * zbar
                        u = _unit(key, base + <uint64_t> i)
                        hit = u < p
                        z[i] = omr * z[i] + r * target[hit]
                    k = n - start + 1
                    if track:
                        if k == 1 or hit != last:
                            run_start = k
                        last = hit
                    if keep:
                        draws[m, k - 1] = hit
                    n = n + 1
                if track:
                    fix_run_start[m] = run_start
                    fix_last[m] = last
    finally:
        free(z)


def pa_sequence(double delta, int64_t n_max, uint64_t key, int64_t[::1] degrees_out, int64_t[::1] maxdeg_out):
    cdef Py_ssize_t size = n_max
    cdef int64_t* tree = <int64_t*> malloc((size + 1) * sizeof(int64_t))
    cdef int64_t* deg = <int64_t*> malloc(size * sizeof(int64_t))
    cdef int64_t n, i, j, pos, nxt, rem, top, bit, idx
    cdef double u1, u2, w_deg
    if tree == NULL or deg == NULL:
        free(tree)
        free(deg)
        raise MemoryError()
    try:
        with nogil:
            for idx in range(size + 1):
                tree[idx] = 0
            for idx in range(size):
                deg[idx] = 0
            deg[0] = 1
            deg[1] = 1
            top = 1
            while top * 2 <= size:
                top = top * 2
            j = 0
            for n in range(2, n_max):
                maxdeg_out[n - 2] = deg[j]
                u1 = _unit(key, <uint64_t> (2 * n))
                u2 = _unit(key, <uint64_t> (2 * n + 1))
                w_deg = <double> (n - 2)
                if u1 * (w_deg + n * (1.0 + delta)) < w_deg:
                    rem = <int64_t> (u2 * w_deg)
                    pos = 0
                    bit = top
                    while bit:
                        nxt = pos + bit
                        if nxt <= size and tree[nxt] <= rem:
                            pos = nxt
                            rem = rem - tree[nxt]
                        bit = bit >> 1
                    i = pos
                else:
                    i = <int64_t> (u2 * n)
                deg[i] = deg[i] + 1
                idx = i + 1
                while idx <= size:
                    tree[idx] = tree[idx] + 1
                    idx = idx + (idx & -idx)
                deg[n] = 1
                if deg[i] > deg[j] or (deg[i] == deg[j] and i < j):
                    j = i
            maxdeg_out[n_max - 2] = deg[j]
            for idx in range(size):
                degrees_out[idx] = deg[idx]
    finally:
        free(tree)
        free(deg)
