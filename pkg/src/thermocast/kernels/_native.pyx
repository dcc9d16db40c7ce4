# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels, arithmetic-identical to _fallback.py.

Every expression mirrors the fallback operand for operand and the module is
built with -ffp-contract=off, so outputs are bitwise equal across backends.
Keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()


def interpolate_gather(verts, weights, readings, out=None):
    """See _fallback.interpolate_gather."""
    cdef const cnp.int32_t[:, ::1] v = np.ascontiguousarray(verts, dtype=np.int32)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(readings, dtype=np.float64)
    out_arr = np.empty(v.shape[0], dtype=np.float64) if out is None else out
    cdef double[::1] o = out_arr
    cdef Py_ssize_t p, n = v.shape[0]
    for p in range(n):
        o[p] = (r[v[p, 0]] * w[p, 0] + r[v[p, 1]] * w[p, 1]
                + r[v[p, 2]] * w[p, 2] + r[v[p, 3]] * w[p, 3])
    return out_arr


cdef struct Entry:
    double d2
    long sid
    long p


cdef struct Heap:
    Entry *items
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint _less(Entry a, Entry b) noexcept:
    if a.d2 != b.d2:
        return a.d2 < b.d2
    if a.sid != b.sid:
        return a.sid < b.sid
    return a.p < b.p


cdef int _push(Heap *h, double d2, long sid, long p) except -1:
    cdef Py_ssize_t i, parent
    cdef Entry e
    cdef Entry *grown
    if h.size == h.cap:
        h.cap = h.cap * 2 if h.cap else 1024
        grown = <Entry *>realloc(h.items, h.cap * sizeof(Entry))
        if grown == NULL:
            raise MemoryError()
        h.items = grown
    e.d2 = d2
    e.sid = sid
    e.p = p
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _less(e, h.items[parent]):
            h.items[i] = h.items[parent]
            i = parent
        else:
            break
    h.items[i] = e
    return 0


cdef Entry _pop(Heap *h) noexcept:
    cdef Entry top = h.items[0]
    cdef Entry last
    cdef Py_ssize_t i = 0, child
    h.size -= 1
    last = h.items[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and _less(h.items[child + 1], h.items[child]):
            child += 1
        if _less(h.items[child], last):
            h.items[i] = h.items[child]
            i = child
        else:
            break
    h.items[i] = last
    return top


def nearest_expansion(dims, spacing, sensor_positions):
    """See _fallback.nearest_expansion."""
    cdef long nx = dims[0], ny = dims[1], nz = dims[2]
    cdef double dx = spacing[0], dy = spacing[1], dz = spacing[2]
    pos_arr = np.ascontiguousarray(sensor_positions, dtype=np.float64)
    cdef const double[:, ::1] pos = pos_arr
    cdef long n = nx * ny * nz
    best_d2_arr = np.full(n, np.inf, dtype=np.float64)
    best_sid_arr = np.full(n, -1, dtype=np.int32)
    cdef double[::1] best_d2 = best_d2_arr
    cdef cnp.int32_t[::1] best_sid = best_sid_arr

    cdef Heap h
    h.items = NULL
    h.size = 0
    h.cap = 0

    cdef long sid, i, j, k, ii, jj, kk, p, q
    cdef double sx, sy, sz, ddx, ddy, ddz, d2
    cdef Entry top
    try:
        for sid in range(pos.shape[0]):
            sx = pos[sid, 0]
            sy = pos[sid, 1]
            sz = pos[sid, 2]
            i = <long>floor(sx / dx + 0.5)
            if i < 0:
                i = 0
            if i > nx - 1:
                i = nx - 1
            j = <long>floor(sy / dy + 0.5)
            if j < 0:
                j = 0
            if j > ny - 1:
                j = ny - 1
            k = <long>floor(sz / dz + 0.5)
            if k < 0:
                k = 0
            if k > nz - 1:
                k = nz - 1
            ddx = i * dx - sx
            ddy = j * dy - sy
            ddz = k * dz - sz
            d2 = ddx * ddx + ddy * ddy + ddz * ddz
            p = (k * ny + j) * nx + i
            if d2 < best_d2[p] or (d2 == best_d2[p] and sid < best_sid[p]):
                best_d2[p] = d2
                best_sid[p] = <cnp.int32_t>sid
                _push(&h, d2, sid, p)

        while h.size > 0:
            top = _pop(&h)
            p = top.p
            sid = top.sid
            if best_sid[p] != sid or best_d2[p] != top.d2:
                continue
            i = p % nx
            j = (p // nx) % ny
            k = p // (nx * ny)
            sx = pos[sid, 0]
            sy = pos[sid, 1]
            sz = pos[sid, 2]
            for kk in range(k - 1 if k > 0 else 0, (k + 1 if k + 1 < nz else nz - 1) + 1):
                for jj in range(j - 1 if j > 0 else 0, (j + 1 if j + 1 < ny else ny - 1) + 1):
                    for ii in range(i - 1 if i > 0 else 0, (i + 1 if i + 1 < nx else nx - 1) + 1):
                        if ii == i and jj == j and kk == k:
                            continue
                        ddx = ii * dx - sx
                        ddy = jj * dy - sy
                        ddz = kk * dz - sz
                        d2 = ddx * ddx + ddy * ddy + ddz * ddz
                        q = (kk * ny + jj) * nx + ii
                        if d2 < best_d2[q] or (d2 == best_d2[q] and sid < best_sid[q]):
                            best_d2[q] = d2
                            best_sid[q] = <cnp.int32_t>sid
                            _push(&h, d2, sid, q)
    finally:
        free(h.items)
    return best_sid_arr, best_d2_arr


def locate_particles(dims, spacing, idx_lo, idx_hi, inv, origin, eps):
    """See _fallback.locate_particles."""
    cdef long nx = dims[0], ny = dims[1], nz = dims[2]
    cdef double dx = spacing[0], dy = spacing[1], dz = spacing[2]
    cdef const cnp.int64_t[:, ::1] lo = np.ascontiguousarray(idx_lo, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] hi = np.ascontiguousarray(idx_hi, dtype=np.int64)
    cdef const double[:, :, ::1] m = np.ascontiguousarray(inv, dtype=np.float64)
    cdef const double[:, ::1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double e = eps
    cdef long n = nx * ny * nz
    tet_of_arr = np.full(n, -1, dtype=np.int32)
    bary_arr = np.zeros((n, 4), dtype=np.float64)
    cdef cnp.int32_t[::1] tet_of = tet_of_arr
    cdef double[:, ::1] bary = bary_arr

    cdef long t, i, j, k, p
    cdef double ox, oy, oz, ddx, ddy, ddz, w0, w1, w2, w3
    cdef double m00, m01, m02, m10, m11, m12, m20, m21, m22
    for t in range(m.shape[0]):
        if hi[t, 0] < lo[t, 0] or hi[t, 1] < lo[t, 1] or hi[t, 2] < lo[t, 2]:
            continue
        m00 = m[t, 0, 0]; m01 = m[t, 0, 1]; m02 = m[t, 0, 2]
        m10 = m[t, 1, 0]; m11 = m[t, 1, 1]; m12 = m[t, 1, 2]
        m20 = m[t, 2, 0]; m21 = m[t, 2, 1]; m22 = m[t, 2, 2]
        ox = org[t, 0]
        oy = org[t, 1]
        oz = org[t, 2]
        for k in range(lo[t, 2], hi[t, 2] + 1):
            ddz = k * dz - oz
            for j in range(lo[t, 1], hi[t, 1] + 1):
                ddy = j * dy - oy
                for i in range(lo[t, 0], hi[t, 0] + 1):
                    p = (k * ny + j) * nx + i
                    if tet_of[p] != -1:
                        continue
                    ddx = i * dx - ox
                    w0 = m00 * ddx + m01 * ddy + m02 * ddz
                    w1 = m10 * ddx + m11 * ddy + m12 * ddz
                    w2 = m20 * ddx + m21 * ddy + m22 * ddz
                    w3 = 1.0 - w0 - w1 - w2
                    if w0 >= -e and w1 >= -e and w2 >= -e and w3 >= -e:
                        tet_of[p] = <cnp.int32_t>t
                        bary[p, 0] = w0
                        bary[p, 1] = w1
                        bary[p, 2] = w2
                        bary[p, 3] = w3
    return tet_of_arr, bary_arr
