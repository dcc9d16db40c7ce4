"""Pure-numpy / pure-Python reference kernels.

The compiled twin in _native.pyx mirrors the arithmetic here expression by
expression (same operand order, no fused multiply-add) so both backends
produce bitwise-identical arrays. Keep the two files in sync.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def interpolate_gather(verts, weights, readings, out=None):
    """value[p] = sum_k readings[verts[p, k]] * weights[p, k], k = 0..3.

    Accumulation order is fixed (k ascending) to match the compiled kernel.
    """
    verts = np.asarray(verts)
    weights = np.asarray(weights)
    readings = np.asarray(readings, dtype=np.float64)
    if out is None:
        out = np.empty(verts.shape[0], dtype=np.float64)
    np.multiply(readings[verts[:, 0]], weights[:, 0], out=out)
    out += readings[verts[:, 1]] * weights[:, 1]
    out += readings[verts[:, 2]] * weights[:, 2]
    out += readings[verts[:, 3]] * weights[:, 3]
    return out


def nearest_expansion(dims, spacing, sensor_positions):
    """Multi-source heap expansion over the lattice.

    Seeds one lattice cell per sensor, then relaxes 26-neighbourhoods with
    exact squared Euclidean distance to the owning sensor, keyed
    lexicographically by (distance2, sensor index) so ties resolve to the
    lowest index. Returns (owner, dist2): dense sensor index int32 and f64
    squared distance per particle.
    """
    nx, ny, nz = (int(d) for d in dims)
    dx, dy, dz = (float(s) for s in spacing)
    pos = np.asarray(sensor_positions, dtype=np.float64)
    n = nx * ny * nz
    best_d2 = np.full(n, np.inf, dtype=np.float64)
    best_sid = np.full(n, -1, dtype=np.int32)
    heap: list[tuple[float, int, int]] = []

    def relax(i, j, k, sid, sx, sy, sz):
        ddx = i * dx - sx
        ddy = j * dy - sy
        ddz = k * dz - sz
        d2 = ddx * ddx + ddy * ddy + ddz * ddz
        p = (k * ny + j) * nx + i
        if d2 < best_d2[p] or (d2 == best_d2[p] and sid < best_sid[p]):
            best_d2[p] = d2
            best_sid[p] = sid
            heapq.heappush(heap, (d2, sid, p))

    for sid in range(pos.shape[0]):
        sx, sy, sz = float(pos[sid, 0]), float(pos[sid, 1]), float(pos[sid, 2])
        i = min(max(int(math.floor(sx / dx + 0.5)), 0), nx - 1)
        j = min(max(int(math.floor(sy / dy + 0.5)), 0), ny - 1)
        k = min(max(int(math.floor(sz / dz + 0.5)), 0), nz - 1)
        relax(i, j, k, sid, sx, sy, sz)

    while heap:
        d2, sid, p = heapq.heappop(heap)
        if best_sid[p] != sid or best_d2[p] != d2:
            continue
        i = p % nx
        j = (p // nx) % ny
        k = p // (nx * ny)
        sx, sy, sz = float(pos[sid, 0]), float(pos[sid, 1]), float(pos[sid, 2])
        for kk in range(max(k - 1, 0), min(k + 1, nz - 1) + 1):
            for jj in range(max(j - 1, 0), min(j + 1, ny - 1) + 1):
                for ii in range(max(i - 1, 0), min(i + 1, nx - 1) + 1):
                    if ii == i and jj == j and kk == k:
                        continue
                    relax(ii, jj, kk, sid, sx, sy, sz)
    return best_sid, best_d2


def locate_particles(dims, spacing, idx_lo, idx_hi, inv, origin, eps):
    """Assign lattice particles to tetrahedra, first match in ascending order.

    idx_lo/idx_hi are per-tet inclusive lattice index windows (T, 3) covering
    the tet bounding box; inv is the (T, 3, 3) inverse of the edge matrix
    [v0-v3 | v1-v3 | v2-v3] and origin is v3, so w = inv @ (p - v3) gives the
    first three barycentric weights and w3 = 1 - w0 - w1 - w2. A particle is
    inside when all four weights are >= -eps. Returns (tet_of, bary):
    int32 tet index (-1 outside) and (N, 4) f64 weights.
    """
    nx, ny, nz = (int(d) for d in dims)
    dx, dy, dz = (float(s) for s in spacing)
    n = nx * ny * nz
    tet_of = np.full(n, -1, dtype=np.int32)
    bary = np.zeros((n, 4), dtype=np.float64)
    idx_lo = np.asarray(idx_lo, dtype=np.int64)
    idx_hi = np.asarray(idx_hi, dtype=np.int64)
    inv = np.asarray(inv, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)

    for t in range(inv.shape[0]):
        ilo, jlo, klo = idx_lo[t]
        ihi, jhi, khi = idx_hi[t]
        if ihi < ilo or jhi < jlo or khi < klo:
            continue
        ii = np.arange(ilo, ihi + 1)
        jj = np.arange(jlo, jhi + 1)
        kk = np.arange(klo, khi + 1)
        ddx = (ii * dx - origin[t, 0])[None, None, :]
        ddy = (jj * dy - origin[t, 1])[None, :, None]
        ddz = (kk * dz - origin[t, 2])[:, None, None]
        m = inv[t]
        w0 = m[0, 0] * ddx + m[0, 1] * ddy + m[0, 2] * ddz
        w1 = m[1, 0] * ddx + m[1, 1] * ddy + m[1, 2] * ddz
        w2 = m[2, 0] * ddx + m[2, 1] * ddy + m[2, 2] * ddz
        w3 = 1.0 - w0 - w1 - w2
        inside = (w0 >= -eps) & (w1 >= -eps) & (w2 >= -eps) & (w3 >= -eps)
        pid = ((kk[:, None, None] * ny + jj[None, :, None]) * nx
               + ii[None, None, :])
        take = inside & (tet_of[pid] == -1)
        sel = pid[take]
        tet_of[sel] = t
        bary[sel, 0] = w0[take]
        bary[sel, 1] = w1[take]
        bary[sel, 2] = w2[take]
        bary[sel, 3] = w3[take]
    return tet_of, bary
