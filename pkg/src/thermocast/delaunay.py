"""Delaunay tetrahedralization of the sensor positions.

Bowyer-Watson incremental insertion inside a large bounding tetrahedron.
Orientation and in-circumsphere tests run on exact integers: every float is a
dyadic rational, so scaling all coordinates by a common power of two turns
determinant signs into exact bigint arithmetic. Layered sensor layouts are
full of cospherical/coplanar ties, so each point is nudged by a tiny
deterministic jitter derived from a hash of its coordinates; the jitter is
orders of magnitude below the property tolerance and, being a function of the
position alone, keeps the result independent of sensor list order.

The empty-circumsphere property of the output is what callers rely on, not
any particular tetrahedron set for degenerate inputs.
"""

from __future__ import annotations

import hashlib
import struct
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateSensorsError
from .grid import SensorSet

JOGGLE_REL = 1e-9        # jitter amplitude relative to the bounding-box diagonal
COPLANAR_REL = 1e-9      # singular-value cutoff for "all sensors coplanar"
VOLUME_REL = 1e-8        # tets flatter than this fraction of diag^3 are dropped
DELAUNAY_EPS_REL = 1e-7  # property-check tolerance relative to the diagonal


@dataclass(frozen=True)
class Tetrahedron:
    vertex_ids: tuple[int, int, int, int]
    circumcenter: tuple[float, float, float]
    circumradius: float


class TetraMesh:
    """Tetrahedra over a sensor set, sorted by vertex-id tuple so tetrahedron
    ids are stable across runs and sensor list permutations."""

    def __init__(self, tetrahedra: list[Tetrahedron], source: SensorSet):
        self.tetrahedra = tetrahedra
        self.source = source

    def __len__(self) -> int:
        return len(self.tetrahedra)

    def vertex_indices(self) -> np.ndarray:
        """(T, 4) dense indices into the source sensor list."""
        lookup = self.source.id_to_index()
        return np.array(
            [[lookup[v] for v in t.vertex_ids] for t in self.tetrahedra], dtype=np.int32
        ).reshape(-1, 4)

    def vertex_positions(self) -> np.ndarray:
        """(T, 4, 3) vertex coordinates per tetrahedron."""
        pos = self.source.positions()
        return pos[self.vertex_indices()]


def signed_volume(a, b, c, d) -> float:
    """Signed volume of tetrahedron (a, b, c, d); positive when d lies on the
    side of plane abc pointed to by (b-a) x (c-a)."""
    a = np.asarray(a, dtype=np.float64)
    m = np.array([np.asarray(b) - a, np.asarray(c) - a, np.asarray(d) - a], dtype=np.float64)
    return float(np.linalg.det(m)) / 6.0


def circumsphere(a, b, c, d) -> tuple[np.ndarray, float]:
    """Center and radius of the sphere through four non-coplanar points.

    Raises numpy.linalg.LinAlgError when the points are coplanar.
    """
    pts = np.array([a, b, c, d], dtype=np.float64)
    rows = 2.0 * (pts[1:] - pts[0])
    rhs = np.sum(pts[1:] ** 2, axis=1) - np.sum(pts[0] ** 2)
    center = np.linalg.solve(rows, rhs)
    radius = float(np.linalg.norm(pts[0] - center))
    return center, radius


def tetrahedralize(sensors: SensorSet) -> TetraMesh:
    """Delaunay tetrahedralization of the sensor positions.

    Raises DegenerateSensorsError for fewer than 4 sensors or an all-coplanar
    layout; callers then weight every particle by its nearest sensor.
    """
    if len(sensors) < 4:
        raise DegenerateSensorsError(f"need at least 4 sensors, have {len(sensors)}")
    positions = sensors.positions()
    ids = [s.id for s in sensors.sensors]

    span = positions.max(axis=0) - positions.min(axis=0)
    diag = float(np.linalg.norm(span))
    if diag == 0.0:
        raise DegenerateSensorsError("all sensors at one position")
    centered = positions - positions.mean(axis=0)
    if np.linalg.svd(centered, compute_uv=False)[-1] < COPLANAR_REL * diag:
        raise DegenerateSensorsError("sensors are coplanar; cannot tetrahedralize")

    # Deterministic insertion order independent of list order.
    order = sorted(range(len(ids)), key=lambda i: tuple(positions[i]))
    jogged = [_joggle(positions[i], JOGGLE_REL * diag) for i in order]

    center = positions.mean(axis=0)
    super_pts = _containing_tetrahedron(center, 1e6 * diag)
    int_pts = _scale_to_ints(super_pts + jogged)
    kept = _bowyer_watson(int_pts)

    vol_tol = VOLUME_REL * diag**3
    tets = []
    for quad in kept:
        sensor_idx = [order[v - 4] for v in quad]
        verts = positions[sensor_idx]
        if abs(signed_volume(*verts)) < vol_tol:
            continue  # joggle-resolved sliver, no usable interior
        try:
            c, r = circumsphere(*verts)
        except np.linalg.LinAlgError:
            continue
        vids = tuple(sorted(ids[i] for i in sensor_idx))
        tets.append(Tetrahedron(vertex_ids=vids, circumcenter=tuple(c), circumradius=r))
    tets.sort(key=lambda t: t.vertex_ids)
    return TetraMesh(tetrahedra=tets, source=sensors)


def empty_circumsphere_violations(mesh: TetraMesh, eps: float | None = None):
    """Sensors lying strictly inside some tetrahedron's circumsphere by more
    than eps. Empty list means the Delaunay property holds."""
    if eps is None:
        positions = mesh.source.positions()
        span = positions.max(axis=0) - positions.min(axis=0)
        eps = DELAUNAY_EPS_REL * float(np.linalg.norm(span))
    out = []
    pos = mesh.source.positions()
    ids = mesh.source.ids()
    for tid, tet in enumerate(mesh.tetrahedra):
        c = np.asarray(tet.circumcenter)
        dist = np.linalg.norm(pos - c, axis=1)
        for si in np.nonzero(dist < tet.circumradius - eps)[0]:
            if int(ids[si]) not in tet.vertex_ids:
                out.append((tid, int(ids[si]), float(tet.circumradius - dist[si])))
    return out


# --- construction internals -------------------------------------------------

def _joggle(p: np.ndarray, amplitude: float) -> tuple[float, float, float]:
    """Deterministic jitter from a hash of the exact coordinate bits."""
    digest = hashlib.blake2b(struct.pack("<3d", *p), digest_size=12).digest()
    u = struct.unpack("<3I", digest)
    return tuple(
        float(p[axis] + (u[axis] / 2**32 - 0.5) * 2.0 * amplitude) for axis in range(3)
    )


def _containing_tetrahedron(center: np.ndarray, scale: float) -> list[tuple[float, float, float]]:
    dirs = [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)]
    return [tuple(float(center[a] + scale * d[a]) for a in range(3)) for d in dirs]


def _scale_to_ints(points: list[tuple[float, float, float]]) -> list[tuple[int, int, int]]:
    fracs = [tuple(Fraction(c) for c in p) for p in points]
    scale = max(f.denominator for p in fracs for f in p)  # all powers of two
    return [tuple(int(f * scale) for f in p) for p in fracs]


def _det3(m) -> int:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def _orient3d(a, b, c, d) -> int:
    det = _det3(
        [
            (b[0] - a[0], b[1] - a[1], b[2] - a[2]),
            (c[0] - a[0], c[1] - a[1], c[2] - a[2]),
            (d[0] - a[0], d[1] - a[1], d[2] - a[2]),
        ]
    )
    return (det > 0) - (det < 0)


def _insphere(a, b, c, d, e) -> int:
    """Sign > 0 iff e lies strictly inside the circumsphere of the tetrahedron
    (a, b, c, d), which must be positively oriented per _orient3d."""
    rows = []
    for p in (a, b, c, d):
        dx, dy, dz = p[0] - e[0], p[1] - e[1], p[2] - e[2]
        rows.append((dx, dy, dz, dx * dx + dy * dy + dz * dz))
    det = 0
    sign = 1
    for col in range(4):
        minor = [
            [rows[r][c] for c in range(4) if c != col]
            for r in range(1, 4)
        ]
        det += sign * rows[0][col] * _det3(minor)
        sign = -sign
    # row layout above yields a negative determinant for interior points
    # under _orient3d's positive orientation
    return (det < 0) - (det > 0)


def _oriented(quad, pts):
    s = _orient3d(*(pts[v] for v in quad))
    if s > 0:
        return quad
    if s < 0:
        return (quad[0], quad[1], quad[3], quad[2])
    raise DegenerateSensorsError("flat tetrahedron despite joggle; positions coincide?")


def _bowyer_watson(pts: list[tuple[int, int, int]]) -> list[tuple[int, int, int, int]]:
    """Incremental insertion; pts[0:4] are the bounding-tetrahedron vertices.
    Returns tetrahedra (vertex index quadruples) free of bounding vertices."""
    tets = {_oriented((0, 1, 2, 3), pts)}
    for v in range(4, len(pts)):
        bad = [t for t in tets if _insphere(pts[t[0]], pts[t[1]], pts[t[2]], pts[t[3]], pts[v]) > 0]
        if not bad:
            raise DegenerateSensorsError("insertion point outside every circumsphere")
        faces = Counter()
        for t in bad:
            for skip in range(4):
                faces[frozenset(t[j] for j in range(4) if j != skip)] += 1
        tets.difference_update(bad)
        for face, n in faces.items():
            if n != 1:
                continue  # interior face of the cavity
            f0, f1, f2 = tuple(face)
            tets.add(_oriented((f0, f1, f2, v), pts))
    return [t for t in tets if min(t) >= 4]
