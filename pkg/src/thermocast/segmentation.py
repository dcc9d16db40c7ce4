"""Assign every particle to a region of the sensor field.

Particles inside the Delaunay mesh get barycentric weights over the four
sensors of their containing tetrahedron; particles outside the hull copy the
reading of their nearest sensor (discrete Voronoi regions, computed by
multi-source expansion over the lattice). Both classifications are frozen in
a WeightMap so the per-tick update is a single weighted gather.

Sensors are indexed in ascending-id order everywhere in this module; that is
the dense index space of WeightMap.verts and of reading arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .delaunay import TetraMesh, signed_volume
from .grid import ParticleGrid, SensorSet

# Inside test tolerance on normalized barycentric weights. A point counts as
# inside when all four weights are >= -EPS_BARY.
EPS_BARY = 1e-9

# Lattice index windows around each tet bounding box get this much relative
# slack (times the room diagonal) so the -EPS_BARY boundary band is never
# clipped away by the window itself.
_BBOX_MARGIN_REL = 1e-8


@dataclass
class WeightMap:
    """Frozen particle-to-sensor assignment for one (grid, sensors, mesh).

    verts holds dense sensor indices (ascending-id order, see sensor_ids);
    outside particles replicate their nearest sensor with weights (1,0,0,0)
    so interpolation is one uniform gather for every particle.
    """

    sensor_ids: np.ndarray    # (M,) int64, ascending
    tet_of: np.ndarray        # (N,) int32, tet index or -1 outside
    verts: np.ndarray         # (N, 4) int32 dense sensor indices
    weights: np.ndarray       # (N, 4) f64
    nearest: np.ndarray       # (N,) int32 dense index of nearest sensor
    nearest_d2: np.ndarray    # (N,) f64 squared distance to that sensor
    mesh: TetraMesh | None

    @property
    def count(self) -> int:
        return self.tet_of.shape[0]

    @property
    def inside_count(self) -> int:
        return int(np.count_nonzero(self.tet_of >= 0))

    @property
    def outside_count(self) -> int:
        return self.count - self.inside_count

    def reading_array(self, readings) -> np.ndarray:
        """Readings as a dense (M,) f64 array in ascending-id order.

        Accepts a mapping {sensor_id: value} covering every sensor, or an
        array already in dense order.
        """
        if isinstance(readings, dict):
            out = np.empty(self.sensor_ids.shape[0], dtype=np.float64)
            for i, sid in enumerate(self.sensor_ids):
                try:
                    out[i] = readings[int(sid)]
                except KeyError:
                    raise ValueError(f"missing reading for sensor {int(sid)}") from None
            return out
        arr = np.asarray(readings, dtype=np.float64)
        if arr.shape != self.sensor_ids.shape:
            raise ValueError(
                f"expected {self.sensor_ids.shape[0]} readings, got {arr.shape}"
            )
        return arr

    def to_csv(self, path: str | Path) -> None:
        """Debug dump: one row per particle with its region and weights."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["particle_id", "kind", "tet_or_sensor", "w0", "w1", "w2", "w3"])
            for p in range(self.count):
                t = int(self.tet_of[p])
                if t >= 0:
                    ref: int = t
                    kind = "inside"
                else:
                    ref = int(self.sensor_ids[self.nearest[p]])
                    kind = "outside"
                w.writerow([p, kind, ref] + [repr(float(x)) for x in self.weights[p]])


def _canonical_order(sensors: SensorSet) -> tuple[np.ndarray, np.ndarray]:
    """(ids, positions) sorted by ascending sensor id."""
    ids = sensors.ids()
    order = np.argsort(ids, kind="stable")
    return ids[order], sensors.positions()[order]


def barycentric_weights(point, vertices) -> np.ndarray:
    """Barycentric weights of point w.r.t. a tetrahedron, as ratios of signed
    volumes (replace one vertex with the point, divide by the full volume)."""
    v = np.asarray(vertices, dtype=np.float64)
    p = np.asarray(point, dtype=np.float64)
    if v.shape != (4, 3):
        raise ValueError(f"expected 4 vertices of 3 coords, got shape {v.shape}")
    total = signed_volume(v[0], v[1], v[2], v[3])
    if total == 0.0:
        raise ValueError("degenerate tetrahedron: zero signed volume")
    return np.array([
        signed_volume(p, v[1], v[2], v[3]) / total,
        signed_volume(v[0], p, v[2], v[3]) / total,
        signed_volume(v[0], v[1], p, v[3]) / total,
        signed_volume(v[0], v[1], v[2], p) / total,
    ])


def point_in_tetrahedron(point, vertices, eps: float = EPS_BARY) -> bool:
    """Four signed-volume orientation tests: inside iff every barycentric
    weight is >= -eps."""
    return bool(np.all(barycentric_weights(point, vertices) >= -eps))


def _expansion(grid: ParticleGrid, sensors: SensorSet) -> tuple[np.ndarray, np.ndarray]:
    """Nearest sensor per particle as (dense index, squared distance)."""
    _, pos = _canonical_order(sensors)
    return kernels.nearest_expansion(grid.dims, grid.spacing, pos)


def nearest_sensor_expansion(grid: ParticleGrid, sensors: SensorSet) -> np.ndarray:
    """Nearest sensor id per particle, ties to the lowest id."""
    ids, _ = _canonical_order(sensors)
    owner, _ = _expansion(grid, sensors)
    return ids[owner]


def _tet_geometry(mesh: TetraMesh, id_index: dict[int, int], positions: np.ndarray):
    """Per-tet arrays the locate kernel needs: dense vertex indices, inverse
    edge matrices, origins (vertex 3) and vertex coordinate blocks."""
    tets = mesh.tetrahedra
    t_count = len(tets)
    vert_idx = np.empty((t_count, 4), dtype=np.int32)
    for t, tet in enumerate(tets):
        for c, sid in enumerate(tet.vertex_ids):
            vert_idx[t, c] = id_index[sid]
    coords = positions[vert_idx]                      # (T, 4, 3)
    edges = np.empty((t_count, 3, 3), dtype=np.float64)
    for c in range(3):
        edges[:, :, c] = coords[:, c, :] - coords[:, 3, :]
    inv = np.linalg.inv(edges)
    return vert_idx, coords, inv, coords[:, 3, :]


def locate(grid: ParticleGrid, mesh: TetraMesh | None, sensors: SensorSet) -> WeightMap:
    """Classify every particle and freeze its interpolation stencil.

    Scans tetrahedra in ascending index order; the first containing tet wins
    so the assignment is deterministic. Inside weights are normalized to sum
    to one; outside particles point at their nearest sensor.
    """
    ids, pos = _canonical_order(sensors)
    owner, d2 = kernels.nearest_expansion(grid.dims, grid.spacing, pos)
    n = grid.count

    if mesh is None or not mesh.tetrahedra:
        tet_of = np.full(n, -1, dtype=np.int32)
        bary = None
    else:
        id_index = {int(s): i for i, s in enumerate(ids)}
        vert_idx, coords, inv, origin = _tet_geometry(mesh, id_index, pos)
        margin = _BBOX_MARGIN_REL * grid.room.diagonal
        lo = coords.min(axis=1) - margin
        hi = coords.max(axis=1) + margin
        spacing = np.asarray(grid.spacing)
        dims = np.asarray(grid.dims)
        idx_lo = np.maximum(np.ceil(lo / spacing).astype(np.int64), 0)
        idx_hi = np.minimum(np.floor(hi / spacing).astype(np.int64), dims - 1)
        tet_of, bary = kernels.locate_particles(
            grid.dims, grid.spacing, idx_lo, idx_hi, inv, origin, EPS_BARY
        )

    verts = np.empty((n, 4), dtype=np.int32)
    weights = np.zeros((n, 4), dtype=np.float64)
    outside = tet_of < 0
    verts[outside] = owner[outside, None]
    weights[outside, 0] = 1.0
    inside = ~outside
    if bary is not None and inside.any():
        verts[inside] = vert_idx[tet_of[inside]]
        # face-band hits carry eps-negative coordinates; snap them to the
        # face so every stencil stays a convex combination
        w = np.maximum(bary[inside], 0.0)
        weights[inside] = w / w.sum(axis=1, keepdims=True)

    return WeightMap(
        sensor_ids=ids,
        tet_of=tet_of,
        verts=verts,
        weights=weights,
        nearest=owner,
        nearest_d2=d2,
        mesh=mesh,
    )


def interpolate(wm: WeightMap, readings, out: np.ndarray | None = None) -> np.ndarray:
    """Particle values for one set of sensor readings: a weighted gather over
    the frozen stencils. Pure function of (wm, readings)."""
    dense = wm.reading_array(readings)
    return kernels.interpolate_gather(wm.verts, wm.weights, dense, out=out)


def apply_readings(wm: WeightMap, readings, grid: ParticleGrid) -> np.ndarray:
    """Interpolate into grid.values in place and return it."""
    interpolate(wm, readings, out=grid.values)
    return grid.values
