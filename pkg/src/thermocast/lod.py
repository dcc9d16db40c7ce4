"""Level-of-detail reductions of the particle field.

Four strategies trade particle count against bandwidth, driven by the
viewer's distance to the room:

  cluster     merge f*f*f lattice cells into barycenter points
  significant keep only strict local extrema of the field
  resolution  stride-decimate the grid (or densify it for the closest band)
  diffusion   stagger delta updates in waves ordered by sensor distance

Bands index the distance thresholds; band 0 is the closest viewer and the
highest detail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ParticleGrid, SensorSet
from .segmentation import WeightMap, interpolate, locate

DEFAULT_BAND_THRESHOLDS_CM = (500.0, 1000.0, 1500.0, 2000.0)
DEFAULT_CLUSTER_FACTORS = (1, 2, 5, 10)
DEFAULT_NEIGHBOR_DEPTHS = (0, 1, 2, 3)
DEFAULT_RESOLUTION_TARGETS = (120000, 30000, 7500, 1875)

LOD_KINDS = ("cluster", "significant", "resolution")


@dataclass(frozen=True)
class BandConfig:
    """Per-band parameters for every strategy. All tuples share one length."""

    thresholds_cm: tuple[float, ...] = DEFAULT_BAND_THRESHOLDS_CM
    cluster_factors: tuple[int, ...] = DEFAULT_CLUSTER_FACTORS
    neighbor_depths: tuple[int, ...] = DEFAULT_NEIGHBOR_DEPTHS
    resolution_targets: tuple[int, ...] = DEFAULT_RESOLUTION_TARGETS

    def __post_init__(self):
        n = len(self.thresholds_cm)
        if n == 0:
            raise ValueError("at least one band is required")
        for name in ("cluster_factors", "neighbor_depths", "resolution_targets"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must list one entry per band ({n})")
        if any(t <= 0 for t in self.thresholds_cm):
            raise ValueError("band thresholds must be positive")
        if list(self.thresholds_cm) != sorted(set(self.thresholds_cm)):
            raise ValueError("band thresholds must be strictly increasing")
        if any(f < 1 for f in self.cluster_factors):
            raise ValueError("cluster factors must be >= 1")
        if any(d < 0 for d in self.neighbor_depths):
            raise ValueError("neighbor depths must be >= 0")
        if any(t < 1 for t in self.resolution_targets):
            raise ValueError("resolution targets must be >= 1")

    @property
    def band_count(self) -> int:
        return len(self.thresholds_cm)

    def check_band(self, band: int) -> int:
        if not 0 <= band < self.band_count:
            raise ValueError(f"band {band} out of range [0, {self.band_count})")
        return band


@dataclass
class LodLevel:
    """One reduced view of the field: points with values.

    source_ids maps points back to base-grid particle indices when the level
    is a subset of the grid; levels made of new points (cluster barycenters,
    densified grids) carry None and use positional wire ids instead.
    """

    band: int
    kind: str
    positions: np.ndarray          # (K, 3) f64, meters
    values: np.ndarray             # (K,) f64
    source_ids: np.ndarray | None  # (K,) int64 or None

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def wire_ids(self) -> np.ndarray:
        if self.source_ids is not None:
            return self.source_ids
        return np.arange(self.count, dtype=np.int64)


def select_band(viewpoint_cm, target_cm, config: BandConfig) -> int:
    """First band whose distance threshold strictly exceeds the viewer's
    distance to the target; past the last threshold, the last band."""
    vp = np.asarray(viewpoint_cm, dtype=np.float64)
    tg = np.asarray(target_cm, dtype=np.float64)
    dist = float(np.linalg.norm(vp - tg))
    for band, threshold in enumerate(config.thresholds_cm):
        if threshold > dist:
            return band
    return config.band_count - 1


def cluster_grid(grid: ParticleGrid, factor: int, values=None, band: int = 0) -> LodLevel:
    """Merge cubes of factor^3 lattice cells into their barycenters, value =
    mean of members. Boundary cells merge whatever remains (ceil division).
    Factor 1 is the grid itself."""
    if factor < 1:
        raise ValueError(f"cluster factor must be >= 1, got {factor}")
    vals = grid.values if values is None else np.asarray(values, dtype=np.float64)
    if vals.shape[0] != grid.count:
        raise ValueError(f"expected {grid.count} values, got {vals.shape[0]}")
    if factor == 1:
        return LodLevel(band, "cluster", grid.positions(), vals.copy(),
                        np.arange(grid.count, dtype=np.int64))
    nx, ny, nz = grid.dims
    cx = -(-nx // factor)
    cy = -(-ny // factor)
    cz = -(-nz // factor)
    p = np.arange(grid.count)
    ci = (p % nx) // factor
    cj = (p // nx % ny) // factor
    ck = (p // (nx * ny)) // factor
    cell = (ck * cy + cj) * cx + ci
    n_cells = cx * cy * cz
    counts = np.bincount(cell, minlength=n_cells).astype(np.float64)
    pos = grid.positions()
    centers = np.stack(
        [np.bincount(cell, weights=pos[:, a], minlength=n_cells) / counts for a in range(3)],
        axis=1,
    )
    means = np.bincount(cell, weights=vals, minlength=n_cells) / counts
    return LodLevel(band, "cluster", centers, means, None)


def _neighborhood_extrema(vals3: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Max and min over the Chebyshev-depth neighborhood excluding the
    center, computed with shifted windows; borders see only in-range cells."""
    nz, ny, nx = vals3.shape
    nmax = np.full(vals3.shape, -np.inf)
    nmin = np.full(vals3.shape, np.inf)
    offsets = range(-depth, depth + 1)
    for dk in offsets:
        for dj in offsets:
            for di in offsets:
                if dk == 0 and dj == 0 and di == 0:
                    continue
                tz = slice(max(0, -dk), nz - max(0, dk))
                ty = slice(max(0, -dj), ny - max(0, dj))
                tx = slice(max(0, -di), nx - max(0, di))
                sz = slice(max(0, dk), nz - max(0, -dk))
                sy = slice(max(0, dj), ny - max(0, -dj))
                sx = slice(max(0, di), nx - max(0, -di))
                np.maximum(nmax[tz, ty, tx], vals3[sz, sy, sx], out=nmax[tz, ty, tx])
                np.minimum(nmin[tz, ty, tx], vals3[sz, sy, sx], out=nmin[tz, ty, tx])
    return nmax, nmin


def sensor_anchor_ids(grid: ParticleGrid, sensors: SensorSet) -> np.ndarray:
    """Base-grid particle nearest to each sensor (unique, ascending)."""
    nx, ny, nz = grid.dims
    dx, dy, dz = grid.spacing
    ids = set()
    for s in sensors.sensors:
        i = min(max(int(math.floor(s.x / dx + 0.5)), 0), nx - 1)
        j = min(max(int(math.floor(s.y / dy + 0.5)), 0), ny - 1)
        k = min(max(int(math.floor(s.layer / dz + 0.5)), 0), nz - 1)
        ids.add(grid.index(i, j, k))
    return np.array(sorted(ids), dtype=np.int64)


def significant_vertices(grid: ParticleGrid, depth: int, values=None,
                         mode: str = "both", sensors: SensorSet | None = None,
                         band: int = 0) -> LodLevel:
    """Keep particles that are strict extrema of their depth-neighborhood.

    Depth 0 keeps everything (empty neighborhood). With `sensors` given the
    particles nearest each sensor are always kept too, so measured sites
    survive decimation, the level is never empty, and counts stay monotone
    non-increasing in depth. Without `sensors` the result is the bare
    extrema set and an empty one raises.
    """
    if depth < 0:
        raise ValueError(f"neighbor depth must be >= 0, got {depth}")
    if mode not in ("high", "low", "both"):
        raise ValueError(f"mode must be high, low or both, got {mode!r}")
    vals = grid.values if values is None else np.asarray(values, dtype=np.float64)
    if vals.shape[0] != grid.count:
        raise ValueError(f"expected {grid.count} values, got {vals.shape[0]}")
    if depth == 0:
        ids = np.arange(grid.count, dtype=np.int64)
    else:
        nx, ny, nz = grid.dims
        vals3 = vals.reshape(nz, ny, nx)
        nmax, nmin = _neighborhood_extrema(vals3, depth)
        if mode == "high":
            mask = vals3 > nmax
        elif mode == "low":
            mask = vals3 < nmin
        else:
            mask = (vals3 > nmax) | (vals3 < nmin)
        ids = np.flatnonzero(mask.reshape(-1)).astype(np.int64)
        if sensors is not None:
            ids = np.union1d(ids, sensor_anchor_ids(grid, sensors))
        elif ids.size == 0:
            raise ValueError(
                "no significant vertices and no sensors to anchor the level"
            )
    return LodLevel(band, "significant", grid.positions()[ids], vals[ids], ids)


@dataclass
class DenseField:
    """Densified twin of the base grid for the closest band: in-plane dims
    multiplied, heights kept, with its own frozen weight map."""

    grid: ParticleGrid
    wm: WeightMap
    factor_xy: int


def build_dense_field(base: ParticleGrid, mesh, sensors: SensorSet,
                      factor_xy: int = 2) -> DenseField:
    if factor_xy < 2:
        raise ValueError(f"densify factor must be >= 2, got {factor_xy}")
    dims = (base.nx * factor_xy, base.ny * factor_xy, base.nz)
    dense_grid = ParticleGrid(base.room, dims)
    return DenseField(dense_grid, locate(dense_grid, mesh, sensors), factor_xy)


def _stride_subset(n: int, target: int) -> np.ndarray:
    stride = n // target
    return np.arange(0, n, stride, dtype=np.int64)[:target]


def reresolve(grid: ParticleGrid, wm: WeightMap, readings, band: int,
              config: BandConfig, dense: DenseField | None = None,
              sensors: SensorSet | None = None) -> LodLevel:
    """Re-point the field at the band's target particle count.

    Targets at or below the grid size stride-decimate the base grid (target
    equal to the grid size is the grid itself). Larger targets re-interpolate
    onto the densified grid, then decimate that; the DenseField is built on
    demand when `sensors` is given, otherwise it must be passed in.
    """
    config.check_band(band)
    target = config.resolution_targets[band]
    n = grid.count
    if target <= n:
        ids = _stride_subset(n, target)
        vals = interpolate(wm, readings)
        return LodLevel(band, "resolution", grid.positions()[ids], vals[ids], ids)
    if dense is None:
        if sensors is None:
            raise ValueError(
                f"target {target} exceeds grid size {n}; pass a DenseField or sensors"
            )
        dense = build_dense_field(grid, wm.mesh, sensors)
    nd = dense.grid.count
    if target > nd:
        raise ValueError(f"target {target} exceeds densified grid size {nd}")
    vals = interpolate(dense.wm, readings)
    ids = _stride_subset(nd, target)
    return LodLevel(band, "resolution", dense.grid.positions()[ids], vals[ids], None)


@dataclass
class DiffusionSchedule:
    """Base-grid particles split into waves by distance to the nearest
    sensor; wave 0 holds the closest particles."""

    waves: list[np.ndarray] = field(repr=False)
    wave_of: np.ndarray = field(repr=False)

    @property
    def wave_count(self) -> int:
        return len(self.waves)

    def wave(self, cursor: int) -> np.ndarray:
        if not 0 <= cursor < self.wave_count:
            raise ValueError(f"cursor {cursor} out of range [0, {self.wave_count})")
        return self.waves[cursor]


def diffusion_schedule(grid: ParticleGrid, sensors: SensorSet, waves: int,
                       wm: WeightMap | None = None) -> DiffusionSchedule:
    """Sort particles by (squared sensor distance, id) and cut the order into
    `waves` contiguous waves of near-equal size (within one)."""
    n = grid.count
    if not 1 <= waves <= n:
        raise ValueError(f"wave count must be in [1, {n}], got {waves}")
    if wm is not None:
        d2 = wm.nearest_d2
    else:
        from .segmentation import _expansion
        _, d2 = _expansion(grid, sensors)
    order = np.lexsort((np.arange(n), d2))
    base, rem = divmod(n, waves)
    out: list[np.ndarray] = []
    wave_of = np.empty(n, dtype=np.int32)
    start = 0
    for w in range(waves):
        size = base + (1 if w < rem else 0)
        ids = np.sort(order[start:start + size])
        out.append(ids)
        wave_of[ids] = w
        start += size
    return DiffusionSchedule(out, wave_of)


def next_wave(schedule: DiffusionSchedule, cursor: int) -> np.ndarray:
    """Particle ids due in this cycle."""
    return schedule.wave(cursor)
