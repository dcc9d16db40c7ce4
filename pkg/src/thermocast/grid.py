"""Room box, regular particle lattice, and sensor layout.

The lattice spans the full box: axis spacing is length/(n-1) so index 0 sits
on one wall and index n-1 on the opposite wall. Particle index p maps to
lattice coordinates (i, j, k) row-major with k outermost:

    p = (k * ny + j) * nx + i

so i varies fastest. Values live in a flat float64 array indexed by p; the
topology (dims, positions) is immutable after construction.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_ROOM_LWH = (4.0, 3.0, 2.5)
DEFAULT_GRID_DIMS = (40, 30, 25)
DEFAULT_LAYERS = (0.0, 1.0, 2.0)
DEFAULT_SENSOR_COUNT = 35
DEFAULT_INITIAL_TEMPERATURE = 20.0


@dataclass(frozen=True)
class Room:
    """Axis-aligned box, dimensions in meters."""

    length: float
    width: float
    height: float

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError(f"room dimensions must be positive, got {self}")

    @property
    def diagonal(self) -> float:
        return math.sqrt(self.length**2 + self.width**2 + self.height**2)

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.length / 2.0, self.width / 2.0, self.height / 2.0)


@dataclass(frozen=True)
class Sensor:
    """One temperature probe sitting on a horizontal layer."""

    id: int
    x: float
    y: float
    layer: float
    value: float = DEFAULT_INITIAL_TEMPERATURE

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.layer)


@dataclass
class SensorSet:
    """Ordered collection of sensors plus the configured layer heights."""

    sensors: list[Sensor]
    layers: tuple[float, ...] = DEFAULT_LAYERS

    def __post_init__(self):
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids must be unique")
        seen = set()
        for s in self.sensors:
            if s.position in seen:
                raise ValueError(f"duplicate sensor position {s.position}")
            seen.add(s.position)
        layerset = set(self.layers)
        for s in self.sensors:
            if s.layer not in layerset:
                raise ValueError(
                    f"sensor {s.id} layer {s.layer} not in configured layers {self.layers}"
                )

    def __len__(self) -> int:
        return len(self.sensors)

    @property
    def count(self) -> int:
        return len(self.sensors)

    def ids(self) -> np.ndarray:
        return np.array([s.id for s in self.sensors], dtype=np.int64)

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sensors], dtype=np.float64)

    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.sensors], dtype=np.float64)

    def id_to_index(self) -> dict[int, int]:
        return {s.id: i for i, s in enumerate(self.sensors)}

    def validate_for_room(self, room: Room) -> None:
        for s in self.sensors:
            if not (0.0 <= s.x <= room.length and 0.0 <= s.y <= room.width):
                raise ValueError(f"sensor {s.id} at ({s.x}, {s.y}) outside room floor plan")
            if not 0.0 <= s.layer <= room.height:
                raise ValueError(f"sensor {s.id} layer {s.layer} above room height")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "x", "y", "layer"])
            for s in self.sensors:
                w.writerow([s.id, repr(s.x), repr(s.y), repr(s.layer)])

    @classmethod
    def from_csv(cls, path: str | Path, layers: tuple[float, ...] | None = None) -> "SensorSet":
        sensors = []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            required = {"id", "x", "y", "layer"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"{path}: expected header id,x,y,layer")
            for lineno, row in enumerate(reader, start=2):
                try:
                    sensors.append(
                        Sensor(
                            id=int(row["id"]),
                            x=float(row["x"]),
                            y=float(row["y"]),
                            layer=float(row["layer"]),
                        )
                    )
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: bad sensor row at line {lineno}: {exc}") from exc
        if not sensors:
            raise ValueError(f"{path}: no sensors")
        if layers is None:
            layers = tuple(sorted({s.layer for s in sensors}))
        return cls(sensors=sensors, layers=layers)


def default_layout(
    count: int = DEFAULT_SENSOR_COUNT,
    layers: tuple[float, ...] = DEFAULT_LAYERS,
    room: Room | None = None,
    seed: int = 7,
) -> SensorSet:
    """Deterministic sensor placement: sensors split evenly across layers,
    each layer covered by a jittered grid so positions are spread out but
    never axis-degenerate."""
    room = room or Room(*DEFAULT_ROOM_LWH)
    rng = random.Random(seed)
    per_layer = [count // len(layers)] * len(layers)
    for i in range(count % len(layers)):
        per_layer[i] += 1
    sensors = []
    sid = 0
    for layer, n in zip(layers, per_layer):
        cols = max(1, math.ceil(math.sqrt(n)))
        rows = max(1, math.ceil(n / cols))
        placed = 0
        for r in range(rows):
            for c in range(cols):
                if placed >= n:
                    break
                cx = (c + 0.5) / cols * room.length
                cy = (r + 0.5) / rows * room.width
                jx = (rng.random() - 0.5) * room.length / (2 * cols)
                jy = (rng.random() - 0.5) * room.width / (2 * rows)
                sensors.append(
                    Sensor(
                        id=sid,
                        x=round(min(room.length, max(0.0, cx + jx)), 4),
                        y=round(min(room.width, max(0.0, cy + jy)), 4),
                        layer=layer,
                    )
                )
                sid += 1
                placed += 1
    layout = SensorSet(sensors=sensors, layers=layers)
    # x/y are clamped above; layers come straight from the caller
    layout.validate_for_room(room)
    return layout


def particle_count(room: Room, delta: float) -> int:
    """Sizing helper: floor(((l+1) * (h+1) * (w+1)) / delta^3).

    This is a standalone estimate of how many particles a spacing buys; the
    canonical grid is built from explicit integer dims instead (the two
    disagree for the default room, see build_grid).
    """
    if delta <= 0:
        raise ValueError(f"spacing must be positive, got {delta}")
    return int(
        ((room.length + 1.0) * (room.height + 1.0) * (room.width + 1.0)) / delta**3
    )


class ParticleGrid:
    """Regular lattice of particles filling a room, each carrying one scalar."""

    def __init__(self, room: Room, dims: tuple[int, int, int],
                 initial_value: float = DEFAULT_INITIAL_TEMPERATURE):
        nx, ny, nz = dims
        if nx < 2 or ny < 2 or nz < 2:
            raise ValueError(f"grid dims must be >= 2 on every axis, got {dims}")
        self.room = room
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.spacing = (
            room.length / (self.nx - 1),
            room.width / (self.ny - 1),
            room.height / (self.nz - 1),
        )
        self.values = np.full(self.count, float(initial_value), dtype=np.float64)
        self._positions: np.ndarray | None = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def count(self) -> int:
        return self.nx * self.ny * self.nz

    def index(self, i: int, j: int, k: int) -> int:
        return (k * self.ny + j) * self.nx + i

    def coords(self, p: int) -> tuple[int, int, int]:
        self._check_index(p)
        i = p % self.nx
        j = (p // self.nx) % self.ny
        k = p // (self.nx * self.ny)
        return (i, j, k)

    def position(self, p: int) -> tuple[float, float, float]:
        i, j, k = self.coords(p)
        dx, dy, dz = self.spacing
        return (i * dx, j * dy, k * dz)

    def positions(self) -> np.ndarray:
        """All particle positions, shape (N, 3), cached."""
        if self._positions is None:
            dx, dy, dz = self.spacing
            i = np.arange(self.nx, dtype=np.float64) * dx
            j = np.arange(self.ny, dtype=np.float64) * dy
            k = np.arange(self.nz, dtype=np.float64) * dz
            kk, jj, ii = np.meshgrid(k, j, i, indexing="ij")
            pos = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
            pos.setflags(write=False)
            self._positions = pos
        return self._positions

    def neighbors(self, p: int, depth: int = 1) -> set[int]:
        """Particles within Chebyshev distance `depth` in lattice coordinates,
        excluding p itself, clipped at the boundary."""
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        i, j, k = self.coords(p)
        out = set()
        for kk in range(max(0, k - depth), min(self.nz, k + depth + 1)):
            for jj in range(max(0, j - depth), min(self.ny, j + depth + 1)):
                for ii in range(max(0, i - depth), min(self.nx, i + depth + 1)):
                    out.add(self.index(ii, jj, kk))
        out.discard(p)
        return out

    def _check_index(self, p: int) -> None:
        if not 0 <= p < self.count:
            raise ValueError(f"particle index {p} out of range [0, {self.count})")

    def __repr__(self) -> str:
        return f"ParticleGrid(dims={self.dims}, room={self.room})"


def build_grid(room: Room, dims: tuple[int, int, int],
               initial_value: float = DEFAULT_INITIAL_TEMPERATURE) -> ParticleGrid:
    """Build the regular lattice; all values start at the neutral temperature."""
    return ParticleGrid(room, dims, initial_value)
