"""Room-scale temperature field streaming.

A server models a room as a regular particle grid, interpolates sparse
sensor readings over it (Delaunay segmentation inside the sensor hull,
nearest-sensor regions outside), and streams the field to viewers over a
compact binary protocol with delta encoding and viewpoint-driven levels of
detail.
"""

from .delaunay import TetraMesh, Tetrahedron, tetrahedralize
from .errors import (
    ConfigError,
    DegenerateSensorsError,
    IngestError,
    ProtocolError,
    ProtocolViolationError,
    ThermocastError,
)
from .grid import (
    ParticleGrid,
    Room,
    Sensor,
    SensorSet,
    build_grid,
    default_layout,
    particle_count,
)
from .segmentation import WeightMap, interpolate, locate, nearest_sensor_expansion

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateSensorsError",
    "IngestError",
    "ParticleGrid",
    "ProtocolError",
    "ProtocolViolationError",
    "Room",
    "Sensor",
    "SensorSet",
    "TetraMesh",
    "Tetrahedron",
    "ThermocastError",
    "WeightMap",
    "__version__",
    "build_grid",
    "default_layout",
    "interpolate",
    "locate",
    "nearest_sensor_expansion",
    "particle_count",
    "tetrahedralize",
]
