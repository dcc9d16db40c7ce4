"""Server configuration: YAML file over defaults, strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .grid import (
    DEFAULT_GRID_DIMS,
    DEFAULT_LAYERS,
    DEFAULT_ROOM_LWH,
    DEFAULT_SENSOR_COUNT,
    Room,
    SensorSet,
    default_layout,
)
from .lod import (
    DEFAULT_BAND_THRESHOLDS_CM,
    DEFAULT_CLUSTER_FACTORS,
    DEFAULT_NEIGHBOR_DEPTHS,
    DEFAULT_RESOLUTION_TARGETS,
    LOD_KINDS,
    BandConfig,
)
from .protocol import MAX_PAYLOAD, MODE_DELTA, MODE_FULL


@dataclass
class RoomSection:
    length: float = DEFAULT_ROOM_LWH[0]
    width: float = DEFAULT_ROOM_LWH[1]
    height: float = DEFAULT_ROOM_LWH[2]


@dataclass
class GridSection:
    dims: tuple[int, int, int] = DEFAULT_GRID_DIMS


@dataclass
class SensorsSection:
    layout: str = "default"            # "default" (jittered layout) or "csv"
    count: int = DEFAULT_SENSOR_COUNT
    seed: int = 7
    csv: str | None = None
    layers: tuple[float, ...] = DEFAULT_LAYERS


@dataclass
class StreamSection:
    tick_hz: float = 24.0
    mode: str = "full"                 # initial session mode: "full" or "delta"
    lod: str = "resolution"            # "cluster", "significant" or "resolution"
    diffusion_waves: int = 0           # 0 disables diffusion staging
    value_eps: float = 0.0             # delta threshold in wire units


@dataclass
class BandsSection:
    thresholds_cm: tuple[float, ...] = DEFAULT_BAND_THRESHOLDS_CM
    cluster_factors: tuple[int, ...] = DEFAULT_CLUSTER_FACTORS
    neighbor_depths: tuple[int, ...] = DEFAULT_NEIGHBOR_DEPTHS
    resolution_targets: tuple[int, ...] = DEFAULT_RESOLUTION_TARGETS


@dataclass
class SourceSection:
    kind: str = "synthetic"            # "synthetic" or "csv"
    seed: int = 0
    csv: str | None = None
    speed: float = 1.0
    base: float = 22.0
    amplitude: float = 4.0
    period_s: float = 60.0
    noise: float = 0.2


@dataclass
class ServerSection:
    host: str = "127.0.0.1"
    port: int = 4040
    web: bool = False
    web_port: int = 8080
    static_dir: str | None = None
    log_every: int = 24
    max_payload: int = MAX_PAYLOAD


_SECTIONS = {
    "room": RoomSection,
    "grid": GridSection,
    "sensors": SensorsSection,
    "stream": StreamSection,
    "bands": BandsSection,
    "source": SourceSection,
    "server": ServerSection,
}


@dataclass
class ServerConfig:
    room: RoomSection = field(default_factory=RoomSection)
    grid: GridSection = field(default_factory=GridSection)
    sensors: SensorsSection = field(default_factory=SensorsSection)
    stream: StreamSection = field(default_factory=StreamSection)
    bands: BandsSection = field(default_factory=BandsSection)
    source: SourceSection = field(default_factory=SourceSection)
    server: ServerSection = field(default_factory=ServerSection)

    def validate(self) -> "ServerConfig":
        if self.stream.tick_hz <= 0:
            raise ConfigError(f"stream.tick_hz must be positive, got {self.stream.tick_hz}")
        if self.stream.mode not in ("full", "delta"):
            raise ConfigError(f"stream.mode must be full or delta, got {self.stream.mode!r}")
        if self.stream.lod not in LOD_KINDS:
            raise ConfigError(f"stream.lod must be one of {LOD_KINDS}, got {self.stream.lod!r}")
        if self.stream.diffusion_waves < 0:
            raise ConfigError("stream.diffusion_waves must be >= 0")
        if self.stream.value_eps < 0:
            raise ConfigError("stream.value_eps must be >= 0")
        if self.sensors.layout not in ("default", "csv"):
            raise ConfigError(
                f"sensors.layout must be default or csv, got {self.sensors.layout!r}"
            )
        if self.sensors.layout == "csv" and not self.sensors.csv:
            raise ConfigError("sensors.layout is csv but sensors.csv is not set")
        if self.source.kind not in ("synthetic", "csv"):
            raise ConfigError(
                f"source.kind must be synthetic or csv, got {self.source.kind!r}"
            )
        if self.source.kind == "csv" and not self.source.csv:
            raise ConfigError("source.kind is csv but source.csv is not set")
        try:
            self.band_config()
        except ValueError as e:
            raise ConfigError(f"bands: {e}") from None
        try:
            self.build_room()
        except ValueError as e:
            raise ConfigError(f"room: {e}") from None
        return self

    # -- constructors for runtime objects ---------------------------------

    def build_room(self) -> Room:
        return Room(self.room.length, self.room.width, self.room.height)

    def build_sensors(self) -> SensorSet:
        if self.sensors.layout == "csv":
            sensors = SensorSet.from_csv(self.sensors.csv, layers=tuple(self.sensors.layers))
        else:
            sensors = default_layout(
                count=self.sensors.count,
                layers=tuple(self.sensors.layers),
                room=self.build_room(),
                seed=self.sensors.seed,
            )
        sensors.validate_for_room(self.build_room())
        return sensors

    def band_config(self) -> BandConfig:
        return BandConfig(
            thresholds_cm=tuple(float(t) for t in self.bands.thresholds_cm),
            cluster_factors=tuple(int(f) for f in self.bands.cluster_factors),
            neighbor_depths=tuple(int(d) for d in self.bands.neighbor_depths),
            resolution_targets=tuple(int(t) for t in self.bands.resolution_targets),
        )

    def initial_mode(self) -> int:
        return MODE_FULL if self.stream.mode == "full" else MODE_DELTA

    def tick_seconds(self) -> float:
        return 1.0 / self.stream.tick_hz


def _coerce(section, data: dict, name: str):
    valid = {f.name for f in fields(section)}
    for key in data:
        if key not in valid:
            raise ConfigError(f"unknown key {name}.{key}")
    for key, value in data.items():
        current = getattr(section, key)
        if isinstance(current, tuple) or isinstance(value, list):
            value = tuple(value) if isinstance(value, list) else value
        setattr(section, key, value)
    return section


def load_config(path: str | Path | None = None) -> ServerConfig:
    """Defaults, with the YAML file's sections layered on top."""
    config = ServerConfig()
    if path is None:
        return config.validate()
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {key!r} must be a mapping")
        _coerce(getattr(config, key), value, key)
    return config.validate()
