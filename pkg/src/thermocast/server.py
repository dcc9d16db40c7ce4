"""Field engine and streaming server.

One tick thread owns the field: it drains queued reading batches, runs the
interpolation gather and publishes an immutable FieldSnapshot. Session
threads (one per client) only ever read snapshots, so no lock is held while
encoding. Per-snapshot LOD levels and full payloads are cached so concurrent
clients in the same band reuse identical bytes.
"""

from __future__ import annotations

import logging
import queue
import socket
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import lod as lod_mod
from . import protocol as pr
from .config import ServerConfig
from .delaunay import tetrahedralize
from .errors import DegenerateSensorsError, ProtocolError
from .grid import ParticleGrid, build_grid
from .ingestion import ReadingBatch, replay_csv, synthetic_stream
from .segmentation import interpolate, locate

log = logging.getLogger("thermocast.server")


def reading_source(config: ServerConfig, sensors):
    """The configured batch iterator: CSV replay or the synthetic feed."""
    src = config.source
    if src.kind == "csv":
        return replay_csv(src.csv, speed=src.speed, sensors=sensors)
    return synthetic_stream(
        sensors, seed=src.seed, interval_s=config.tick_seconds(), base=src.base,
        amplitude=src.amplitude, period_s=src.period_s, noise=src.noise,
    )


@dataclass
class FieldSnapshot:
    """One published tick: sensor state plus the interpolated field.

    Immutable by convention; the value arrays are marked read-only. The cache
    memoizes LOD levels and encoded full payloads per (kind, band).
    """

    tick: int
    timestamp: float
    sensor_ids: np.ndarray
    sensor_positions: np.ndarray
    sensor_values: np.ndarray
    values: np.ndarray
    # RLock: building a cached payload may itself pull the cached level.
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]


class FieldEngine:
    """Owns the grid, the frozen weight map and the latest snapshot."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.room = config.build_room()
        self.sensors = config.build_sensors()
        self.grid: ParticleGrid = build_grid(self.room, tuple(config.grid.dims))
        self.bands = config.band_config()
        self.lod_kind = config.stream.lod
        self.value_eps = config.stream.value_eps
        self.target_cm = tuple(c * 100.0 for c in self.room.center)

        t0 = time.perf_counter()
        try:
            self.mesh = tetrahedralize(self.sensors)
            mesh_note = f"{len(self.mesh.tetrahedra)} tetrahedra"
        except DegenerateSensorsError as e:
            self.mesh = None
            mesh_note = f"degenerate sensors ({e}), nearest-sensor regions only"
        t1 = time.perf_counter()
        self.wm = locate(self.grid, self.mesh, self.sensors)
        t2 = time.perf_counter()
        log.info(
            "preprocess: mesh %s in %.0fms, locate %d particles "
            "(%d inside, %d outside) in %.0fms",
            mesh_note, (t1 - t0) * 1e3, self.grid.count,
            self.wm.inside_count, self.wm.outside_count, (t2 - t1) * 1e3,
        )

        self.dense: lod_mod.DenseField | None = None
        if self.lod_kind == "resolution" and (
            max(self.bands.resolution_targets) > self.grid.count
        ):
            t3 = time.perf_counter()
            self.dense = lod_mod.build_dense_field(self.grid, self.mesh, self.sensors)
            log.info(
                "preprocess: dense field %s in %.0fms",
                self.dense.grid.dims, (time.perf_counter() - t3) * 1e3,
            )

        self.schedule: lod_mod.DiffusionSchedule | None = None
        if config.stream.diffusion_waves > 0:
            self.schedule = lod_mod.diffusion_schedule(
                self.grid, self.sensors, config.stream.diffusion_waves, wm=self.wm
            )

        order = np.argsort(self.sensors.ids(), kind="stable")
        self._sensor_values = self.sensors.values()[order].copy()
        self._id_to_dense = {int(s): i for i, s in enumerate(self.wm.sensor_ids)}
        self._sensor_positions = self.sensors.positions()[order]

        self._cond = threading.Condition()
        self._snapshot: FieldSnapshot | None = None
        self.encode_us: deque[float] = deque(maxlen=512)
        self.skipped_ticks = 0
        self._publish(0)

    # -- field state -------------------------------------------------------

    def _publish(self, tick: int) -> FieldSnapshot:
        values = interpolate(self.wm, self._sensor_values)
        values.setflags(write=False)
        sensor_values = self._sensor_values.copy()
        sensor_values.setflags(write=False)
        snap = FieldSnapshot(
            tick=tick,
            timestamp=time.time(),
            sensor_ids=self.wm.sensor_ids,
            sensor_positions=self._sensor_positions,
            sensor_values=sensor_values,
            values=values,
        )
        with self._cond:
            self._snapshot = snap
            self._cond.notify_all()
        return snap

    def apply_batch(self, readings: dict[int, float]) -> FieldSnapshot:
        """Merge readings into sensor state and publish the next tick."""
        for sid, value in readings.items():
            idx = self._id_to_dense.get(int(sid))
            if idx is None:
                log.warning("ignoring reading for unknown sensor %s", sid)
                continue
            self._sensor_values[idx] = value
        return self._publish(self.snapshot().tick + 1)

    def snapshot(self) -> FieldSnapshot:
        with self._cond:
            assert self._snapshot is not None
            return self._snapshot

    def wait_newer(self, tick: int, timeout: float) -> FieldSnapshot | None:
        """Latest snapshot newer than `tick`, or None on timeout. Slow
        readers skip intermediate ticks; they always get the newest."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._snapshot is None or self._snapshot.tick <= tick:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)
            return self._snapshot

    # -- LOD levels and payloads --------------------------------------------

    def level(self, snap: FieldSnapshot, band: int) -> lod_mod.LodLevel:
        self.bands.check_band(band)
        kind = self.lod_kind

        def build():
            if kind == "cluster":
                return lod_mod.cluster_grid(
                    self.grid, self.bands.cluster_factors[band],
                    values=snap.values, band=band,
                )
            if kind == "significant":
                return lod_mod.significant_vertices(
                    self.grid, self.bands.neighbor_depths[band],
                    values=snap.values, sensors=self.sensors, band=band,
                )
            return lod_mod.reresolve(
                self.grid, self.wm, snap.sensor_values, band, self.bands,
                dense=self.dense,
            )

        return snap.cached(("level", kind, band), build)

    def sensors_full_payload(self, snap: FieldSnapshot) -> bytes:
        return snap.cached(
            ("sensors_full",),
            lambda: pr.encode_sensors_full(
                snap.sensor_ids, snap.sensor_positions, snap.sensor_values
            ),
        )

    def particles_full_payload(self, snap: FieldSnapshot, band: int) -> bytes:
        def build():
            level = self.level(snap, band)
            return pr.encode_particles_full(
                level.wire_ids(), level.positions, level.values
            )
        return snap.cached(("particles_full", self.lod_kind, band), build)


# -- per-client session ------------------------------------------------------

class _LastSent:
    """Wire-precision mirror of what the client last confirmed."""

    def __init__(self):
        self.sensor_values: np.ndarray | None = None
        self.level_ids: np.ndarray | None = None
        self.level_values: np.ndarray | None = None
        self.cursor = 0


@dataclass
class _Cycle:
    snap: FieldSnapshot
    mode: int
    payloads: dict[int, bytes]
    sent_sensor_mask: np.ndarray | None
    sent_particle_mask: np.ndarray | None
    level_ids: np.ndarray
    level_values32: np.ndarray
    used_diffusion: bool


class SessionDriver:
    """Runs the five-step cycle for one client over a byte transport.

    The transport needs three methods: send(bytes), recv(timeout) returning
    bytes (b"" on EOF, None on timeout) and close().
    """

    IDLE_TIMEOUT_S = 30.0

    def __init__(self, engine: FieldEngine, transport, name: str = "client"):
        self.engine = engine
        self.transport = transport
        self.name = name
        self.state = pr.SessionState(
            bands=engine.bands,
            target_cm=engine.target_cm,
            mode=engine.config.initial_mode(),
        )
        self.decoder = pr.StreamDecoder(engine.config.server.max_payload)
        self.last = _LastSent()
        self.last_tick = -1
        self.cycles = 0
        self.violations = 0

    def _build_cycle(self, snap: FieldSnapshot) -> _Cycle:
        engine = self.engine
        state = self.state
        t0 = time.perf_counter()
        level = engine.level(snap, state.band)
        wire_ids = level.wire_ids()

        full = (
            state.force_full
            or state.mode == pr.MODE_FULL
            or self.last.level_ids is None
            or not np.array_equal(self.last.level_ids, wire_ids)
        )
        # consume the flag now: a command arriving with this cycle's footer
        # may set it again for the next cycle, and an abandoned cycle
        # re-forces via state.reset()
        state.force_full = False
        use_diffusion = (
            not full
            and engine.schedule is not None
            and level.source_ids is not None
        )
        mode = pr.MODE_FULL if full else pr.MODE_DELTA
        level_values32 = level.values.astype(np.float32)

        if full:
            sensors_payload = engine.sensors_full_payload(snap)
            particles_payload = engine.particles_full_payload(snap, state.band)
            sensor_mask = None
            particle_mask = None
        else:
            sensor_mask = pr.delta_select(
                snap.sensor_values, self.last.sensor_values, engine.value_eps
            )
            sensors_payload = pr.encode_sensors_delta(
                snap.sensor_ids[sensor_mask], snap.sensor_values[sensor_mask]
            )
            particle_mask = pr.delta_select(
                level.values, self.last.level_values, engine.value_eps
            )
            if use_diffusion:
                wave = engine.schedule.wave_of[level.source_ids]
                particle_mask &= wave == (self.last.cursor % engine.schedule.wave_count)
            particles_payload = pr.encode_particles_delta(
                wire_ids[particle_mask], level.values[particle_mask]
            )

        header = pr.encode_header(
            mode, snap.tick, snap.sensor_ids.size, level.count,
            (engine.room.length, engine.room.width, engine.room.height),
            state.band,
        )
        footer = pr.encode_footer(snap.tick, pr.payload_crc(sensors_payload, particles_payload))
        engine.encode_us.append((time.perf_counter() - t0) * 1e6)
        return _Cycle(
            snap=snap,
            mode=mode,
            payloads={
                pr.FT_HEADER: header,
                pr.FT_SENSORS: sensors_payload,
                pr.FT_PARTICLES: particles_payload,
                pr.FT_FOOTER: footer,
            },
            sent_sensor_mask=sensor_mask,
            sent_particle_mask=particle_mask,
            level_ids=wire_ids,
            level_values32=level_values32,
            used_diffusion=use_diffusion,
        )

    def _commit(self, cycle: _Cycle) -> None:
        snap = cycle.snap
        if cycle.mode == pr.MODE_FULL:
            self.last.sensor_values = snap.sensor_values.astype(np.float32)
            self.last.level_ids = cycle.level_ids
            self.last.level_values = cycle.level_values32.copy()
            self.last.cursor = 0
        else:
            mask = cycle.sent_sensor_mask
            self.last.sensor_values[mask] = snap.sensor_values.astype(np.float32)[mask]
            pmask = cycle.sent_particle_mask
            self.last.level_values[pmask] = cycle.level_values32[pmask]
            if cycle.used_diffusion:
                self.last.cursor += 1
        self.last_tick = snap.tick
        self.cycles += 1

    def run(self) -> None:
        state = self.state
        try:
            while True:
                snap = self.engine.wait_newer(self.last_tick, timeout=0.5)
                if snap is None:
                    continue
                cycle = self._build_cycle(snap)
                actions = pr.session_step(state, ("tick",))
                committed = self._drive(cycle, actions)
                if committed is None:
                    return
        except ProtocolError as e:
            log.warning("%s: closing after protocol error: %s", self.name, e)
        except (ConnectionError, OSError) as e:
            log.info("%s: connection lost: %s", self.name, e)
        finally:
            self.transport.close()

    def _drive(self, cycle: _Cycle, actions: list) -> bool | None:
        """Play one cycle. Returns True when done, None when the client went
        away. Violations abandon the cycle (no commit) and return True."""
        state = self.state
        last_byte = time.monotonic()
        while True:
            while actions:
                action = actions.pop(0)
                if action[0] == "send":
                    ftype = action[1]
                    self.transport.send(pr.encode_frame(ftype, cycle.payloads[ftype]))
                elif action[0] == "cycle_done":
                    self._commit(cycle)
                    return True
                elif action[0] == "violation":
                    self.violations += 1
                    log.warning("%s: protocol violation: %s", self.name, action[1])
                    return True
            data = self.transport.recv(timeout=0.5)
            if data == b"":
                return None
            if data is None:
                if time.monotonic() - last_byte > self.IDLE_TIMEOUT_S:
                    log.warning("%s: idle for %.0fs, closing",
                                self.name, self.IDLE_TIMEOUT_S)
                    return None
                continue
            last_byte = time.monotonic()
            for frame in self.decoder.feed(data):
                actions += pr.session_step(state, ("frame", frame))


# -- transports ---------------------------------------------------------------

class TcpTransport:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, timeout: float):
        self.sock.settimeout(timeout)
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            return None

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


# -- server orchestration -----------------------------------------------------

class StreamServer:
    """Tick thread + reading source + TCP listener (+ optional web front)."""

    def __init__(self, config: ServerConfig, max_ticks: int | None = None):
        self.config = config
        self.engine = FieldEngine(config)
        self.stop_event = threading.Event()
        self.max_ticks = max_ticks
        self._batches: queue.Queue[ReadingBatch] = queue.Queue(maxsize=1024)
        self._sessions: set[SessionDriver] = set()
        self._sessions_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._tcp: socketserver.ThreadingTCPServer | None = None
        self._web = None

    # -- source -------------------------------------------------------------

    def _source_loop(self) -> None:
        try:
            for batch in reading_source(self.config, self.engine.sensors):
                if self.stop_event.is_set():
                    return
                while not self.stop_event.is_set():
                    try:
                        self._batches.put(batch, timeout=0.2)
                        break
                    except queue.Full:
                        continue
        except Exception:
            log.exception("reading source failed")

    # -- tick loop ------------------------------------------------------------

    def _tick_loop(self) -> None:
        interval = self.config.tick_seconds()
        log_every = max(1, self.config.server.log_every)
        next_tick = time.monotonic() + interval
        while not self.stop_event.is_set():
            delay = next_tick - time.monotonic()
            if delay > 0:
                if self.stop_event.wait(delay):
                    return
            next_tick += interval
            now = time.monotonic()
            if next_tick < now:
                missed = int((now - next_tick) / interval) + 1
                self.engine.skipped_ticks += missed
                next_tick += missed * interval

            merged: dict[int, float] = {}
            while True:
                try:
                    merged.update(self._batches.get_nowait().readings)
                except queue.Empty:
                    break
            snap = self.engine.apply_batch(merged)
            if snap.tick % log_every == 0:
                self._log_status(snap)
            if self.max_ticks is not None and snap.tick >= self.max_ticks:
                self.stop_event.set()
                return

    def _log_status(self, snap: FieldSnapshot) -> None:
        with self._sessions_lock:
            bands = [s.state.band for s in self._sessions]
        counts = {b: bands.count(b) for b in sorted(set(bands))}
        band_counts = ",".join(f"{b}:{n}" for b, n in counts.items()) or "-"
        enc = self.engine.encode_us
        encode_us = int(sum(enc) / len(enc)) if enc else 0
        log.info(
            "tick=%d clients=%d band_counts=%s encode_us=%d",
            snap.tick, len(bands), band_counts, encode_us,
        )

    # -- client plumbing -------------------------------------------------------

    def serve_transport(self, transport, name: str) -> None:
        driver = SessionDriver(self.engine, transport, name=name)
        with self._sessions_lock:
            self._sessions.add(driver)
        try:
            driver.run()
        finally:
            with self._sessions_lock:
                self._sessions.discard(driver)

    def _make_tcp(self):
        server = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                name = f"tcp:{self.client_address[0]}:{self.client_address[1]}"
                server.serve_transport(TcpTransport(self.request), name)

        class Tcp(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        return Tcp((self.config.server.host, self.config.server.port), Handler)

    # -- lifecycle ---------------------------------------------------------------

    def start(self) -> None:
        self._tcp = self._make_tcp()
        self._threads = [
            threading.Thread(target=self._source_loop, name="source", daemon=True),
            threading.Thread(target=self._tick_loop, name="tick", daemon=True),
            threading.Thread(target=self._tcp.serve_forever, name="tcp",
                             kwargs={"poll_interval": 0.1}, daemon=True),
        ]
        if self.config.server.web:
            from .web import start_web
            self._web = start_web(self)
        for t in self._threads:
            t.start()
        log.info(
            "serving tcp on %s:%d (%s LOD, %s mode, %.3g Hz)",
            self.config.server.host, self.config.server.port,
            self.config.stream.lod, self.config.stream.mode,
            self.config.stream.tick_hz,
        )

    @property
    def tcp_port(self) -> int:
        assert self._tcp is not None
        return self._tcp.server_address[1]

    def stop(self) -> None:
        self.stop_event.set()
        if self._tcp is not None:
            self._tcp.shutdown()
            self._tcp.server_close()
        if self._web is not None:
            self._web.stop()
        for t in self._threads:
            t.join(timeout=5)

    def run_forever(self) -> None:
        self.start()
        try:
            while not self.stop_event.wait(0.5):
                pass
        except KeyboardInterrupt:
            log.info("interrupted, shutting down")
        finally:
            self.stop()
