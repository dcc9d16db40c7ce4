"""Reference client: mirrors the streamed field and audits the protocol.

The mirror applies frames exactly as a viewer would (full replaces tables,
delta updates entries in place, everything in wire float32 precision) and
treats any inconsistency as a protocol violation. The runner drives the
five-step cycle over TCP, optionally steering the server with commands, and
writes one JSON line per cycle for offline analysis.

Exit codes: 0 success, 2 connect failure, 3 protocol violation, 4 checksum
mismatch, 5 timeout.
"""

from __future__ import annotations

import json
import socket
import time
from dataclasses import dataclass, field

import numpy as np

from . import protocol as pr
from .errors import ProtocolError, ProtocolViolationError

EXIT_OK = 0
EXIT_CONNECT = 2
EXIT_PROTOCOL = 3
EXIT_CRC = 4
EXIT_TIMEOUT = 5


class CrcMismatchError(ProtocolError):
    pass


class TimeoutExpired(ProtocolError):
    pass


class MirrorState:
    """Client-side copy of the streamed field, in wire precision."""

    def __init__(self):
        self.room: tuple[float, float, float] | None = None
        self.header: pr.Header | None = None
        self.sensor_pos: dict[int, tuple[float, float, float]] = {}
        self.sensor_val: dict[int, float] = {}
        self.particle_pos: dict[int, tuple[float, float, float]] = {}
        self.particle_val: dict[int, float] = {}
        self.tick = -1
        self.band: int | None = None
        self.full_cycles = 0
        self.delta_cycles = 0

    def apply_header(self, header: pr.Header) -> None:
        if header.tick < self.tick:
            raise ProtocolViolationError(
                f"tick went backwards: {header.tick} after {self.tick}"
            )
        if self.room is not None and header.room_lwh != self.room:
            raise ProtocolViolationError(
                f"room changed from {self.room} to {header.room_lwh}"
            )
        if header.mode == pr.MODE_DELTA and self.header is None:
            raise ProtocolViolationError("delta cycle before any full cycle")
        self.room = header.room_lwh
        self.header = header

    def apply_sensors(self, payload: bytes) -> int:
        header = self._need_header()
        records = pr.parse_sensors(payload, header.mode)
        if header.mode == pr.MODE_FULL:
            self.sensor_pos = {
                int(r["id"]): (float(r["x"]), float(r["y"]), float(r["z"]))
                for r in records
            }
            self.sensor_val = {int(r["id"]): float(r["value"]) for r in records}
        else:
            for r in records:
                sid = int(r["id"])
                if sid not in self.sensor_val:
                    raise ProtocolViolationError(f"delta for unknown sensor {sid}")
                self.sensor_val[sid] = float(r["value"])
        return len(records)

    def apply_particles(self, payload: bytes) -> int:
        header = self._need_header()
        records = pr.parse_particles(payload, header.mode)
        if header.mode == pr.MODE_FULL:
            self.particle_pos = {
                int(r["id"]): (float(r["x"]), float(r["y"]), float(r["z"]))
                for r in records
            }
            self.particle_val = {int(r["id"]): float(r["value"]) for r in records}
        else:
            for r in records:
                pid = int(r["id"])
                if pid not in self.particle_val:
                    raise ProtocolViolationError(f"delta for unknown particle {pid}")
                self.particle_val[pid] = float(r["value"])
        return len(records)

    def finish_cycle(self, footer_tick: int) -> None:
        header = self._need_header()
        if footer_tick != header.tick:
            raise ProtocolViolationError(
                f"footer tick {footer_tick} does not match header tick {header.tick}"
            )
        if len(self.sensor_val) != header.sensor_count:
            raise ProtocolViolationError(
                f"mirror holds {len(self.sensor_val)} sensors, header said "
                f"{header.sensor_count}"
            )
        if len(self.particle_val) != header.particle_count:
            raise ProtocolViolationError(
                f"mirror holds {len(self.particle_val)} particles, header said "
                f"{header.particle_count}"
            )
        self.tick = header.tick
        self.band = header.band
        if header.mode == pr.MODE_FULL:
            self.full_cycles += 1
        else:
            self.delta_cycles += 1

    def _need_header(self) -> pr.Header:
        if self.header is None:
            raise ProtocolViolationError("frame before any HEADER")
        return self.header

    def particle_values(self) -> np.ndarray:
        return np.array(
            [self.particle_val[k] for k in sorted(self.particle_val)],
            dtype=np.float32,
        )


class _FrameReader:
    def __init__(self, sock: socket.socket, max_payload: int = pr.MAX_PAYLOAD):
        self.sock = sock
        self.decoder = pr.StreamDecoder(max_payload)
        self.queue: list[pr.Frame] = []

    def next_frame(self, timeout: float) -> pr.Frame:
        deadline = time.monotonic() + timeout
        while not self.queue:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutExpired(f"no frame within {timeout}s")
            self.sock.settimeout(remaining)
            try:
                data = self.sock.recv(65536)
            except socket.timeout:
                raise TimeoutExpired(f"no frame within {timeout}s") from None
            if data == b"":
                raise ProtocolViolationError("server closed the connection")
            self.queue.extend(self.decoder.feed(data))
        return self.queue.pop(0)


@dataclass
class CycleStats:
    tick: int
    mode: int
    band: int
    sensor_records: int
    particle_records: int
    header_particle_count: int
    bytes_sensors: int
    bytes_particles: int
    bytes_total: int
    mirror_particles: int
    elapsed_ms: float

    def as_dict(self) -> dict:
        return {
            "tick": self.tick,
            "mode": "full" if self.mode == pr.MODE_FULL else "delta",
            "band": self.band,
            "sensor_records": self.sensor_records,
            "particle_records": self.particle_records,
            "header_particle_count": self.header_particle_count,
            "bytes_sensors": self.bytes_sensors,
            "bytes_particles": self.bytes_particles,
            "bytes_total": self.bytes_total,
            "mirror_particles": self.mirror_particles,
            "elapsed_ms": round(self.elapsed_ms, 3),
        }


@dataclass
class StreamClient:
    """Drives cycles against a server and keeps a mirror.

    `commands` are sent one per cycle in place of the footer ack, in order;
    `script` entries (after_cycle, command) queue a command once that many
    cycles have completed. `on_cycle(stats, mirror)` runs after each cycle
    and may raise ProtocolError subclasses to abort."""

    host: str
    port: int
    cycles: int | None = None
    duration_s: float | None = None
    mode: int | None = None
    viewpoint_cm: tuple[float, float, float] | None = None
    script: list[tuple[int, pr.Command]] = field(default_factory=list)
    report_path: str | None = None
    frame_timeout_s: float = 10.0
    on_cycle: object = None

    def __post_init__(self):
        self.mirror = MirrorState()
        self.stats: list[CycleStats] = []
        self._pending: list[pr.Command] = []
        if self.viewpoint_cm is not None:
            self._pending.append(
                pr.Command(pr.CMD_SET_VIEWPOINT, viewpoint_cm=tuple(self.viewpoint_cm))
            )
        if self.mode is not None:
            self._pending.append(pr.Command(pr.CMD_SET_MODE, mode=self.mode))

    def run(self) -> int:
        try:
            sock = socket.create_connection((self.host, self.port), timeout=10.0)
        except OSError as e:
            print(f"connect failed: {e}")
            return EXIT_CONNECT
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        report = open(self.report_path, "w") if self.report_path else None
        try:
            return self._run_cycles(sock, report)
        except CrcMismatchError as e:
            print(f"checksum mismatch: {e}")
            return EXIT_CRC
        except TimeoutExpired as e:
            print(f"timeout: {e}")
            return EXIT_TIMEOUT
        except ProtocolError as e:
            print(f"protocol error: {e}")
            return EXIT_PROTOCOL
        except OSError as e:
            print(f"connection error: {e}")
            return EXIT_PROTOCOL
        finally:
            if report:
                report.close()
            sock.close()

    def _expect(self, reader: _FrameReader, frame_type: int) -> pr.Frame:
        frame = reader.next_frame(self.frame_timeout_s)
        if frame.frame_type != frame_type:
            raise ProtocolViolationError(
                f"expected frame type {frame_type}, got {frame.frame_type}"
            )
        return frame

    def _run_cycles(self, sock: socket.socket, report) -> int:
        reader = _FrameReader(sock)
        started = time.monotonic()
        done = 0
        while True:
            if self.cycles is not None and done >= self.cycles:
                return EXIT_OK
            if self.duration_s is not None and time.monotonic() - started >= self.duration_s:
                return EXIT_OK
            t0 = time.monotonic()

            frame = self._expect(reader, pr.FT_HEADER)
            header = pr.parse_header(frame.payload)
            self.mirror.apply_header(header)
            sock.sendall(pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_HEADER)))

            frame = self._expect(reader, pr.FT_SENSORS)
            sensors_payload = frame.payload
            n_sensors = self.mirror.apply_sensors(sensors_payload)
            sock.sendall(pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_SENSORS)))

            frame = self._expect(reader, pr.FT_PARTICLES)
            particles_payload = frame.payload
            n_particles = self.mirror.apply_particles(particles_payload)
            sock.sendall(pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_PARTICLES)))

            frame = self._expect(reader, pr.FT_FOOTER)
            footer_tick, crc = pr.parse_footer(frame.payload)
            expected = pr.payload_crc(sensors_payload, particles_payload)
            if crc != expected:
                raise CrcMismatchError(
                    f"tick {footer_tick}: footer crc {crc:#x}, payload crc {expected:#x}"
                )
            self.mirror.finish_cycle(footer_tick)
            done += 1

            command = self._next_command(done)
            if command is not None:
                sock.sendall(pr.encode_frame(pr.FT_COMMAND, pr.encode_command(command)))
            else:
                sock.sendall(pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_FOOTER)))

            stats = CycleStats(
                tick=header.tick,
                mode=header.mode,
                band=header.band,
                sensor_records=n_sensors,
                particle_records=n_particles,
                header_particle_count=header.particle_count,
                bytes_sensors=len(sensors_payload),
                bytes_particles=len(particles_payload),
                bytes_total=(len(sensors_payload) + len(particles_payload)
                             + len(frame.payload) + 28 + 4 * 8),
                mirror_particles=len(self.mirror.particle_val),
                elapsed_ms=(time.monotonic() - t0) * 1e3,
            )
            self.stats.append(stats)
            if report:
                report.write(json.dumps(stats.as_dict()) + "\n")
                report.flush()
            if self.on_cycle is not None:
                self.on_cycle(stats, self.mirror)

    def _next_command(self, done: int) -> pr.Command | None:
        for i, (after, command) in enumerate(self.script):
            if after <= done:
                self.script.pop(i)
                return command
        if self._pending:
            return self._pending.pop(0)
        return None


def verify_stream(host: str, port: int, cycles: int = 10, tolerance: float = 1e-3) -> int:
    """Audit a live server: cardinalities, value bounds against the sensor
    readings, strictly increasing ticks. Full mode, closest band."""

    state = {"last_tick": -1}

    def check(stats: CycleStats, mirror: MirrorState) -> None:
        if stats.tick <= state["last_tick"]:
            raise ProtocolViolationError(
                f"tick {stats.tick} did not increase past {state['last_tick']}"
            )
        state["last_tick"] = stats.tick
        values = mirror.particle_values()
        if values.size == 0:
            raise ProtocolViolationError("mirror is empty after a cycle")
        readings = np.array(list(mirror.sensor_val.values()), dtype=np.float32)
        lo, hi = readings.min() - tolerance, readings.max() + tolerance
        if values.min() < lo or values.max() > hi:
            raise ProtocolViolationError(
                f"tick {stats.tick}: particle values [{values.min()}, {values.max()}] "
                f"outside sensor range [{lo}, {hi}]"
            )

    client = StreamClient(
        host, port, cycles=cycles, mode=pr.MODE_FULL, on_cycle=check
    )
    code = client.run()
    if code == EXIT_OK:
        print(f"verified {cycles} cycles: cardinalities, bounds and tick order hold")
    return code


def export_snapshot(host: str, port: int, out_csv: str, meta_json: str | None = None) -> int:
    """Pull one full cycle and dump the mirrored field as CSV."""
    client = StreamClient(host, port, cycles=1, mode=pr.MODE_FULL)
    code = client.run()
    if code != EXIT_OK:
        return code
    mirror = client.mirror
    with open(out_csv, "w") as f:
        f.write("id,x,y,z,value\n")
        for pid in sorted(mirror.particle_val):
            x, y, z = mirror.particle_pos[pid]
            f.write(f"{pid},{x!r},{y!r},{z!r},{mirror.particle_val[pid]!r}\n")
    if meta_json:
        meta = {
            "tick": mirror.tick,
            "room_lwh": mirror.room,
            "band": mirror.band,
            "sensor_count": len(mirror.sensor_val),
            "particle_count": len(mirror.particle_val),
        }
        with open(meta_json, "w") as f:
            json.dump(meta, f, indent=2)
    print(f"exported {len(mirror.particle_val)} particles at tick {mirror.tick} to {out_csv}")
    return EXIT_OK
