"""Binary wire protocol and the five-step session cycle.

Every frame is an 8-byte header followed by a payload:

    offset  size  field
    0       2     magic 0x44 0x43 ("DC")
    2       1     protocol version (1)
    3       1     frame type
    4       4     payload length, u32 little-endian

All multi-byte integers are little-endian; all floats are IEEE-754 binary32.
Positions and room dimensions travel in meters, viewpoints in centimeters.

A server cycle is HEADER, SENSORS, PARTICLES, FOOTER, each acknowledged by
the client; the final acknowledgement may instead be a COMMAND, which both
acks the footer and carries the client's request. Frames arriving out of
phase are protocol violations and reset the session to a full-mode cycle.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    PayloadTooLargeError,
    ProtocolViolationError,
    ShortPayloadError,
    TrailingBytesError,
    UnknownCommandError,
    UnknownFrameTypeError,
    UnknownVersionError,
)
from .lod import BandConfig, select_band

MAGIC = b"DC"
VERSION = 1
MAX_PAYLOAD = 16 * 1024 * 1024

FT_HEADER = 1
FT_SENSORS = 2
FT_PARTICLES = 3
FT_FOOTER = 4
FT_ACK = 5
FT_COMMAND = 6
FRAME_TYPES = (FT_HEADER, FT_SENSORS, FT_PARTICLES, FT_FOOTER, FT_ACK, FT_COMMAND)

MODE_FULL = 0
MODE_DELTA = 1

CMD_SET_VIEWPOINT = 1
CMD_SET_MODE = 2
CMD_REQUEST_FULL = 3

ACK_OK = 0
ACK_ERROR = 1

_FRAME_HEADER = struct.Struct("<2sBBI")
_HEADER_PAYLOAD = struct.Struct("<BQHI3fB")
_FOOTER_PAYLOAD = struct.Struct("<QI")
_ACK_PAYLOAD = struct.Struct("<BB")
_CMD_VIEWPOINT = struct.Struct("<B3f")
_CMD_MODE = struct.Struct("<BB")

SENSOR_FULL_DTYPE = np.dtype(
    [("id", "<u2"), ("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("value", "<f4")]
)
SENSOR_DELTA_DTYPE = np.dtype([("id", "<u2"), ("value", "<f4")])
PARTICLE_FULL_DTYPE = np.dtype(
    [("id", "<u4"), ("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("value", "<f4")]
)
PARTICLE_DELTA_DTYPE = np.dtype([("id", "<u4"), ("value", "<f4")])


@dataclass(frozen=True)
class Frame:
    frame_type: int
    payload: bytes


def encode_frame(frame_type: int, payload: bytes, max_payload: int = MAX_PAYLOAD) -> bytes:
    if frame_type not in FRAME_TYPES:
        raise UnknownFrameTypeError(f"unknown frame type {frame_type}")
    if len(payload) > max_payload:
        raise PayloadTooLargeError(
            f"payload of {len(payload)} bytes exceeds cap of {max_payload}"
        )
    return _FRAME_HEADER.pack(MAGIC, VERSION, frame_type, len(payload)) + payload


def try_decode_frame(buf, max_payload: int = MAX_PAYLOAD):
    """Decode one frame from the head of buf.

    Returns (Frame, bytes_consumed), or None when more bytes are needed.
    Malformed headers raise; the decoder never reads past the frame boundary.
    """
    if len(buf) < _FRAME_HEADER.size:
        return None
    magic, version, ftype, plen = _FRAME_HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {bytes(magic).hex()}, expected {MAGIC.hex()}")
    if version != VERSION:
        raise UnknownVersionError(f"unsupported protocol version {version}")
    if ftype not in FRAME_TYPES:
        raise UnknownFrameTypeError(f"unknown frame type {ftype}")
    if plen > max_payload:
        raise PayloadTooLargeError(f"declared payload {plen} exceeds cap {max_payload}")
    end = _FRAME_HEADER.size + plen
    if len(buf) < end:
        return None
    return Frame(ftype, bytes(buf[_FRAME_HEADER.size:end])), end


class StreamDecoder:
    """Incremental frame decoder over a byte stream."""

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self._buf = bytearray()
        self._max = max_payload

    def feed(self, data: bytes) -> list[Frame]:
        """Buffer data and return every complete frame now available."""
        self._buf += data
        frames = []
        while True:
            got = try_decode_frame(self._buf, self._max)
            if got is None:
                return frames
            frame, used = got
            del self._buf[:used]
            frames.append(frame)

    @property
    def pending(self) -> int:
        return len(self._buf)


# -- payload codecs ---------------------------------------------------------

@dataclass(frozen=True)
class Header:
    mode: int
    tick: int
    sensor_count: int
    particle_count: int
    room_lwh: tuple[float, float, float]
    band: int


def encode_header(mode: int, tick: int, sensor_count: int, particle_count: int,
                  room_lwh, band: int) -> bytes:
    if mode not in (MODE_FULL, MODE_DELTA):
        raise ValueError(f"mode must be 0 or 1, got {mode}")
    if not 0 <= tick < 1 << 64:
        raise ValueError(f"tick {tick} out of u64 range")
    if not 0 <= sensor_count < 1 << 16:
        raise ValueError(f"sensor count {sensor_count} out of u16 range")
    if not 0 <= particle_count < 1 << 32:
        raise ValueError(f"particle count {particle_count} out of u32 range")
    if not 0 <= band < 1 << 8:
        raise ValueError(f"band {band} out of u8 range")
    l, w, h = (float(v) for v in room_lwh)
    return _HEADER_PAYLOAD.pack(mode, tick, sensor_count, particle_count, l, w, h, band)


def parse_header(payload: bytes) -> Header:
    _check_size(payload, _HEADER_PAYLOAD.size, "HEADER")
    mode, tick, sc, pc, l, w, h, band = _HEADER_PAYLOAD.unpack(payload)
    if mode not in (MODE_FULL, MODE_DELTA):
        raise ProtocolViolationError(f"header mode {mode} is not full or delta")
    return Header(mode, tick, sc, pc, (l, w, h), band)


def encode_sensors_full(ids, positions, values) -> bytes:
    ids = _check_ids(ids, 1 << 16, "sensor")
    pos = np.asarray(positions, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if pos.shape != (ids.size, 3) or vals.shape != (ids.size,):
        raise ValueError("ids, positions and values disagree on record count")
    rec = np.empty(ids.size, dtype=SENSOR_FULL_DTYPE)
    rec["id"] = ids
    rec["x"] = pos[:, 0]
    rec["y"] = pos[:, 1]
    rec["z"] = pos[:, 2]
    rec["value"] = vals
    return rec.tobytes()


def encode_sensors_delta(ids, values) -> bytes:
    ids = _check_ids(ids, 1 << 16, "sensor")
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (ids.size,):
        raise ValueError("ids and values disagree on record count")
    rec = np.empty(ids.size, dtype=SENSOR_DELTA_DTYPE)
    rec["id"] = ids
    rec["value"] = vals
    return rec.tobytes()


def parse_sensors(payload: bytes, mode: int) -> np.ndarray:
    dtype = SENSOR_FULL_DTYPE if mode == MODE_FULL else SENSOR_DELTA_DTYPE
    return _parse_records(payload, dtype, "SENSORS")


def encode_particles_full(ids, positions, values) -> bytes:
    ids = _check_ids(ids, 1 << 32, "particle")
    pos = np.asarray(positions, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if pos.shape != (ids.size, 3) or vals.shape != (ids.size,):
        raise ValueError("ids, positions and values disagree on record count")
    rec = np.empty(ids.size, dtype=PARTICLE_FULL_DTYPE)
    rec["id"] = ids
    rec["x"] = pos[:, 0]
    rec["y"] = pos[:, 1]
    rec["z"] = pos[:, 2]
    rec["value"] = vals
    return rec.tobytes()


def encode_particles_delta(ids, values) -> bytes:
    ids = _check_ids(ids, 1 << 32, "particle")
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (ids.size,):
        raise ValueError("ids and values disagree on record count")
    rec = np.empty(ids.size, dtype=PARTICLE_DELTA_DTYPE)
    rec["id"] = ids
    rec["value"] = vals
    return rec.tobytes()


def parse_particles(payload: bytes, mode: int) -> np.ndarray:
    dtype = PARTICLE_FULL_DTYPE if mode == MODE_FULL else PARTICLE_DELTA_DTYPE
    return _parse_records(payload, dtype, "PARTICLES")


def payload_crc(sensors_payload: bytes, particles_payload: bytes) -> int:
    return zlib.crc32(particles_payload, zlib.crc32(sensors_payload))


def encode_footer(tick: int, crc: int) -> bytes:
    if not 0 <= tick < 1 << 64:
        raise ValueError(f"tick {tick} out of u64 range")
    return _FOOTER_PAYLOAD.pack(tick, crc & 0xFFFFFFFF)


def parse_footer(payload: bytes) -> tuple[int, int]:
    _check_size(payload, _FOOTER_PAYLOAD.size, "FOOTER")
    return _FOOTER_PAYLOAD.unpack(payload)


def encode_ack(acked_type: int, status: int = ACK_OK) -> bytes:
    if acked_type not in FRAME_TYPES:
        raise UnknownFrameTypeError(f"cannot ack unknown frame type {acked_type}")
    return _ACK_PAYLOAD.pack(acked_type, status)


def parse_ack(payload: bytes) -> tuple[int, int]:
    _check_size(payload, _ACK_PAYLOAD.size, "ACK")
    return _ACK_PAYLOAD.unpack(payload)


@dataclass(frozen=True)
class Command:
    kind: int
    viewpoint_cm: tuple[float, float, float] | None = None
    mode: int | None = None


def encode_command(command: Command) -> bytes:
    if command.kind == CMD_SET_VIEWPOINT:
        x, y, z = command.viewpoint_cm
        return _CMD_VIEWPOINT.pack(CMD_SET_VIEWPOINT, x, y, z)
    if command.kind == CMD_SET_MODE:
        if command.mode not in (MODE_FULL, MODE_DELTA):
            raise ValueError(f"mode must be 0 or 1, got {command.mode}")
        return _CMD_MODE.pack(CMD_SET_MODE, command.mode)
    if command.kind == CMD_REQUEST_FULL:
        return bytes([CMD_REQUEST_FULL])
    raise UnknownCommandError(f"unknown command kind {command.kind}")


def parse_command(payload: bytes) -> Command:
    if len(payload) < 1:
        raise ShortPayloadError("COMMAND payload is empty")
    kind = payload[0]
    if kind == CMD_SET_VIEWPOINT:
        _check_size(payload, _CMD_VIEWPOINT.size, "SET_VIEWPOINT")
        _, x, y, z = _CMD_VIEWPOINT.unpack(payload)
        return Command(kind, viewpoint_cm=(x, y, z))
    if kind == CMD_SET_MODE:
        _check_size(payload, _CMD_MODE.size, "SET_MODE")
        _, mode = _CMD_MODE.unpack(payload)
        if mode not in (MODE_FULL, MODE_DELTA):
            raise ProtocolViolationError(f"SET_MODE with invalid mode {mode}")
        return Command(kind, mode=mode)
    if kind == CMD_REQUEST_FULL:
        _check_size(payload, 1, "REQUEST_FULL")
        return Command(kind)
    raise UnknownCommandError(f"unknown command kind {kind}")


def _check_size(payload: bytes, expected: int, label: str) -> None:
    if len(payload) < expected:
        raise ShortPayloadError(f"{label} payload is {len(payload)} bytes, need {expected}")
    if len(payload) > expected:
        raise TrailingBytesError(
            f"{label} payload has {len(payload) - expected} trailing bytes"
        )


def _parse_records(payload: bytes, dtype: np.dtype, label: str) -> np.ndarray:
    if len(payload) % dtype.itemsize:
        raise TrailingBytesError(
            f"{label} payload of {len(payload)} bytes is not a multiple of "
            f"{dtype.itemsize}-byte records"
        )
    return np.frombuffer(payload, dtype=dtype)


def _check_ids(ids, bound: int, label: str) -> np.ndarray:
    arr = np.asarray(ids)
    if arr.size and (arr.min() < 0 or arr.max() >= bound):
        raise ValueError(f"{label} id out of range [0, {bound})")
    return arr


# -- delta selection --------------------------------------------------------

def delta_select(current, last, eps: float = 0.0) -> np.ndarray:
    """Mask of entries that must travel in a delta payload.

    Comparison happens in wire precision (float32). With eps zero the rule is
    strict inequality; entries never sent (NaN in last) always travel.
    """
    cur32 = np.asarray(current, dtype=np.float32)
    last32 = np.asarray(last, dtype=np.float32)
    if eps == 0.0:
        return cur32 != last32
    changed = np.abs(cur32 - last32) > np.float32(eps)
    return changed | np.isnan(last32)


# -- server-side session machine -------------------------------------------

PHASE_IDLE = "idle"
PHASE_AWAIT_HEADER_ACK = "await_header_ack"
PHASE_AWAIT_SENSORS_ACK = "await_sensors_ack"
PHASE_AWAIT_PARTICLES_ACK = "await_particles_ack"
PHASE_AWAIT_FOOTER_ACK = "await_footer_ack"

_ACK_EXPECTS = {
    PHASE_AWAIT_HEADER_ACK: FT_HEADER,
    PHASE_AWAIT_SENSORS_ACK: FT_SENSORS,
    PHASE_AWAIT_PARTICLES_ACK: FT_PARTICLES,
    PHASE_AWAIT_FOOTER_ACK: FT_FOOTER,
}

_NEXT_SEND = {
    PHASE_AWAIT_HEADER_ACK: (FT_SENSORS, PHASE_AWAIT_SENSORS_ACK),
    PHASE_AWAIT_SENSORS_ACK: (FT_PARTICLES, PHASE_AWAIT_PARTICLES_ACK),
    PHASE_AWAIT_PARTICLES_ACK: (FT_FOOTER, PHASE_AWAIT_FOOTER_ACK),
}


@dataclass
class SessionState:
    """Mutable per-client session: phase of the current cycle plus the
    client-controlled mode, viewpoint and band. Pure bookkeeping; the server
    builds payloads."""

    bands: BandConfig = field(default_factory=BandConfig)
    target_cm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mode: int = MODE_FULL
    band: int = 0
    viewpoint_cm: tuple[float, float, float] | None = None
    phase: str = PHASE_IDLE
    force_full: bool = True

    def reset(self) -> None:
        self.phase = PHASE_IDLE
        self.force_full = True


def session_step(state: SessionState, event) -> list[tuple]:
    """Advance the session machine by one event.

    Events are ("tick",) when a snapshot is ready to stream, or
    ("frame", Frame) for a client frame. Returned actions:

        ("send", frame_type)       the server must send this frame next
        ("cycle_done", command)    footer acked; command is None for a bare ACK
        ("violation", reason)      out-of-phase input; state was reset
    """
    kind = event[0]
    if kind == "tick":
        if state.phase != PHASE_IDLE:
            raise ValueError(f"tick event illegal in phase {state.phase}")
        state.phase = PHASE_AWAIT_HEADER_ACK
        return [("send", FT_HEADER)]
    if kind != "frame":
        raise ValueError(f"unknown event {kind!r}")

    frame: Frame = event[1]
    if frame.frame_type == FT_ACK:
        return _on_ack(state, frame)
    if frame.frame_type == FT_COMMAND:
        return _on_command(state, frame)
    return _violate(state, f"client sent frame type {frame.frame_type}")


def _violate(state: SessionState, reason: str) -> list[tuple]:
    state.reset()
    return [("violation", reason)]


def _on_ack(state: SessionState, frame: Frame) -> list[tuple]:
    expected = _ACK_EXPECTS.get(state.phase)
    if expected is None:
        return _violate(state, f"ACK received in phase {state.phase}")
    acked, status = parse_ack(frame.payload)
    if status != ACK_OK:
        return _violate(state, f"client rejected frame type {acked} (status {status})")
    if acked != expected:
        return _violate(state, f"ACK for frame type {acked}, expected {expected}")
    if state.phase == PHASE_AWAIT_FOOTER_ACK:
        state.phase = PHASE_IDLE
        return [("cycle_done", None)]
    send_type, next_phase = _NEXT_SEND[state.phase]
    state.phase = next_phase
    return [("send", send_type)]


def _on_command(state: SessionState, frame: Frame) -> list[tuple]:
    if state.phase != PHASE_AWAIT_FOOTER_ACK:
        return _violate(state, f"COMMAND received in phase {state.phase}")
    command = parse_command(frame.payload)
    if command.kind == CMD_SET_VIEWPOINT:
        state.viewpoint_cm = command.viewpoint_cm
        new_band = select_band(command.viewpoint_cm, state.target_cm, state.bands)
        if new_band != state.band:
            state.band = new_band
            state.force_full = True
    elif command.kind == CMD_SET_MODE:
        state.mode = command.mode
    elif command.kind == CMD_REQUEST_FULL:
        state.force_full = True
    state.phase = PHASE_IDLE
    return [("cycle_done", command)]
