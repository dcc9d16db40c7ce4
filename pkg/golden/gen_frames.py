"""Regenerates frames.json from the documented wire layout.

Deliberately builds every byte with raw struct packing instead of the
thermocast codec so the fixtures stay an independent reference. Run from
the repo root: python3 golden/gen_frames.py
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

MAGIC = b"DC"
VERSION = 1
FT_HEADER, FT_SENSORS, FT_PARTICLES, FT_FOOTER, FT_ACK, FT_COMMAND = 1, 2, 3, 4, 5, 6
MODE_FULL, MODE_DELTA = 0, 1
CMD_SET_VIEWPOINT, CMD_SET_MODE, CMD_REQUEST_FULL = 1, 2, 3


def frame(frame_type: int, payload: bytes) -> bytes:
    return MAGIC + struct.pack("<BBI", VERSION, frame_type, len(payload)) + payload


def sensor_full(sid: int, x: float, y: float, z: float, value: float) -> bytes:
    return struct.pack("<H3ff", sid, x, y, z, value)


def sensor_delta(sid: int, value: float) -> bytes:
    return struct.pack("<Hf", sid, value)


def particle_full(pid: int, x: float, y: float, z: float, value: float) -> bytes:
    return struct.pack("<I3ff", pid, x, y, z, value)


def particle_delta(pid: int, value: float) -> bytes:
    return struct.pack("<If", pid, value)


def main() -> None:
    fixtures: dict[str, dict] = {}

    def add(name: str, raw: bytes, **fields) -> None:
        fixtures[name] = {"hex": raw.hex(), **fields}

    # full cycle at tick 7, band 2: 2 sensors, 2 particles
    sensors = sensor_full(3, 0.5, 1.5, 2.0, 21.5) + sensor_full(12, 3.5, 0.25, 1.0, 24.25)
    particles = particle_full(0, 0.0, 0.0, 0.0, 21.5) + particle_full(
        29999, 4.0, 3.0, 2.5, 24.25
    )
    header = struct.pack("<BQHI3fB", MODE_FULL, 7, 2, 2, 4.0, 3.0, 2.5, 2)
    crc = zlib.crc32(particles, zlib.crc32(sensors))
    footer = struct.pack("<QI", 7, crc)

    add(
        "header_full",
        frame(FT_HEADER, header),
        mode=MODE_FULL, tick=7, sensor_count=2, particle_count=2,
        room=[4.0, 3.0, 2.5], band=2,
    )
    add(
        "sensors_full",
        frame(FT_SENSORS, sensors),
        mode=MODE_FULL,
        records=[
            {"id": 3, "pos": [0.5, 1.5, 2.0], "value": 21.5},
            {"id": 12, "pos": [3.5, 0.25, 1.0], "value": 24.25},
        ],
    )
    add(
        "particles_full",
        frame(FT_PARTICLES, particles),
        mode=MODE_FULL,
        records=[
            {"id": 0, "pos": [0.0, 0.0, 0.0], "value": 21.5},
            {"id": 29999, "pos": [4.0, 3.0, 2.5], "value": 24.25},
        ],
    )
    add("footer", frame(FT_FOOTER, footer), tick=7, crc=crc)

    # delta cycle pieces
    add(
        "header_delta",
        frame(FT_HEADER, struct.pack("<BQHI3fB", MODE_DELTA, 8, 35, 30000, 4.0, 3.0, 2.5, 1)),
        mode=MODE_DELTA, tick=8, sensor_count=35, particle_count=30000,
        room=[4.0, 3.0, 2.5], band=1,
    )
    add(
        "sensors_delta",
        frame(FT_SENSORS, sensor_delta(3, 22.0)),
        mode=MODE_DELTA, records=[{"id": 3, "value": 22.0}],
    )
    add("sensors_delta_empty", frame(FT_SENSORS, b""), mode=MODE_DELTA, records=[])
    add(
        "particles_delta",
        frame(FT_PARTICLES, particle_delta(7, 21.5)),
        mode=MODE_DELTA, records=[{"id": 7, "value": 21.5}],
    )
    add("particles_delta_empty", frame(FT_PARTICLES, b""), mode=MODE_DELTA, records=[])

    # acks and commands
    add("ack_header_ok", frame(FT_ACK, struct.pack("<BB", FT_HEADER, 0)),
        acked_type=FT_HEADER, status=0)
    add("ack_footer_ok", frame(FT_ACK, struct.pack("<BB", FT_FOOTER, 0)),
        acked_type=FT_FOOTER, status=0)
    add(
        "command_set_viewpoint",
        frame(FT_COMMAND, struct.pack("<B3f", CMD_SET_VIEWPOINT, 800.0, 150.0, 125.0)),
        kind=CMD_SET_VIEWPOINT, viewpoint_cm=[800.0, 150.0, 125.0],
    )
    add(
        "command_set_mode_delta",
        frame(FT_COMMAND, struct.pack("<BB", CMD_SET_MODE, MODE_DELTA)),
        kind=CMD_SET_MODE, mode=MODE_DELTA,
    )
    add(
        "command_request_full",
        frame(FT_COMMAND, struct.pack("<B", CMD_REQUEST_FULL)),
        kind=CMD_REQUEST_FULL,
    )

    # malformed inputs the decoder must reject with a typed error
    fixtures["bad_magic"] = {"hex": (b"XX" + struct.pack("<BBI", 1, 1, 0)).hex()}
    fixtures["bad_version"] = {"hex": (MAGIC + struct.pack("<BBI", 9, 1, 0)).hex()}
    fixtures["bad_type"] = {"hex": (MAGIC + struct.pack("<BBI", 1, 99, 0)).hex()}
    fixtures["oversize"] = {"hex": (MAGIC + struct.pack("<BBI", 1, 2, 1 << 27)).hex()}

    out = Path(__file__).with_name("frames.json")
    out.write_text(json.dumps(fixtures, indent=2) + "\n")
    print(f"wrote {out} ({len(fixtures)} fixtures)")


if __name__ == "__main__":
    main()
