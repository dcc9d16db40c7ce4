from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermocast import protocol as pr
from thermocast.errors import (
    BadMagicError,
    PayloadTooLargeError,
    ProtocolError,
    ProtocolViolationError,
    ShortPayloadError,
    TrailingBytesError,
    UnknownCommandError,
    UnknownFrameTypeError,
    UnknownVersionError,
)
from thermocast.lod import BandConfig


def _decode_one(raw: bytes) -> pr.Frame:
    got = pr.try_decode_frame(raw)
    assert got is not None and got[1] == len(raw)
    return got[0]


# -- golden fixtures ---------------------------------------------------------

def test_golden_frame_sizes():
    assert pr._FRAME_HEADER.size == 8
    assert pr._HEADER_PAYLOAD.size == 28
    assert pr.SENSOR_FULL_DTYPE.itemsize == 18
    assert pr.SENSOR_DELTA_DTYPE.itemsize == 6
    assert pr.PARTICLE_FULL_DTYPE.itemsize == 20
    assert pr.PARTICLE_DELTA_DTYPE.itemsize == 8
    assert pr._FOOTER_PAYLOAD.size == 12
    assert pr._ACK_PAYLOAD.size == 2


def test_golden_header(golden):
    fx = golden["header_full"]
    raw = pr.encode_frame(
        pr.FT_HEADER,
        pr.encode_header(
            fx["mode"], fx["tick"], fx["sensor_count"], fx["particle_count"],
            fx["room"], fx["band"],
        ),
    )
    assert raw.hex() == fx["hex"]
    frame = _decode_one(bytes.fromhex(fx["hex"]))
    assert frame.frame_type == pr.FT_HEADER
    h = pr.parse_header(frame.payload)
    assert (h.mode, h.tick, h.sensor_count, h.particle_count, h.band) == (
        fx["mode"], fx["tick"], fx["sensor_count"], fx["particle_count"], fx["band"]
    )
    assert h.room_lwh == tuple(fx["room"])

    fx2 = golden["header_delta"]
    h2 = pr.parse_header(_decode_one(bytes.fromhex(fx2["hex"])).payload)
    assert h2.mode == pr.MODE_DELTA and h2.tick == fx2["tick"]


def test_golden_sensors(golden):
    fx = golden["sensors_full"]
    recs = fx["records"]
    raw = pr.encode_frame(
        pr.FT_SENSORS,
        pr.encode_sensors_full(
            [r["id"] for r in recs],
            [r["pos"] for r in recs],
            [r["value"] for r in recs],
        ),
    )
    assert raw.hex() == fx["hex"]
    parsed = pr.parse_sensors(_decode_one(raw).payload, pr.MODE_FULL)
    assert parsed["id"].tolist() == [r["id"] for r in recs]
    assert parsed["value"].tolist() == [r["value"] for r in recs]

    fx = golden["sensors_delta"]
    raw = pr.encode_frame(
        pr.FT_SENSORS,
        pr.encode_sensors_delta(
            [r["id"] for r in fx["records"]], [r["value"] for r in fx["records"]]
        ),
    )
    assert raw.hex() == fx["hex"]

    fx = golden["sensors_delta_empty"]
    assert pr.encode_frame(pr.FT_SENSORS, pr.encode_sensors_delta([], [])).hex() == fx["hex"]
    assert pr.parse_sensors(b"", pr.MODE_DELTA).size == 0


def test_golden_particles(golden):
    fx = golden["particles_full"]
    recs = fx["records"]
    raw = pr.encode_frame(
        pr.FT_PARTICLES,
        pr.encode_particles_full(
            [r["id"] for r in recs],
            [r["pos"] for r in recs],
            [r["value"] for r in recs],
        ),
    )
    assert raw.hex() == fx["hex"]

    fx = golden["particles_delta"]
    raw = pr.encode_frame(
        pr.FT_PARTICLES,
        pr.encode_particles_delta(
            [r["id"] for r in fx["records"]], [r["value"] for r in fx["records"]]
        ),
    )
    assert raw.hex() == fx["hex"]
    parsed = pr.parse_particles(_decode_one(raw).payload, pr.MODE_DELTA)
    assert parsed["id"].tolist() == [7] and parsed["value"].tolist() == [21.5]


def test_golden_footer_crc(golden):
    sensors = _decode_one(bytes.fromhex(golden["sensors_full"]["hex"])).payload
    particles = _decode_one(bytes.fromhex(golden["particles_full"]["hex"])).payload
    crc = pr.payload_crc(sensors, particles)
    fx = golden["footer"]
    assert crc == fx["crc"]
    raw = pr.encode_frame(pr.FT_FOOTER, pr.encode_footer(fx["tick"], crc))
    assert raw.hex() == fx["hex"]
    tick, parsed_crc = pr.parse_footer(_decode_one(raw).payload)
    assert (tick, parsed_crc) == (fx["tick"], fx["crc"])


def test_golden_ack(golden):
    fx = golden["ack_header_ok"]
    raw = pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_HEADER, pr.ACK_OK))
    assert raw.hex() == fx["hex"] == "44430105020000000100"
    assert pr.parse_ack(_decode_one(raw).payload) == (pr.FT_HEADER, pr.ACK_OK)
    fx = golden["ack_footer_ok"]
    raw = pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_FOOTER, pr.ACK_OK))
    assert raw.hex() == fx["hex"]


def test_golden_commands(golden):
    fx = golden["command_set_viewpoint"]
    cmd = pr.Command(pr.CMD_SET_VIEWPOINT, viewpoint_cm=tuple(fx["viewpoint_cm"]))
    raw = pr.encode_frame(pr.FT_COMMAND, pr.encode_command(cmd))
    assert raw.hex() == fx["hex"]
    assert pr.parse_command(_decode_one(raw).payload) == cmd

    fx = golden["command_set_mode_delta"]
    cmd = pr.Command(pr.CMD_SET_MODE, mode=pr.MODE_DELTA)
    raw = pr.encode_frame(pr.FT_COMMAND, pr.encode_command(cmd))
    assert raw.hex() == fx["hex"]

    fx = golden["command_request_full"]
    cmd = pr.Command(pr.CMD_REQUEST_FULL)
    raw = pr.encode_frame(pr.FT_COMMAND, pr.encode_command(cmd))
    assert raw.hex() == fx["hex"]


def test_golden_malformed(golden):
    with pytest.raises(BadMagicError):
        pr.try_decode_frame(bytes.fromhex(golden["bad_magic"]["hex"]))
    with pytest.raises(UnknownVersionError):
        pr.try_decode_frame(bytes.fromhex(golden["bad_version"]["hex"]))
    with pytest.raises(UnknownFrameTypeError):
        pr.try_decode_frame(bytes.fromhex(golden["bad_type"]["hex"]))
    with pytest.raises(PayloadTooLargeError):
        pr.try_decode_frame(bytes.fromhex(golden["oversize"]["hex"]))


# -- framing -----------------------------------------------------------------

def test_incomplete_frames_return_none():
    raw = pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_HEADER))
    for cut in range(len(raw)):
        assert pr.try_decode_frame(raw[:cut]) is None


def test_decoder_chunked_feed(golden):
    names = ["header_full", "sensors_full", "particles_full", "footer"]
    stream = b"".join(bytes.fromhex(golden[n]["hex"]) for n in names)
    dec = pr.StreamDecoder()
    frames = []
    for i in range(0, len(stream), 3):
        frames.extend(dec.feed(stream[i : i + 3]))
    assert [f.frame_type for f in frames] == [
        pr.FT_HEADER, pr.FT_SENSORS, pr.FT_PARTICLES, pr.FT_FOOTER,
    ]
    assert dec.pending == 0


def test_decoder_respects_custom_cap():
    dec = pr.StreamDecoder(max_payload=16)
    raw = pr.encode_frame(pr.FT_SENSORS, bytes(20))
    with pytest.raises(PayloadTooLargeError):
        dec.feed(raw)
    with pytest.raises(PayloadTooLargeError):
        pr.encode_frame(pr.FT_SENSORS, bytes(20), max_payload=16)


def test_encode_frame_rejects_unknown_type():
    with pytest.raises(UnknownFrameTypeError):
        pr.encode_frame(42, b"")


# -- validation --------------------------------------------------------------

def test_header_field_validation():
    room = (4.0, 3.0, 2.5)
    with pytest.raises(ValueError):
        pr.encode_header(7, 0, 1, 1, room, 0)
    with pytest.raises(ValueError):
        pr.encode_header(0, -1, 1, 1, room, 0)
    with pytest.raises(ValueError):
        pr.encode_header(0, 0, 1 << 16, 1, room, 0)
    with pytest.raises(ValueError):
        pr.encode_header(0, 0, 1, 1 << 32, room, 0)
    with pytest.raises(ValueError):
        pr.encode_header(0, 0, 1, 1, room, 256)
    bad_mode = pr.encode_header(1, 5, 1, 1, room, 0)
    bad_mode = b"\x07" + bad_mode[1:]
    with pytest.raises(ProtocolViolationError):
        pr.parse_header(bad_mode)


def test_record_id_bounds():
    with pytest.raises(ValueError):
        pr.encode_sensors_delta([1 << 16], [20.0])
    with pytest.raises(ValueError):
        pr.encode_particles_delta([-1], [20.0])
    with pytest.raises(ValueError):
        pr.encode_particles_delta([1 << 32], [20.0])


def test_short_and_trailing_payloads():
    with pytest.raises(ShortPayloadError):
        pr.parse_header(b"\x00" * 10)
    with pytest.raises(TrailingBytesError):
        pr.parse_header(b"\x00" * 40)
    with pytest.raises(TrailingBytesError):
        pr.parse_sensors(b"\x00" * 7, pr.MODE_DELTA)
    with pytest.raises(ShortPayloadError):
        pr.parse_command(b"")
    with pytest.raises(UnknownCommandError):
        pr.parse_command(b"\x2a")
    with pytest.raises(ProtocolViolationError):
        pr.parse_command(bytes([pr.CMD_SET_MODE, 9]))
    with pytest.raises(UnknownCommandError):
        pr.encode_command(pr.Command(99))


# -- property round-trips ----------------------------------------------------

f32 = st.floats(
    allow_nan=False, allow_infinity=False, width=32, min_value=-1e6, max_value=1e6
)


@given(
    st.integers(0, 1), st.integers(0, (1 << 64) - 1), st.integers(0, (1 << 16) - 1),
    st.integers(0, (1 << 32) - 1), st.tuples(f32, f32, f32), st.integers(0, 255),
)
def test_header_roundtrip(mode, tick, sc, pc, room, band):
    h = pr.parse_header(pr.encode_header(mode, tick, sc, pc, room, band))
    assert (h.mode, h.tick, h.sensor_count, h.particle_count, h.band) == (
        mode, tick, sc, pc, band
    )
    assert h.room_lwh == tuple(np.float32(v) for v in room)


@given(st.lists(st.tuples(st.integers(0, (1 << 16) - 1), f32), max_size=40))
def test_sensor_delta_roundtrip(pairs):
    ids = [p[0] for p in pairs]
    vals = [p[1] for p in pairs]
    rec = pr.parse_sensors(pr.encode_sensors_delta(ids, vals), pr.MODE_DELTA)
    assert rec["id"].tolist() == ids
    np.testing.assert_array_equal(rec["value"], np.asarray(vals, dtype=np.float32))


@given(st.lists(st.tuples(st.integers(0, (1 << 32) - 1), f32, f32, f32, f32), max_size=40))
def test_particle_full_roundtrip(rows):
    ids = [r[0] for r in rows]
    pos = [[r[1], r[2], r[3]] for r in rows]
    vals = [r[4] for r in rows]
    rec = pr.parse_particles(
        pr.encode_particles_full(ids, np.array(pos).reshape(-1, 3), vals), pr.MODE_FULL
    )
    assert rec["id"].tolist() == ids
    np.testing.assert_array_equal(rec["value"], np.asarray(vals, dtype=np.float32))
    np.testing.assert_array_equal(rec["x"], np.asarray([p[0] for p in pos], np.float32))


@given(st.integers(0, (1 << 64) - 1), st.integers(0, (1 << 32) - 1))
def test_footer_roundtrip(tick, crc):
    assert pr.parse_footer(pr.encode_footer(tick, crc)) == (tick, crc)


@given(st.binary(max_size=64))
def test_fuzzed_bytes_never_crash(data):
    dec = pr.StreamDecoder()
    try:
        dec.feed(data)
    except ProtocolError:
        pass


# -- delta selection ---------------------------------------------------------

def test_delta_select_wire_precision():
    last = np.array([21.0, 22.0, 23.0])
    cur = np.array([21.0000001, 22.5, 23.0])  # first collapses to 21.0 in f32
    mask = pr.delta_select(cur, last)
    assert mask.tolist() == [False, True, False]


def test_delta_select_nan_means_never_sent():
    last = np.array([np.nan, 22.0])
    cur = np.array([20.0, 22.0])
    assert pr.delta_select(cur, last).tolist() == [True, False]
    assert pr.delta_select(cur, last, eps=5.0).tolist() == [True, False]


def test_delta_select_eps_threshold_is_strict():
    last = np.array([20.0, 20.0, 20.0])
    cur = np.array([20.5, 20.4999, 21.0])
    mask = pr.delta_select(cur, last, eps=0.5)
    assert mask.tolist() == [False, False, True]


# -- session machine ----------------------------------------------------------

def _state(**kw):
    cfg = BandConfig(
        (500.0, 1000.0, 1500.0, 2000.0), (1, 2, 5, 10), (0, 1, 2, 3),
        (120000, 30000, 7500, 1875),
    )
    return pr.SessionState(bands=cfg, target_cm=(200.0, 150.0, 125.0), **kw)


def _ack(ftype):
    return pr.Frame(pr.FT_ACK, pr.encode_ack(ftype, pr.ACK_OK))


def _cmd(command):
    return pr.Frame(pr.FT_COMMAND, pr.encode_command(command))


def test_session_happy_cycle():
    s = _state()
    assert pr.session_step(s, ("tick",)) == [("send", pr.FT_HEADER)]
    assert pr.session_step(s, ("frame", _ack(pr.FT_HEADER))) == [("send", pr.FT_SENSORS)]
    assert pr.session_step(s, ("frame", _ack(pr.FT_SENSORS))) == [("send", pr.FT_PARTICLES)]
    assert pr.session_step(s, ("frame", _ack(pr.FT_PARTICLES))) == [("send", pr.FT_FOOTER)]
    out = pr.session_step(s, ("frame", _ack(pr.FT_FOOTER)))
    assert out == [("cycle_done", None)]
    assert s.phase == pr.PHASE_IDLE


def test_session_tick_outside_idle_raises():
    s = _state()
    pr.session_step(s, ("tick",))
    with pytest.raises(ValueError):
        pr.session_step(s, ("tick",))


def test_session_stray_ack_resets():
    s = _state(force_full=False)
    out = pr.session_step(s, ("frame", _ack(pr.FT_HEADER)))
    assert out[0][0] == "violation"
    assert s.phase == pr.PHASE_IDLE and s.force_full


def test_session_wrong_ack_type_resets():
    s = _state()
    pr.session_step(s, ("tick",))
    out = pr.session_step(s, ("frame", _ack(pr.FT_PARTICLES)))
    assert out[0][0] == "violation"
    assert s.force_full


def test_session_nack_resets():
    s = _state()
    pr.session_step(s, ("tick",))
    nack = pr.Frame(pr.FT_ACK, pr.encode_ack(pr.FT_HEADER, pr.ACK_ERROR))
    assert pr.session_step(s, ("frame", nack))[0][0] == "violation"


def test_session_command_outside_footer_phase_is_violation():
    s = _state()
    pr.session_step(s, ("tick",))
    cmd = pr.Command(pr.CMD_REQUEST_FULL)
    assert pr.session_step(s, ("frame", _cmd(cmd)))[0][0] == "violation"


def _walk_to_footer(s):
    pr.session_step(s, ("tick",))
    for ft in (pr.FT_HEADER, pr.FT_SENSORS, pr.FT_PARTICLES):
        pr.session_step(s, ("frame", _ack(ft)))


def test_session_command_acts_as_footer_ack():
    s = _state()
    _walk_to_footer(s)
    cmd = pr.Command(pr.CMD_SET_VIEWPOINT, viewpoint_cm=(1400.0, 150.0, 125.0))
    out = pr.session_step(s, ("frame", _cmd(cmd)))
    assert out == [("cycle_done", cmd)]
    assert s.band == 2  # distance 1200 -> third band
    assert s.force_full and s.phase == pr.PHASE_IDLE


def test_session_same_band_viewpoint_does_not_force_full():
    s = _state()
    _walk_to_footer(s)
    s.force_full = False
    cmd = pr.Command(pr.CMD_SET_VIEWPOINT, viewpoint_cm=(210.0, 150.0, 125.0))
    pr.session_step(s, ("frame", _cmd(cmd)))
    assert s.band == 0 and not s.force_full


def test_session_set_mode_and_request_full():
    s = _state()
    _walk_to_footer(s)
    pr.session_step(s, ("frame", _cmd(pr.Command(pr.CMD_SET_MODE, mode=pr.MODE_DELTA))))
    assert s.mode == pr.MODE_DELTA
    s.force_full = False
    _walk_to_footer(s)
    pr.session_step(s, ("frame", _cmd(pr.Command(pr.CMD_REQUEST_FULL))))
    assert s.force_full


def test_session_data_frame_from_client_is_violation():
    s = _state()
    _walk_to_footer(s)
    out = pr.session_step(s, ("frame", pr.Frame(pr.FT_HEADER, b"")))
    assert out[0][0] == "violation"
