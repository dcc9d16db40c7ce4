"""Release acceptance gate.

One test per shipping criterion; each prints a single PASS/FAIL line with
its runtime so the suite output doubles as the acceptance report. Checks
run against independent oracles (brute-force scans, volume-ratio
barycentrics, an lstsq circumsphere solve), never against the code paths
they audit.
"""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from contextlib import contextmanager

import numpy as np
import pytest

from thermocast import kernels
from thermocast import protocol as pr
from thermocast.client import MirrorState, StreamClient
from thermocast.config import load_config
from thermocast.delaunay import signed_volume, tetrahedralize
from thermocast.errors import ProtocolError
from thermocast.grid import Room, Sensor, SensorSet, particle_count
from thermocast.ingestion import synthetic_stream
from thermocast.lod import cluster_grid, significant_vertices
from thermocast.segmentation import (
    interpolate,
    nearest_sensor_expansion,
    point_in_tetrahedron,
)
from thermocast.server import FieldEngine, SessionDriver, StreamServer


@contextmanager
def criterion(capsys, name, budget_s=None):
    t0 = time.perf_counter()
    note = {}
    try:
        yield note
        elapsed = time.perf_counter() - t0
        if budget_s is not None and elapsed >= budget_s:
            raise AssertionError(f"took {elapsed:.2f}s, budget {budget_s:.0f}s")
    except BaseException as e:
        elapsed = time.perf_counter() - t0
        with capsys.disabled():
            print(f"FAIL {name} ({elapsed:.2f}s): {e}")
        raise
    with capsys.disabled():
        extra = f": {note['detail']}" if "detail" in note else ""
        print(f"PASS {name} ({elapsed:.2f}s){extra}")


@pytest.fixture(scope="module")
def aengine():
    return FieldEngine(load_config(None))


@pytest.fixture(scope="module")
def dengine():
    cfg = load_config(None)
    cfg.stream.mode = "delta"
    cfg.stream.diffusion_waves = 7
    return FieldEngine(cfg.validate())


def _id_sorted_positions(sensors):
    order = np.argsort([s.id for s in sensors.sensors], kind="stable")
    return sensors.positions()[order]


def _exhaustive_nearest(grid, positions):
    """O(N*M) scan, first sensor wins ties; term order matches the kernels."""
    pts = grid.positions()
    n = pts.shape[0]
    best_d2 = np.full(n, np.inf)
    owner = np.full(n, -1, dtype=np.int32)
    for j in range(positions.shape[0]):
        diff = pts - positions[j]
        d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        better = d2 < best_d2
        best_d2[better] = d2[better]
        owner[better] = j
    return owner, best_d2


class _Sim:
    """Compliant scripted client over the duck transport interface.

    Acks every frame, mirrors the stream, verifies footer CRCs. After each
    cycle it applies the next reading batch (from `reading_plan(done)` when
    given, else a synthetic stream), sends `commands.get(done)` or a footer
    ack, and EOFs once `total` cycles committed.
    """

    def __init__(self, engine, total, commands=None, reading_plan=None):
        self.engine = engine
        self.total = total
        self.commands = dict(commands or {})
        self.reading_plan = reading_plan
        self.mirror = MirrorState()
        self.decoder = pr.StreamDecoder()
        self.outbox: deque[bytes] = deque()
        self.batches = synthetic_stream(engine.sensors, seed=21)
        self.records = []
        self.done = 0
        self.eof = False
        self._payloads: dict[int, bytes] = {}

    def send(self, data):
        if self.eof:
            return
        for frame in self.decoder.feed(data):
            self._handle(frame)

    def recv(self, timeout):
        if self.outbox:
            return self.outbox.popleft()
        if self.eof:
            return b""
        return None

    def close(self):
        pass

    def _ack(self, ftype):
        self.outbox.append(pr.encode_frame(pr.FT_ACK, pr.encode_ack(ftype)))

    def _handle(self, frame):
        ft = frame.frame_type
        if ft == pr.FT_HEADER:
            self.mirror.apply_header(pr.parse_header(frame.payload))
            self._ack(ft)
        elif ft in (pr.FT_SENSORS, pr.FT_PARTICLES):
            self._payloads[ft] = frame.payload
            if ft == pr.FT_SENSORS:
                self.mirror.apply_sensors(frame.payload)
            else:
                self.mirror.apply_particles(frame.payload)
            self._ack(ft)
        elif ft == pr.FT_FOOTER:
            tick, crc = pr.parse_footer(frame.payload)
            assert crc == pr.payload_crc(
                self._payloads[pr.FT_SENSORS], self._payloads[pr.FT_PARTICLES]
            )
            self.mirror.finish_cycle(tick)
            header = self.mirror.header
            delta_ids = None
            if header.mode == pr.MODE_DELTA:
                recs = pr.parse_particles(self._payloads[pr.FT_PARTICLES], header.mode)
                delta_ids = recs["id"].astype(np.int64)
            self.records.append({
                "tick": tick,
                "mode": header.mode,
                "band": header.band,
                "count": header.particle_count,
                "delta_ids": delta_ids,
                "values": self.mirror.particle_values(),
            })
            self.done += 1
            if self.reading_plan is not None:
                readings = self.reading_plan(self.done)
            else:
                readings = next(self.batches).readings
            if readings is not None:
                self.engine.apply_batch(readings)
            command = self.commands.pop(self.done, None)
            if command is not None:
                self.outbox.append(
                    pr.encode_frame(pr.FT_COMMAND, pr.encode_command(command))
                )
            else:
                self._ack(pr.FT_FOOTER)
            if self.done >= self.total:
                self.eof = True
        else:
            raise AssertionError(f"unexpected frame type {ft}")


def _run_session(engine, sim):
    driver = SessionDriver(engine, sim, name="acceptance")
    errors = []

    def run():
        try:
            driver.run()
        except BaseException as e:  # surfaced in the main thread below
            errors.append(e)

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    thread.join(120.0)
    assert not thread.is_alive(), "session did not finish"
    if errors:
        raise errors[0]
    assert driver.violations == 0
    return driver


def test_cluster_table(aengine, capsys):
    with criterion(capsys, "cluster table", budget_s=1.0) as note:
        counts = {f: cluster_grid(aengine.grid, f).count for f in (1, 2, 5, 10)}
        assert counts == {1: 30000, 2: 3900, 5: 240, 10: 36}
        note["detail"] = f"counts {counts}"


def test_resolution_table(aengine, capsys):
    snap = aengine.snapshot()
    with criterion(capsys, "resolution table", budget_s=1.0) as note:
        counts = [aengine.level(snap, band).count for band in range(4)]
        assert counts == [120000, 30000, 7500, 1875]
        note["detail"] = f"counts {counts}"


def test_significant_shape(aengine, capsys):
    grid, wm = aengine.grid, aengine.wm
    rng = np.random.default_rng(17)
    with criterion(capsys, "significant-vertex shape", budget_s=120.0) as note:
        sample = None
        for _ in range(100):
            readings = rng.uniform(16.0, 30.0, wm.sensor_ids.size)
            vals = interpolate(wm, readings)
            counts = [
                significant_vertices(grid, d, values=vals,
                                     sensors=aengine.sensors).count
                for d in (0, 1, 2, 3)
            ]
            assert counts[0] == grid.count
            assert counts[1] >= counts[2] >= counts[3] >= 1
            sample = counts
        note["detail"] = f"100 fields, depth counts e.g. {sample}"


def test_sizing_helper(capsys):
    with criterion(capsys, "sizing helper", budget_s=1.0) as note:
        assert particle_count(Room(4.0, 3.0, 2.5), 1.0) == 70
        assert particle_count(Room(1.0, 1.0, 1.0), 1.0) == 8
        # the canonical grid uses explicit dims instead of this estimate;
        # that divergence must stay written down where users meet it
        assert "disagree" in particle_count.__doc__
        canonical = load_config(None)
        assert tuple(canonical.grid.dims) == (40, 30, 25)
        note["detail"] = "70 and 8; canonical 40x30x25 divergence documented"


def test_geometry_oracles(aengine, capsys):
    rng = np.random.default_rng(5)
    with criterion(capsys, "geometry oracles", budget_s=30.0) as note:
        # containment vs volume-ratio barycentrics on 10^4 random pairs
        checked = disagreements = 0
        verts = None
        for i in range(10_000):
            if i % 5 == 0:
                verts = None
                while verts is None:
                    cand = rng.normal(0.0, 1.0, (4, 3))
                    if abs(signed_volume(*cand)) > 1e-2:
                        verts = cand
            point = verts.mean(axis=0) + rng.normal(0.0, 0.6, 3)
            total = signed_volume(*verts)
            lams = np.array([
                signed_volume(point, verts[1], verts[2], verts[3]),
                signed_volume(verts[0], point, verts[2], verts[3]),
                signed_volume(verts[0], verts[1], point, verts[3]),
                signed_volume(verts[0], verts[1], verts[2], point),
            ]) / total
            if np.min(np.abs(lams)) <= 1e-9:
                continue  # face band: containment is legitimately ambiguous
            checked += 1
            if point_in_tetrahedron(point, verts) != bool(np.all(lams > 0)):
                disagreements += 1
        assert checked > 9000
        assert disagreements == 0

        # nearest-sensor assignment vs the exhaustive scan, default setup
        owner = nearest_sensor_expansion(aengine.grid, aengine.sensors)
        oracle_owner, _ = _exhaustive_nearest(
            aengine.grid, _id_sorted_positions(aengine.sensors)
        )
        assert np.array_equal(owner, oracle_owner)

        # empty circumsphere on 50 random 35-sensor sets, radii re-derived
        # with an independent least-squares solve
        diag = math.sqrt(4.0**2 + 3.0**2 + 2.5**2)
        eps_d = 1e-7 * diag
        for _ in range(50):
            pts = [
                (rng.uniform(0, 4.0), rng.uniform(0, 3.0), rng.uniform(0, 2.5))
                for _ in range(35)
            ]
            sensors = SensorSet(
                sensors=[Sensor(id=i, x=p[0], y=p[1], layer=p[2])
                         for i, p in enumerate(pts)],
                layers=tuple(sorted({p[2] for p in pts})),
            )
            mesh = tetrahedralize(sensors)
            assert len(mesh) > 0
            pos = sensors.positions()
            for tet, tet_pos in zip(mesh.tetrahedra, mesh.vertex_positions()):
                a = np.hstack([-2.0 * tet_pos, np.ones((4, 1))])
                b = -np.sum(tet_pos * tet_pos, axis=1)
                sol, *_ = np.linalg.lstsq(a, b, rcond=None)
                center, k = sol[:3], sol[3]
                radius = math.sqrt(max(float(center @ center - k), 0.0))
                vdist = np.linalg.norm(tet_pos - center, axis=1)
                assert np.max(np.abs(vdist - radius)) < 1e-6 * diag
                dist = np.linalg.norm(pos - center, axis=1)
                for si in np.nonzero(dist < radius - eps_d)[0]:
                    assert int(sensors.sensors[si].id) in tet.vertex_ids
        note["detail"] = (
            f"{checked} containment pairs, 30000-particle scan, 50 meshes"
        )


def test_interpolation_conservation(aengine, capsys):
    wm = aengine.wm
    rng = np.random.default_rng(23)
    with criterion(capsys, "interpolation conservation", budget_s=30.0) as note:
        uniform = np.full(wm.sensor_ids.size, 23.7)
        vals = interpolate(wm, uniform)
        worst_uniform = float(np.max(np.abs(vals - 23.7)))
        assert worst_uniform < 1e-6

        # convex stencils keep values in [min, max]; the guard only covers
        # IEEE rounding of the 4-term dot product (values are O(30), so a
        # few ulps is ~1e-14)
        guard = 1e-12
        overshoot = 0.0
        for _ in range(100):
            readings = rng.uniform(16.0, 30.0, wm.sensor_ids.size)
            vals = interpolate(wm, readings)
            lo, hi = readings.min(), readings.max()
            assert vals.min() >= lo - guard
            assert vals.max() <= hi + guard
            overshoot = max(overshoot, vals.max() - hi, lo - vals.min())
        note["detail"] = (
            f"uniform worst {worst_uniform:.1e}, bounds overshoot "
            f"{max(overshoot, 0.0):.1e}"
        )


def _roundtrip_headers(rng, n, decoder):
    for _ in range(n):
        mode = int(rng.integers(0, 2))
        tick = int(rng.integers(0, 1 << 48))
        sc = int(rng.integers(0, 1 << 16))
        count = int(rng.integers(0, 1 << 31))
        room = tuple(float(np.float32(x)) for x in rng.uniform(0.5, 50.0, 3))
        band = int(rng.integers(0, 256))
        payload = pr.encode_header(mode, tick, sc, count, room, band)
        frames = decoder.feed(pr.encode_frame(pr.FT_HEADER, payload))
        assert len(frames) == 1 and frames[0].payload == payload
        h = pr.parse_header(payload)
        assert (h.mode, h.tick, h.sensor_count, h.particle_count, h.band) == (
            mode, tick, sc, count, band)
        assert h.room_lwh == room
        assert pr.encode_header(h.mode, h.tick, h.sensor_count,
                                h.particle_count, h.room_lwh, h.band) == payload


def _roundtrip_records(rng, n, decoder, ftype, delta):
    id_cap = (1 << 16) if ftype == pr.FT_SENSORS else (1 << 32)
    for _ in range(n):
        k = int(rng.integers(0, 5))
        ids = np.sort(rng.choice(min(id_cap, 1 << 20), size=k, replace=False))
        values = rng.uniform(-50.0, 80.0, k)
        if delta:
            enc = (pr.encode_sensors_delta if ftype == pr.FT_SENSORS
                   else pr.encode_particles_delta)
            payload = enc(ids, values)
        else:
            positions = rng.uniform(0.0, 10.0, (k, 3))
            enc = (pr.encode_sensors_full if ftype == pr.FT_SENSORS
                   else pr.encode_particles_full)
            payload = enc(ids, positions, values)
        frames = decoder.feed(pr.encode_frame(ftype, payload))
        assert len(frames) == 1 and frames[0].payload == payload
        mode = pr.MODE_DELTA if delta else pr.MODE_FULL
        parse = pr.parse_sensors if ftype == pr.FT_SENSORS else pr.parse_particles
        recs = parse(payload, mode)
        assert np.array_equal(recs["id"].astype(np.int64), ids)
        assert np.array_equal(recs["value"], values.astype(np.float32))
        if delta:
            assert enc(recs["id"], recs["value"]) == payload
        else:
            pos32 = np.stack([recs["x"], recs["y"], recs["z"]], axis=1)
            assert np.array_equal(pos32, positions.astype(np.float32))
            assert enc(recs["id"], pos32, recs["value"]) == payload


def _roundtrip_rest(rng, n_footer, n_ack, n_cmd, decoder):
    for _ in range(n_footer):
        tick = int(rng.integers(0, 1 << 63))
        crc = int(rng.integers(0, 1 << 32))
        payload = pr.encode_footer(tick, crc)
        frames = decoder.feed(pr.encode_frame(pr.FT_FOOTER, payload))
        assert len(frames) == 1 and frames[0].payload == payload
        assert pr.parse_footer(payload) == (tick, crc)
    for _ in range(n_ack):
        acked = int(rng.choice(sorted(pr.FRAME_TYPES)))
        status = int(rng.integers(0, 2))
        payload = pr.encode_ack(acked, status)
        frames = decoder.feed(pr.encode_frame(pr.FT_ACK, payload))
        assert len(frames) == 1 and frames[0].payload == payload
        assert pr.parse_ack(payload) == (acked, status)
    kinds = (pr.CMD_SET_VIEWPOINT, pr.CMD_SET_MODE, pr.CMD_REQUEST_FULL)
    for i in range(n_cmd):
        kind = kinds[i % 3]
        if kind == pr.CMD_SET_VIEWPOINT:
            vp = tuple(float(np.float32(x)) for x in rng.uniform(-5e3, 5e3, 3))
            cmd = pr.Command(kind, viewpoint_cm=vp)
        elif kind == pr.CMD_SET_MODE:
            cmd = pr.Command(kind, mode=int(rng.integers(0, 2)))
        else:
            cmd = pr.Command(kind)
        payload = pr.encode_command(cmd)
        frames = decoder.feed(pr.encode_frame(pr.FT_COMMAND, payload))
        assert len(frames) == 1 and frames[0].payload == payload
        back = pr.parse_command(payload)
        assert back == cmd
        assert pr.encode_command(back) == payload


def test_protocol_soundness(dengine, capsys):
    rng = np.random.default_rng(11)
    with criterion(capsys, "protocol soundness", budget_s=300.0) as note:
        # 10^5 frame round trips through one streaming decoder
        decoder = pr.StreamDecoder()
        _roundtrip_headers(rng, 30_000, decoder)
        _roundtrip_records(rng, 14_000, decoder, pr.FT_SENSORS, delta=False)
        _roundtrip_records(rng, 14_000, decoder, pr.FT_SENSORS, delta=True)
        _roundtrip_records(rng, 14_000, decoder, pr.FT_PARTICLES, delta=False)
        _roundtrip_records(rng, 14_000, decoder, pr.FT_PARTICLES, delta=True)
        _roundtrip_rest(rng, 7_000, 3_500, 3_500, decoder)

        # 10^6 fuzzed inputs: random bytes, magic-prefixed noise, single-byte
        # corruptions of well-formed frames; any ProtocolError is fine
        blob = rng.integers(0, 256, size=12_000_000, dtype=np.uint8).tobytes()
        valid = [
            pr.encode_frame(pr.FT_HEADER,
                            pr.encode_header(0, 9, 2, 4, (4.0, 3.0, 2.5), 1)),
            pr.encode_frame(pr.FT_SENSORS, pr.encode_sensors_delta([3], [21.5])),
            pr.encode_frame(pr.FT_PARTICLES,
                            pr.encode_particles_full([0], [(0, 0, 0)], [20.0])),
            pr.encode_frame(pr.FT_FOOTER, pr.encode_footer(9, 123456)),
            pr.encode_frame(pr.FT_ACK, pr.encode_ack(pr.FT_HEADER)),
        ]
        fuzz_decoder = pr.StreamDecoder()
        pos = 0
        for i in range(1_000_000):
            size = 3 + (i % 13)
            chunk = blob[pos:pos + size]
            pos += size
            if pos >= len(blob) - 64:
                pos = 0
            branch = i & 7
            if branch == 6:
                chunk = b"DC" + chunk
            elif branch == 7:
                base = bytearray(valid[i % len(valid)])
                base[i % len(base)] ^= 1 + (i // 8) % 255
                chunk = bytes(base)
            try:
                fuzz_decoder.feed(chunk)
            except ProtocolError:
                fuzz_decoder = pr.StreamDecoder()

        # one full plus twenty delta cycles: the client mirror must equal
        # the engine snapshot exactly at a zero delta threshold
        assert dengine.value_eps == 0.0
        expected = {}
        snap0 = dengine.snapshot()
        expected[snap0.tick] = dengine.level(snap0, 0).values.astype(np.float32)
        orig_apply = dengine.apply_batch

        def apply_and_expect(readings):
            snap = orig_apply(readings)
            expected[snap.tick] = dengine.level(snap, 0).values.astype(np.float32)
            return snap

        dengine.apply_batch = apply_and_expect
        try:
            sim = _Sim(dengine, total=21)
            _run_session(dengine, sim)
        finally:
            del dengine.apply_batch
        modes = [r["mode"] for r in sim.records]
        assert modes[0] == pr.MODE_FULL
        assert modes[1:] == [pr.MODE_DELTA] * 20
        for rec in sim.records:
            assert np.array_equal(rec["values"], expected[rec["tick"]])

        # payload arithmetic: one changed particle rides in 8 bytes where
        # the full level costs 600000
        snap = dengine.snapshot()
        level = dengine.level(snap, 1)
        assert level.count == 30000
        full_payload = dengine.particles_full_payload(snap, 1)
        assert len(full_payload) == 600_000
        last32 = level.values.astype(np.float32)
        cur = level.values.copy()
        cur[12_345] += 0.5
        mask = pr.delta_select(cur, last32, 0.0)
        assert int(mask.sum()) == 1
        delta_payload = pr.encode_particles_delta(level.wire_ids()[mask], cur[mask])
        assert len(delta_payload) == 8
        note["detail"] = (
            "1e5 round trips, 1e6 fuzz inputs, 21-cycle mirror exact, "
            "8B delta vs 600000B full"
        )


def test_diffusion_staging(dengine, capsys):
    schedule = dengine.schedule
    grid = dengine.grid
    with criterion(capsys, "diffusion staging", budget_s=120.0) as note:
        # waves partition the base grid
        sizes = [w.size for w in schedule.waves]
        assert sum(sizes) == grid.count
        assert max(sizes) - min(sizes) <= 1
        joined = np.concatenate(schedule.waves)
        assert np.array_equal(np.sort(joined), np.arange(grid.count))

        # distance ordering vs the exhaustive rank oracle
        _, oracle_d2 = _exhaustive_nearest(
            grid, _id_sorted_positions(dengine.sensors)
        )
        assert np.array_equal(oracle_d2, dengine.wm.nearest_d2)
        rank_order = np.lexsort((np.arange(grid.count), oracle_d2))
        assert np.array_equal(
            schedule.wave_of[rank_order],
            np.repeat(np.arange(len(sizes)), sizes),
        )

        # one sweep transmits every changed particle exactly once: switch to
        # the band that serves the base grid, change the readings once, then
        # hold them constant while the waves drain
        rng = np.random.default_rng(29)
        ids = [int(s) for s in dengine.wm.sensor_ids]
        readings_a = {sid: 22.0 + rng.uniform(-2.0, 2.0) for sid in ids}
        readings_b = {sid: 20.0 + rng.uniform(0.0, 8.0) for sid in ids}
        waves = schedule.wave_count

        def plan(done):
            return dict(readings_a) if done == 1 else dict(readings_b)

        command = pr.Command(pr.CMD_SET_VIEWPOINT, viewpoint_cm=(800.0, 150.0, 125.0))
        sim = _Sim(dengine, total=2 + waves + 1, commands={1: command},
                   reading_plan=plan)
        _run_session(dengine, sim)

        recs = sim.records
        assert [r["band"] for r in recs] == [0] + [1] * (waves + 2)
        assert recs[0]["mode"] == pr.MODE_FULL            # opening cycle
        assert recs[1]["mode"] == pr.MODE_FULL            # band switch
        assert all(r["mode"] == pr.MODE_DELTA for r in recs[2:])

        # engine-side truth: the full band-switch cycle streamed A, the
        # engine now holds B
        level_a32 = recs[1]["values"]
        level_b32 = dengine.level(dengine.snapshot(), 1).values.astype(np.float32)
        changed_ref = np.flatnonzero(level_a32 != level_b32)
        assert changed_ref.size > 0
        assert np.array_equal(recs[-1]["values"], level_b32)

        sent = [r["delta_ids"] for r in recs[2:]]
        all_sent = np.concatenate(sent)
        assert all_sent.size == np.unique(all_sent).size  # each at most once
        assert np.array_equal(np.sort(all_sent), changed_ref)
        for k, ids_k in enumerate(sent[:waves]):
            assert np.isin(ids_k, schedule.waves[k]).all()
        assert sent[waves].size == 0                      # drained sweep
        note["detail"] = (
            f"{len(sizes)} waves over {grid.count} particles, "
            f"{changed_ref.size} changed ids drained in one sweep"
        )


def test_realtime_budget(aengine, capsys):
    wm, grid = aengine.wm, aengine.grid
    rng = np.random.default_rng(31)
    readings = rng.uniform(16.0, 30.0, (500, wm.sensor_ids.size))
    wire_ids = np.arange(grid.count, dtype=np.int64)
    positions = grid.positions()
    sensor_ids = wm.sensor_ids
    sensor_pos = _id_sorted_positions(aengine.sensors)
    room = (grid.room.length, grid.room.width, grid.room.height)
    with criterion(capsys, "real-time budget", budget_s=120.0) as note:
        out = np.empty(grid.count)
        t0 = time.perf_counter()
        for t in range(500):
            vals = interpolate(wm, readings[t], out=out)
            pr.encode_header(pr.MODE_FULL, t, sensor_ids.size, grid.count, room, 0)
            spayload = pr.encode_sensors_full(sensor_ids, sensor_pos, readings[t])
            ppayload = pr.encode_particles_full(wire_ids, positions, vals)
            pr.encode_footer(t, pr.payload_crc(spayload, ppayload))
        elapsed = time.perf_counter() - t0
        tps = 500.0 / elapsed
        assert tps >= 24.0
        note["detail"] = (
            f"{tps:.0f} ticks/s over 500 ticks ({tps / 24.0:.1f}x the 24/s "
            f"budget, backend {kernels.BACKEND})"
        )


def test_band_switching(capsys):
    cfg = load_config(None)
    cfg.server.port = 0
    assert tuple(cfg.bands.thresholds_cm)[:3] == (500.0, 1000.0, 1500.0)
    server = StreamServer(cfg)
    server.start()
    try:
        with criterion(capsys, "band switching", budget_s=120.0) as note:
            script = [
                (2, pr.Command(pr.CMD_SET_VIEWPOINT,
                               viewpoint_cm=(800.0, 150.0, 125.0))),
                (4, pr.Command(pr.CMD_SET_VIEWPOINT,
                               viewpoint_cm=(1400.0, 150.0, 125.0))),
                (6, pr.Command(pr.CMD_SET_VIEWPOINT,
                               viewpoint_cm=(2700.0, 150.0, 125.0))),
            ]
            client = StreamClient("127.0.0.1", server.tcp_port, cycles=9,
                                  script=script)
            assert client.run() == 0
            bands = [s.band for s in client.stats]
            counts = [s.header_particle_count for s in client.stats]
            assert bands == [0, 0, 1, 1, 2, 2, 3, 3, 3]
            assert counts == [120000, 120000, 30000, 30000,
                              7500, 7500, 1875, 1875, 1875]
            note["detail"] = f"bands {bands}, counts 120000/30000/7500/1875"
    finally:
        server.stop()
