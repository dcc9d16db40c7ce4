"""Sensor reading sources: CSV replay and a synthetic generator.

Both yield ReadingBatch objects, one per timestamp, in timestamp order. The
CSV format is a header row ``timestamp,sensor_id,value`` followed by one row
per reading; consecutive rows sharing a timestamp form one batch.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import IngestError
from .grid import SensorSet

_CSV_HEADER = ["timestamp", "sensor_id", "value"]


@dataclass(frozen=True)
class ReadingBatch:
    """All readings that share one timestamp (seconds)."""

    timestamp: float
    readings: dict[int, float] = field(default_factory=dict)


def _parse_row(row: list[str], line: int, sensors: SensorSet | None):
    if len(row) != 3:
        raise IngestError(f"line {line}: expected 3 columns, got {len(row)}")
    try:
        ts = float(row[0])
    except ValueError:
        raise IngestError(f"line {line}: bad timestamp {row[0]!r}") from None
    try:
        sid = int(row[1])
    except ValueError:
        raise IngestError(f"line {line}: bad sensor id {row[1]!r}") from None
    try:
        value = float(row[2])
    except ValueError:
        raise IngestError(f"line {line}: bad value {row[2]!r}") from None
    if not math.isfinite(ts):
        raise IngestError(f"line {line}: timestamp must be finite, got {row[0]}")
    if not math.isfinite(value):
        raise IngestError(f"line {line}: value must be finite, got {row[2]}")
    if sensors is not None and sid not in sensors.id_to_index():
        raise IngestError(f"line {line}: unknown sensor id {sid}")
    return ts, sid, value


def read_csv_batches(path: str | Path, sensors: SensorSet | None = None) -> list[ReadingBatch]:
    """Parse a readings CSV into batches, with line-numbered diagnostics.

    Timestamps must be non-decreasing; within a batch, a repeated sensor id
    keeps the last value.
    """
    batches: list[ReadingBatch] = []
    current_ts: float | None = None
    current: dict[int, float] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("line 1: empty file, expected header "
                              + ",".join(_CSV_HEADER)) from None
        if [c.strip() for c in header] != _CSV_HEADER:
            raise IngestError(
                f"line 1: bad header {','.join(header)!r}, expected "
                + ",".join(_CSV_HEADER)
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            ts, sid, value = _parse_row(row, line, sensors)
            if current_ts is None:
                current_ts = ts
            elif ts < current_ts:
                raise IngestError(
                    f"line {line}: timestamp {ts} decreases from {current_ts}"
                )
            elif ts > current_ts:
                batches.append(ReadingBatch(current_ts, current))
                current_ts, current = ts, {}
            current[sid] = value
    if current_ts is not None:
        batches.append(ReadingBatch(current_ts, current))
    return batches


def replay_csv(path: str | Path, speed: float = 1.0,
               sensors: SensorSet | None = None,
               sleep=time.sleep) -> Iterator[ReadingBatch]:
    """Yield CSV batches, pacing by timestamp deltas scaled by 1/speed.

    Speed 0 disables pacing entirely (batches come as fast as the consumer
    pulls them); negative speeds are invalid.
    """
    if speed < 0:
        raise ValueError(f"replay speed must be >= 0, got {speed}")
    batches = read_csv_batches(path, sensors)
    previous: float | None = None
    for batch in batches:
        if speed > 0 and previous is not None and batch.timestamp > previous:
            sleep((batch.timestamp - previous) / speed)
        previous = batch.timestamp
        yield batch


def synthetic_stream(sensors: SensorSet, seed: int = 0,
                     interval_s: float = 1.0 / 24.0, base: float = 22.0,
                     amplitude: float = 4.0, period_s: float = 60.0,
                     noise: float = 0.2) -> Iterator[ReadingBatch]:
    """Endless deterministic readings: per-sensor phase-shifted sinusoid
    around `base` plus uniform noise in [-noise, noise]. The same seed always
    produces the same sequence."""
    if interval_s <= 0:
        raise ValueError(f"interval must be positive, got {interval_s}")
    if period_s <= 0:
        raise ValueError(f"period must be positive, got {period_s}")
    rng = np.random.default_rng(seed)
    ids = np.sort(sensors.ids())
    phases = rng.uniform(0.0, 2.0 * math.pi, ids.size)
    n = 0
    while True:
        t = n * interval_s
        wave = base + amplitude * np.sin(2.0 * math.pi * t / period_s + phases)
        if noise > 0:
            wave = wave + rng.uniform(-noise, noise, ids.size)
        yield ReadingBatch(t, {int(sid): float(v) for sid, v in zip(ids, wave)})
        n += 1
