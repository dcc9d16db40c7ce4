"""Backend benchmark: compiled kernels against the numpy fallback.

Measures the three hot kernels in isolation, then a full tick (interpolate
plus full-mode encode of the 30000-particle level) against the 24 ticks per
second budget.
"""

from __future__ import annotations

import json
import time

import numpy as np

from . import protocol as pr
from .config import ServerConfig
from .delaunay import tetrahedralize
from .grid import build_grid
from .kernels import available_backends
from .segmentation import EPS_BARY, _canonical_order, _tet_geometry, locate

TARGET_TICKS_PER_S = 24.0


def _time(fn, repeat: int = 3) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(ticks: int = 200) -> dict:
    config = ServerConfig()
    room = config.build_room()
    sensors = config.build_sensors()
    grid = build_grid(room, tuple(config.grid.dims))
    mesh = tetrahedralize(sensors)
    ids, pos = _canonical_order(sensors)
    wm = locate(grid, mesh, sensors)

    id_index = {int(s): i for i, s in enumerate(ids)}
    vert_idx, coords, inv, origin = _tet_geometry(mesh, id_index, pos)
    margin = 1e-8 * room.diagonal
    spacing = np.asarray(grid.spacing)
    dims = np.asarray(grid.dims)
    idx_lo = np.maximum(np.ceil((coords.min(axis=1) - margin) / spacing).astype(np.int64), 0)
    idx_hi = np.minimum(np.floor((coords.max(axis=1) + margin) / spacing).astype(np.int64), dims - 1)

    rng = np.random.default_rng(7)
    readings = [rng.uniform(16.0, 30.0, ids.size) for _ in range(ticks)]
    wire_ids = np.arange(grid.count, dtype=np.int64)
    positions = grid.positions()

    results: dict = {"particles": grid.count, "ticks": ticks, "backends": {}}
    for name, mod in sorted(available_backends().items()):
        expansion_s = _time(lambda: mod.nearest_expansion(grid.dims, grid.spacing, pos))
        locate_s = _time(lambda: mod.locate_particles(
            grid.dims, grid.spacing, idx_lo, idx_hi, inv, origin, EPS_BARY))
        gather_s = _time(lambda: mod.interpolate_gather(wm.verts, wm.weights, readings[0]),
                         repeat=10)

        t0 = time.perf_counter()
        for r in readings:
            values = mod.interpolate_gather(wm.verts, wm.weights, r)
            payload = pr.encode_particles_full(wire_ids, positions, values)
            pr.payload_crc(b"", payload)
        tick_s = (time.perf_counter() - t0) / ticks
        results["backends"][name] = {
            "expansion_ms": expansion_s * 1e3,
            "locate_ms": locate_s * 1e3,
            "gather_us": gather_s * 1e6,
            "tick_ms": tick_s * 1e3,
            "ticks_per_s": 1.0 / tick_s,
        }
    return results


def format_report(results: dict) -> str:
    lines = [
        f"backend benchmark: {results['particles']} particles, "
        f"{results['ticks']} ticks averaged",
        f"{'backend':<10}{'expansion':>12}{'locate':>12}{'gather':>12}"
        f"{'tick':>12}{'ticks/s':>10}",
    ]
    for name, r in results["backends"].items():
        lines.append(
            f"{name:<10}{r['expansion_ms']:>10.1f}ms{r['locate_ms']:>10.1f}ms"
            f"{r['gather_us']:>10.0f}us{r['tick_ms']:>10.2f}ms{r['ticks_per_s']:>10.0f}"
        )
    back = results["backends"]
    if "native" in back and "python" in back:
        lines.append(
            "native speedup: expansion x{:.0f}, locate x{:.0f}, gather x{:.1f}, "
            "tick x{:.1f}".format(
                back["python"]["expansion_ms"] / back["native"]["expansion_ms"],
                back["python"]["locate_ms"] / back["native"]["locate_ms"],
                back["python"]["gather_us"] / back["native"]["gather_us"],
                back["python"]["tick_ms"] / back["native"]["tick_ms"],
            )
        )
    worst = min(r["ticks_per_s"] for r in back.values())
    verdict = "meets" if worst >= TARGET_TICKS_PER_S else "MISSES"
    lines.append(
        f"slowest backend {verdict} the {TARGET_TICKS_PER_S:.0f} ticks/s budget "
        f"({worst:.0f} ticks/s)"
    )
    return "\n".join(lines)


def main(ticks: int = 200, as_json: bool = False) -> None:
    results = run_bench(ticks)
    if as_json:
        print(json.dumps(results, indent=2))
    else:
        print(format_report(results))
