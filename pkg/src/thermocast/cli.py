"""Command line entry points."""

from __future__ import annotations

import logging
import sys

import click

from . import protocol as pr
from .config import ServerConfig, load_config
from .errors import ThermocastError


def _parse_triple(text: str, label: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise click.BadParameter(f"{label} must be x,y,z")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise click.BadParameter(f"{label} must be numeric x,y,z") from None


@click.group()
def main() -> None:
    """Temperature field streaming: server, client and field tools."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config; defaults apply without it.")
@click.option("--host", default=None, help="Override server.host.")
@click.option("--port", type=int, default=None, help="Override server.port.")
@click.option("--web/--no-web", "web", default=None,
              help="Serve the websocket/static front end.")
@click.option("--web-port", type=int, default=None, help="Override server.web_port.")
@click.option("--static-dir", type=click.Path(), default=None,
              help="Directory of viewer files to serve at /.")
@click.option("--ticks", type=int, default=None,
              help="Stop after this many ticks (development aid).")
@click.option("--log-level", default="info",
              type=click.Choice(["debug", "info", "warning", "error"]))
def serve(config_path, host, port, web, web_port, static_dir, ticks, log_level):
    """Run the streaming server."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    from .server import StreamServer

    config = load_config(config_path)
    if host is not None:
        config.server.host = host
    if port is not None:
        config.server.port = port
    if web is not None:
        config.server.web = web
    if web_port is not None:
        config.server.web_port = web_port
    if static_dir is not None:
        config.server.static_dir = static_dir
        config.server.web = True
    try:
        StreamServer(config, max_ticks=ticks).run_forever()
    except ThermocastError as e:
        raise click.ClickException(str(e)) from None


@main.group()
def client() -> None:
    """Talk to a running server."""


def _client_options(fn):
    fn = click.option("--host", default="127.0.0.1", show_default=True)(fn)
    fn = click.option("--port", type=int, default=4040, show_default=True)(fn)
    return fn


@client.command("run")
@_client_options
@click.option("--cycles", type=int, default=None, help="Stop after N cycles.")
@click.option("--duration", type=float, default=None, help="Stop after N seconds.")
@click.option("--mode", type=click.Choice(["full", "delta"]), default=None,
              help="Request this mode after the first cycle.")
@click.option("--viewpoint", default=None,
              help="Viewer position in cm as x,y,z; sent after the first cycle.")
@click.option("--move", "moves", multiple=True,
              help="Scripted move CYCLE:x,y,z (cm), repeatable.")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write one JSON line of stats per cycle.")
def client_run(host, port, cycles, duration, mode, viewpoint, moves, report_path):
    """Mirror the stream and report per-cycle stats."""
    from .client import StreamClient

    script = []
    for item in moves:
        head, _, tail = item.partition(":")
        try:
            after = int(head)
        except ValueError:
            raise click.BadParameter(f"--move needs CYCLE:x,y,z, got {item!r}") from None
        script.append((after, pr.Command(
            pr.CMD_SET_VIEWPOINT, viewpoint_cm=_parse_triple(tail, "--move position"))))
    runner = StreamClient(
        host, port,
        cycles=cycles,
        duration_s=duration,
        mode=None if mode is None else (pr.MODE_FULL if mode == "full" else pr.MODE_DELTA),
        viewpoint_cm=None if viewpoint is None else _parse_triple(viewpoint, "--viewpoint"),
        script=script,
        report_path=report_path,
    )
    code = runner.run()
    if code == 0 and runner.stats:
        last = runner.stats[-1]
        click.echo(
            f"{len(runner.stats)} cycles, last tick {last.tick}, band {last.band}, "
            f"{last.mirror_particles} particles mirrored"
        )
    sys.exit(code)


@client.command("verify")
@_client_options
@click.option("--cycles", type=int, default=10, show_default=True)
@click.option("--tolerance", type=float, default=1e-3, show_default=True,
              help="Slack for the value-bounds check, in degrees.")
def client_verify(host, port, cycles, tolerance):
    """Audit protocol and field invariants against a live server."""
    from .client import verify_stream

    sys.exit(verify_stream(host, port, cycles=cycles, tolerance=tolerance))


@client.command("export")
@_client_options
@click.option("--out", "out_csv", type=click.Path(), required=True,
              help="CSV of the mirrored field (id,x,y,z,value).")
@click.option("--meta", "meta_json", type=click.Path(), default=None,
              help="Optional JSON sidecar with tick/room/counts.")
def client_export(host, port, out_csv, meta_json):
    """Pull one full cycle and write the field to CSV."""
    from .client import export_snapshot

    sys.exit(export_snapshot(host, port, out_csv, meta_json))


def _build_engine(config_path):
    from .server import FieldEngine, reading_source

    config = load_config(config_path)
    engine = FieldEngine(config)
    batch = next(iter(reading_source(config, engine.sensors)))
    engine.apply_batch(batch.readings)
    return config, engine


@main.command("dump-weights")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_csv", type=click.Path(), required=True)
def dump_weights(config_path, out_csv):
    """Write the particle weight map (region and stencil per particle)."""
    try:
        _, engine = _build_engine(config_path)
    except ThermocastError as e:
        raise click.ClickException(str(e)) from None
    engine.wm.to_csv(out_csv)
    click.echo(
        f"{engine.wm.count} particles ({engine.wm.inside_count} inside, "
        f"{engine.wm.outside_count} outside) -> {out_csv}"
    )


@main.command("dump-lod")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--band", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", type=click.Path(), required=True)
def dump_lod(config_path, band, out_csv):
    """Write one LOD level (after a single reading batch) as CSV."""
    try:
        config, engine = _build_engine(config_path)
        level = engine.level(engine.snapshot(), band)
    except (ThermocastError, ValueError) as e:
        raise click.ClickException(str(e)) from None
    ids = level.wire_ids()
    with open(out_csv, "w") as f:
        f.write("id,x,y,z,value\n")
        for i in range(level.count):
            x, y, z = level.positions[i]
            f.write(f"{ids[i]},{x!r},{y!r},{z!r},{level.values[i]!r}\n")
    click.echo(f"{config.stream.lod} band {band}: {level.count} points -> {out_csv}")


@main.command("gen-layout")
@click.option("--count", type=int, default=35, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--room", "room_lwh", default="4,3,2.5", show_default=True,
              help="Room length,width,height in meters.")
@click.option("--layers", default="0,1,2", show_default=True,
              help="Sensor layer heights in meters, comma separated.")
@click.option("--out", "out_csv", type=click.Path(), required=True)
def gen_layout(count, seed, room_lwh, layers, out_csv):
    """Generate a jittered sensor layout CSV."""
    from .grid import Room, default_layout

    l, w, h = _parse_triple(room_lwh, "--room")
    layer_heights = tuple(float(x) for x in layers.split(","))
    try:
        sensors = default_layout(count=count, layers=layer_heights,
                                 room=Room(l, w, h), seed=seed)
    except ValueError as e:
        raise click.ClickException(str(e)) from None
    sensors.to_csv(out_csv)
    click.echo(f"{len(sensors)} sensors on layers {layer_heights} -> {out_csv}")


@main.command("bench")
@click.option("--ticks", type=int, default=200, show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def bench(ticks, as_json):
    """Compare the compiled kernels against the pure-Python fallback."""
    from .bench import main as bench_main

    bench_main(ticks=ticks, as_json=as_json)


if __name__ == "__main__":
    main()
