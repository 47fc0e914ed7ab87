"""Command-line interface.

Node subcommands (master / controller / follower) launch long-running
processes directly. Everything else is a thin client over the HTTP API:
with --server it talks to a running service, otherwise it spins the FastAPI
app up in-process and speaks ASGI to it, so the same endpoints back both
paths.
"""

from __future__ import annotations

import asyncio
import csv
import json
import signal
import sys
import threading
from pathlib import Path

import click
import httpx

from . import net


def _call_api(server: str | None, config: str | None, method: str, path: str,
              body: dict | None = None) -> dict:
    if server:
        resp = httpx.request(method, server.rstrip("/") + path, json=body, timeout=300.0)
    else:
        from .service import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app(config_path=config))
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://nuexo.local") as client:
                return await client.request(method, path, json=body, timeout=300.0)

        resp = asyncio.run(go())
    if resp.status_code >= 400:
        detail = resp.json().get("detail", resp.text) if resp.content else resp.text
        raise click.ClickException(f"{path}: {detail}")
    return resp.json()


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    click.echo(f"wrote {path}")


server_option = click.option("--server", default=None, metavar="URL",
                             help="Remote API service; default runs in-process.")
config_option = click.option("--config", default=None, metavar="FILE",
                             help="System configuration file.")


@click.group()
def main():
    """Desk-scale teleoperation stack: kinematics, control, nodes, logs, benchmarks."""


# --- node processes ---------------------------------------------------------------

def _install_stop(stop: threading.Event) -> None:
    def handler(signum, frame):
        del signum, frame
        stop.set()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, handler)
        except ValueError:
            pass   # not the main thread (tests)


@main.command()
@click.option("--endpoint", default="127.0.0.1:7401", show_default=True)
@config_option
@click.option("--rate", default=500, show_default=True, help="Tick rate in Hz.")
@click.option("--duration", default=None, type=float, help="Stop after N seconds.")
@click.option("--replay", default=None, metavar="LOGFILE",
              help="Replay a recorded log instead of the synthetic trajectory.")
@click.option("--amplitude", default=0.4, show_default=True)
@click.option("--frequency", default=0.5, show_default=True)
def master(endpoint, config, rate, duration, replay, amplitude, frequency):
    """Run the master node (simulated exoskeleton source)."""
    cfg = net.NodeConfig("master", endpoint=endpoint, tick_hz=rate, replay=replay,
                         duration=duration, config_path=config)
    stop = threading.Event()
    _install_stop(stop)
    source = None
    if replay is None:
        from .nodes import SinusoidSource
        source = SinusoidSource(amplitude=amplitude, frequency=frequency)
    net.run_master(cfg, source=source, stop=stop)


@main.command()
@click.option("--endpoint", default="127.0.0.1:7401", show_default=True)
@config_option
@click.option("--rate", default=500, show_default=True)
@click.option("--duration", default=None, type=float)
@click.option("--preset", default="default", show_default=True,
              help="Follower preset the controller models.")
@click.option("--followers", default="1", show_default=True,
              help="Comma-separated follower ids to drive.")
@click.option("--console-port", default=None, type=int,
              help="Serve the operator console and API on this port.")
@click.option("--embed-followers", is_flag=True,
              help="Simulate the followers inside this process.")
def controller(endpoint, config, rate, duration, preset, followers, console_port,
               embed_followers):
    """Run the teleoperation controller node."""
    ids = tuple(int(x) for x in followers.split(",") if x.strip())
    cfg = net.NodeConfig("controller", endpoint=endpoint, tick_hz=rate,
                         duration=duration, preset=preset, follower_ids=ids,
                         config_path=config, console_port=console_port,
                         embed_followers=embed_followers)
    stop = threading.Event()
    _install_stop(stop)
    runtime = net.ControllerRuntime(cfg)
    if console_port is None:
        net.run_controller(cfg, stop=stop, runtime=runtime)
        return
    import uvicorn

    from .service import create_app
    app = create_app(runtime=runtime)
    click.echo(f"operator console on http://127.0.0.1:{console_port}/")
    uvicorn.run(app, host="0.0.0.0", port=console_port, log_level="warning")


@main.command()
@click.option("--endpoint", default="127.0.0.1:7401", show_default=True)
@config_option
@click.option("--rate", default=500, show_default=True)
@click.option("--duration", default=None, type=float)
@click.option("--preset", default="default", show_default=True)
@click.option("--id", "follower_id", default=1, show_default=True)
def follower(endpoint, config, rate, duration, preset, follower_id):
    """Run a simulated follower robot node."""
    cfg = net.NodeConfig("follower", endpoint=endpoint, tick_hz=rate,
                         duration=duration, preset=preset, follower_id=follower_id,
                         config_path=config)
    stop = threading.Event()
    _install_stop(stop)
    net.run_follower(cfg, stop=stop)


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@config_option
def serve(port, host, config):
    """Run the standalone HTTP API service (no live controller)."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(config_path=config), host=host, port=port,
                log_level="info")


# --- kinematics tooling ----------------------------------------------------------------

@main.group()
def kin():
    """Kinematics tables and queries."""


@kin.command("sweep")
@server_option
@config_option
@click.option("--out", default=".", show_default=True, metavar="DIR")
@click.option("--steps", default=101, show_default=True)
@click.option("--theta-max", default=1.0, show_default=True,
              help="Linkage motor sweep end (rad).")
def kin_sweep(server, config, out, steps, theta_max):
    """Write the shoulder-center displacement and ROM sweep tables as CSV."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gh = _call_api(server, config, "POST", "/api/kin/gh-sweep",
                   {"start": 0.0, "stop": theta_max, "steps": steps})
    rows = [[f"{t:.6g}", f"{d[0]:.6g}", f"{d[1]:.6g}", f"{d[2]:.6g}"]
            for t, d in zip(gh["theta1"], gh["displacement"])]
    _write_csv(out_dir / "gh_displacement.csv",
               ["theta1_rad", "forward_m", "lateral_m", "vertical_m"], rows)
    rom = _call_api(server, config, "POST", "/api/kin/rom-sweep", {"steps": steps})
    rows = [[r["axis"], f"{r['angle']:.6g}", int(r["within"])] for r in rom["rows"]]
    _write_csv(out_dir / "rom_sweep.csv", ["axis", "angle_rad", "within"], rows)


@kin.command("fk")
@server_option
@config_option
@click.argument("angles")
def kin_fk(server, config, angles):
    """Forward kinematics for comma-separated joint ANGLES (rad)."""
    values = [float(x) for x in angles.split(",")]
    resp = _call_api(server, config, "POST", "/api/kin/fk", {"angles": values})
    click.echo(json.dumps(resp, indent=2))


# --- controller tooling --------------------------------------------------------------------

@main.group()
def ctl():
    """Controller evaluation."""


@ctl.command("step")
@server_option
@config_option
@click.argument("input_file", type=click.Path(exists=True, allow_dash=True))
def ctl_step(server, config, input_file):
    """Evaluate one controller tick per JSON line of INPUT_FILE ('-' = stdin).

    Each line holds {"master": {...}, "follower": {...}, ...} in the
    /api/ctl/step request schema; one JSON result line is printed per input.
    """
    fh = sys.stdin if input_file == "-" else open(input_file)
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                body = json.loads(line)
            except json.JSONDecodeError as exc:
                raise click.ClickException(f"line {lineno}: invalid JSON ({exc})")
            resp = _call_api(server, config, "POST", "/api/ctl/step", body)
            click.echo(json.dumps(resp))
    finally:
        if fh is not sys.stdin:
            fh.close()


# --- log tooling ------------------------------------------------------------------------------

@main.group("log")
def log_group():
    """Telemetry log tooling."""


@log_group.command("inspect")
@server_option
@config_option
@click.argument("logfile", type=click.Path())
def log_inspect(server, config, logfile):
    """Print header and per-stream statistics of LOGFILE."""
    resp = _call_api(server, config, "POST", "/api/log/inspect",
                     {"path": str(Path(logfile).absolute())})
    click.echo(f"{resp['path']}: {resp['total_records']} records")
    for s in resp["streams"]:
        span = ""
        if s["records"]:
            dt = (s["last_timestamp_us"] - s["first_timestamp_us"]) * 1e-6
            span = f" over {dt:.3f}s"
        click.echo(f"  stream {s['stream_id']:>2} {s['name']:<16} dims={s['dims']:<3}"
                   f" units={s['units']:<16} records={s['records']}{span}")


@log_group.command("export")
@server_option
@config_option
@click.argument("logfile", type=click.Path())
@click.option("--csv", "csv_dir", required=True, metavar="DIR",
              help="Directory receiving one CSV per stream.")
def log_export(server, config, logfile, csv_dir):
    """Export LOGFILE to one CSV file per stream."""
    resp = _call_api(server, config, "POST", "/api/log/export",
                     {"path": str(Path(logfile).absolute()),
                      "out_dir": str(Path(csv_dir).absolute())})
    for f in resp["files"]:
        click.echo(f"wrote {f}")


# --- benchmarks ---------------------------------------------------------------------------------

@main.group()
def bench():
    """Reproducible benchmarks."""


@bench.command("drift")
@server_option
@config_option
@click.option("--seeds", default=20, show_default=True)
@click.option("--out", default="bench_out", show_default=True, metavar="DIR")
def bench_drift(server, config, seeds, out):
    """Encoder vs inertial-capture drift benchmark across seeds."""
    resp = _call_api(server, config, "POST", "/api/bench/drift",
                     {"seeds": seeds, "out_dir": str(Path(out).absolute())})
    click.echo(f"encoder phase-invariant: {resp['encoder_phase_invariant']}")
    click.echo(f"wrote {resp['csv_path']}")
    click.echo(f"wrote {resp['spectrum_path']}")
    worst = max(abs(r["static_avg_deviation"]) for r in resp["rows"]
                if r["system"] == "exo")
    click.echo(f"worst encoder static avg deviation: {worst:.4f} rad")


if __name__ == "__main__":
    main()
