"""FastAPI service wrapping the core package.

Stateless compute endpoints (kinematics, controller step, drift benchmark,
log tooling) work against the loaded system configuration; when a live
controller runtime is attached the app additionally serves the operator
console: static assets plus a WebSocket bridge that speaks the same framed
binary protocol as the node sockets.
"""

from __future__ import annotations

import asyncio
import contextlib
import csv
import math
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .. import __version__, control, drift_bench, follower_sim, kinematics, quat
from ..config import ConfigError, load_system_config
from ..datalog import LogError, LogReader
from ..net import ControllerRuntime
from ..nodes import MasterPose, TeleopController, WrenchPair
from ..protocol import MsgType, ProtocolError, WireMessage, decode_message, encode_message
from . import schemas as S

CONSOLE_RATE_HZ = 30.0


def _frame_model(frame: kinematics.Frame) -> S.FramePose:
    return S.FramePose(rotation=[float(v) for v in frame.rotation],
                       translation=[float(v) for v in frame.translation])


def _master_from_model(m: S.MasterPoseModel) -> MasterPose:
    return MasterPose(
        shoulder_q=quat.normalize(np.asarray(m.shoulder_q, dtype=float)),
        wrist_q=quat.normalize(np.asarray(m.wrist_q, dtype=float)),
        elbow=m.elbow, fingers=np.asarray(m.fingers, dtype=float),
        shoulder_w=np.asarray(m.shoulder_w, dtype=float),
        wrist_w=np.asarray(m.wrist_w, dtype=float),
        elbow_v=m.elbow_v, finger_v=np.asarray(m.finger_v, dtype=float))


def _master_to_model(m: MasterPose) -> S.MasterPoseModel:
    return S.MasterPoseModel(
        shoulder_q=[float(v) for v in m.shoulder_q],
        wrist_q=[float(v) for v in m.wrist_q], elbow=float(m.elbow),
        fingers=[float(v) for v in m.fingers],
        shoulder_w=[float(v) for v in m.shoulder_w],
        wrist_w=[float(v) for v in m.wrist_w], elbow_v=float(m.elbow_v),
        finger_v=[float(v) for v in m.finger_v])


def default_frontend_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    return candidate if candidate.exists() else None


def create_app(config_path: str | None = None,
               runtime: ControllerRuntime | None = None,
               frontend_dir: str | Path | None = None) -> FastAPI:
    system = runtime.system if runtime is not None else load_system_config(config_path)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        thread = None
        if runtime is not None:
            thread = threading.Thread(target=runtime.run, daemon=True)
            thread.start()
        yield
        if runtime is not None:
            runtime.stop.set()
            if thread is not None:
                thread.join(timeout=5)

    app = FastAPI(title="nuexo", version=__version__, lifespan=lifespan)
    app.state.runtime = runtime
    app.state.system = system

    # --- status -------------------------------------------------------------

    @app.get("/api/status", response_model=S.StatusResponse)
    def status():
        return S.StatusResponse(
            name="nuexo", version=__version__, config_path=system.source_path,
            live_controller=runtime is not None,
            followers=sorted(runtime.models) if runtime is not None else [])

    # --- kinematics -----------------------------------------------------------

    def _config_or_422(angles, velocities=None):
        try:
            return kinematics.JointConfig(angles, velocities)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/api/kin/fk", response_model=S.FkResponse)
    def kin_fk(req: S.FkRequest):
        cfg = _config_or_422(req.angles, req.velocities)
        try:
            frames = kinematics.forward_kinematics(cfg, system.chain)
            hp = kinematics.humeral_pose(cfg, system.chain)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return S.FkResponse(frames=[_frame_model(f) for f in frames],
                            humeral_pose=[float(v) for v in hp.pose],
                            euler_zyx=[float(v) for v in hp.euler],
                            gimbal_adjacent=hp.gimbal_adjacent)

    @app.post("/api/kin/jacobian", response_model=S.JacobianResponse)
    def kin_jacobian(req: S.JacobianRequest):
        cfg = _config_or_422(req.angles)
        try:
            jac = kinematics.jacobian(cfg, system.chain, link=req.link)
        except (ValueError, IndexError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return S.JacobianResponse(jacobian=jac.tolist())

    @app.post("/api/kin/coupling", response_model=S.CouplingResponse)
    def kin_coupling(req: S.CouplingRequest):
        if not math.isfinite(req.theta1):
            raise HTTPException(status_code=422, detail="theta1 must be finite")
        t21, t22, t3 = kinematics.coupled_linkage_angles(req.theta1, system.coupling)
        return S.CouplingResponse(theta_2_1=t21, theta_2_2=t22, theta_3=t3,
                                  theta2_total=t21 + t3)

    @app.post("/api/kin/rom-check", response_model=S.RomCheckResponse)
    def kin_rom_check(req: S.RomCheckRequest):
        cfg = _config_or_422(req.angles)
        report = kinematics.check_rom(cfg, system.rom)
        return S.RomCheckResponse(
            axes={name: S.AxisVerdictModel(value=v.value, min_rad=v.min_rad,
                                           max_rad=v.max_rad, within=v.within)
                  for name, v in report.axes.items()},
            ok=report.ok)

    @app.get("/api/kin/rom-limits", response_model=S.RomLimitsResponse)
    def kin_rom_limits():
        return S.RomLimitsResponse(axes={
            name: {"min": lim.min_rad, "max": lim.max_rad, "joint": lim.joint}
            for name, lim in system.rom.axes.items()})

    @app.post("/api/kin/gh-sweep", response_model=S.GhSweepResponse)
    def kin_gh_sweep(req: S.GhSweepRequest):
        coupling = system.coupling
        if req.gain is not None:
            coupling = kinematics.ShoulderCoupling(
                l1=coupling.l1, l2=coupling.l2, theta_e=coupling.theta_e,
                gain=req.gain, offset=coupling.offset)
        sweep = np.linspace(req.start, req.stop, req.steps)
        disp = kinematics.gh_center_displacement(sweep, coupling)
        return S.GhSweepResponse(theta1=sweep.tolist(), displacement=disp.tolist())

    @app.post("/api/kin/rom-sweep", response_model=S.RomSweepResponse)
    def kin_rom_sweep(req: S.RomSweepRequest):
        rows = []
        for name, lim in system.rom.axes.items():
            angles = np.linspace(lim.min_rad - req.margin_rad,
                                 lim.max_rad + req.margin_rad, req.steps)
            for angle in angles:
                q = np.zeros(system.chain.n_active)
                q[lim.joint] = angle
                report = kinematics.check_rom(kinematics.JointConfig(q), system.rom)
                rows.append(S.RomSweepRow(axis=name, angle=float(angle),
                                          within=report.axes[name].within))
        return S.RomSweepResponse(rows=rows)

    # --- controller -------------------------------------------------------------

    @app.post("/api/ctl/step", response_model=S.CtlStepResponse)
    def ctl_step(req: S.CtlStepRequest):
        try:
            model = follower_sim.make_model(req.preset)
        except (ConfigError, OSError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        controller = TeleopController(system.gains, system.tremor, {1: model})
        cfg = _config_or_422(req.follower.angles, req.follower.velocities)
        state = follower_sim.FollowerState(cfg, np.zeros(follower_sim.N_JOINTS), 0.0)
        meas = follower_sim.measure(state, model)
        controller.update_follower(1, meas, 0)
        wrench = None
        if req.wrench_upper is not None or req.wrench_forearm is not None:
            wrench = WrenchPair(
                upper=np.asarray(req.wrench_upper or [0.0] * 6, dtype=float),
                forearm=np.asarray(req.wrench_forearm or [0.0] * 6, dtype=float))
        try:
            result = controller.tick(0, _master_from_model(req.master), wrench)
        except (ValueError, quat.NonUnitQuaternionError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        ref = result.reference
        err = control.quat_error(meas.shoulder_pose, ref.shoulder_q)
        return S.CtlStepResponse(torques=result.commands[1].tolist(),
                                 shoulder_error_angle=quat.rotation_angle(err),
                                 reference=_master_to_model(ref))

    # --- drift benchmark ----------------------------------------------------------

    @app.post("/api/bench/drift", response_model=S.BenchDriftResponse)
    def bench_drift(req: S.BenchDriftRequest):
        result = drift_bench.run_benchmark(req.seeds, out_dir=req.out_dir)
        rows = []
        for start, after in result.reports:
            for report in (start, after):
                for axis in drift_bench.AXES:
                    for sysname in drift_bench.SYSTEMS:
                        s = report.axes[axis][sysname]
                        rows.append(S.DriftRow(
                            phase=report.phase, axis=axis, system=sysname,
                            max_deviation=s.max_dev, avg_deviation=s.avg_dev,
                            static_max_deviation=s.static_max,
                            static_avg_deviation=s.static_avg))
        return S.BenchDriftResponse(
            rows=rows, encoder_phase_invariant=result.encoder_phase_invariant(),
            csv_path=str(result.csv_path) if result.csv_path else None,
            spectrum_path=str(result.spectrum_path) if result.spectrum_path else None)

    # --- log tooling -----------------------------------------------------------------

    def _open_log(path: str) -> LogReader:
        try:
            return LogReader(path)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"no such log: {path}") from exc
        except LogError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/api/log/inspect", response_model=S.LogInspectResponse)
    def log_inspect(req: S.LogInspectRequest):
        reader = _open_log(req.path)
        counts = reader.stream_counts()
        streams = []
        for sid, info in sorted(reader.streams.items()):
            recs = reader.stream_records(sid)
            streams.append(S.StreamSummary(
                stream_id=sid, name=info.name, dims=info.dims, units=info.units,
                records=counts[sid],
                first_timestamp_us=recs[0].timestamp_us if recs else None,
                last_timestamp_us=recs[-1].timestamp_us if recs else None))
        return S.LogInspectResponse(path=str(reader.path),
                                    total_records=len(reader), streams=streams)

    @app.post("/api/log/master-frames", response_model=S.MasterFramesResponse)
    def log_master_frames(req: S.MasterFramesRequest):
        """Recorded master stream as replayable 28-float payloads (console playback)."""
        reader = _open_log(req.path)
        fingers = {r.timestamp_us: r.payload for r in reader.stream_records(3)}
        times, frames = [], []
        for rec in reader.stream_records(2):
            finger = fingers.get(rec.timestamp_us)
            if finger is None:
                continue
            pose = MasterPose.from_stream_payloads(rec.payload, finger)
            times.append(rec.timestamp_us)
            frames.append(pose.to_payload().tolist())
        if not frames:
            raise HTTPException(status_code=422,
                                detail="log has no replayable master records")
        return S.MasterFramesResponse(times_us=times, frames=frames)

    @app.post("/api/log/export", response_model=S.LogExportResponse)
    def log_export(req: S.LogExportRequest):
        reader = _open_log(req.path)
        out_dir = Path(req.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for sid, info in sorted(reader.streams.items()):
            out = out_dir / f"stream_{sid}_{info.name}.csv"
            with open(out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["timestamp_us"] + [f"v{i}" for i in range(info.dims)])
                for rec in reader.stream_records(sid):
                    writer.writerow([rec.timestamp_us]
                                    + [f"{v:.17g}" for v in rec.payload])
            files.append(str(out))
        return S.LogExportResponse(files=files)

    # --- operator console bridge ----------------------------------------------------

    if runtime is not None:
        @app.websocket("/ws/console")
        async def console_ws(ws: WebSocket):
            await ws.accept()
            await ws.send_json({
                "type": "hello",
                "followers": sorted(runtime.models),
                "tick_hz": runtime.cfg.tick_hz,
                "rom": {name: {"min": lim.min_rad, "max": lim.max_rad}
                        for name, lim in system.rom.axes.items()},
            })

            async def sender():
                seq = 0
                while True:
                    await asyncio.sleep(1.0 / CONSOLE_RATE_HZ)
                    snap = runtime.snapshot()
                    seq += 1
                    ref = snap["reference"]
                    if ref is not None:
                        await ws.send_bytes(encode_message(WireMessage(
                            MsgType.MASTER_STATE, 0, seq, ref.to_payload())))
                    for fid, payload in snap["measurements"].items():
                        await ws.send_bytes(encode_message(WireMessage(
                            MsgType.FOLLOWER_STATE, fid, seq, payload)))
                    await ws.send_json({
                        "type": "telemetry", "tick": snap["tick"],
                        "events": snap["events"],
                        "force": (float(np.linalg.norm(runtime.console_wrench.upper))
                                  if runtime.console_wrench is not None else 0.0),
                    })

            task = asyncio.create_task(sender())
            try:
                while True:
                    msg = await ws.receive()
                    if msg.get("type") == "websocket.disconnect":
                        break
                    if msg.get("bytes"):
                        try:
                            decoded, _ = decode_message(msg["bytes"])
                        except ProtocolError:
                            continue
                        if decoded is None:
                            continue
                        if decoded.msg_type == MsgType.MASTER_STATE \
                                and len(decoded.payload) == 28:
                            runtime.set_console_master(
                                MasterPose.from_payload(decoded.payload))
                    elif msg.get("text"):
                        pass   # reserved for console control commands
            except WebSocketDisconnect:
                pass
            finally:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task

    # --- static console assets --------------------------------------------------------

    front = Path(frontend_dir) if frontend_dir is not None else default_frontend_dir()
    if front is not None and front.exists():
        # registered last: /api and /ws routes keep precedence
        app.mount("/", StaticFiles(directory=front, html=True), name="console")

    return app
