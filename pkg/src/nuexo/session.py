"""Deterministic single-process teleoperation sessions.

One virtual clock drives master sampling, the controller tick and the
follower integrators in lockstep; every exchanged value is logged on the six
session streams. Replay rebuilds the master-side streams from a recorded log
and re-runs the identical engine, which reproduces the torque-command stream
byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datalog, follower_sim, quat
from .config import SystemConfig
from .datalog import SESSION_STREAMS, LogReader, LogWriter, StreamInfo
from .follower_sim import FollowerModel, FollowerState
from .nodes import (MasterPose, TeleopController, WanderImu, WrenchPair,
                    follower_state_payload)

SIM_DT = 0.001
CONTROL_HZ = 500
ODOMETRY_HZ = 100


@dataclass
class SessionResult:
    ticks: int
    control_hz: int
    log_path: Path | None
    times: np.ndarray
    shoulder_error: dict[int, np.ndarray]
    elbow_error: dict[int, np.ndarray]
    final_states: dict[int, FollowerState]
    events: list[tuple[int, str]] = field(default_factory=list)


def session_streams() -> list[StreamInfo]:
    return [StreamInfo(sid, name, dims, units)
            for sid, (name, dims, units) in SESSION_STREAMS.items()]


class _Engine:
    """Shared per-tick machinery for live sessions and replays."""

    def __init__(self, system: SystemConfig, followers: dict[int, FollowerModel],
                 control_hz: int, sim_dt: float, writer: LogWriter | None,
                 encoder_sigma: float = 0.0, seed: int = 0):
        if not 50 <= control_hz <= 1000:
            raise ValueError("control rate must be within 50..1000 Hz")
        self.control_hz = control_hz
        self.period_us = round(1_000_000 / control_hz)
        substeps = max(1, round((self.period_us * 1e-6) / sim_dt))
        self.substeps = substeps
        self.sub_dt = (self.period_us * 1e-6) / substeps
        self.writer = writer
        self.models = dict(followers)
        self.controller = TeleopController(system.gains, system.tremor, self.models)
        self.states = {fid: follower_sim.initial_state(m) for fid, m in self.models.items()}
        self.meas = {fid: follower_sim.measure(self.states[fid], m)
                     for fid, m in self.models.items()}
        self.encoder_sigma = encoder_sigma
        self.rng = np.random.default_rng(seed) if encoder_sigma > 0 else None
        self.shoulder_error = {fid: [] for fid in self.models}
        self.elbow_error = {fid: [] for fid in self.models}
        self.events: list[tuple[int, str]] = []

    def _log(self, stream_id: int, t_us: int, payload) -> None:
        if self.writer is not None:
            self.writer.append(stream_id, t_us, payload)

    def run_tick(self, k: int, t_us: int, master: MasterPose,
                 wrench: WrenchPair | None) -> dict[int, np.ndarray]:
        for fid in self.models:
            self.controller.update_follower(fid, self.meas[fid], k)
        result = self.controller.tick(k, master, wrench)
        self.events.extend((k, e) for e in result.events)
        for fid in sorted(self.models):
            tau = result.commands.get(fid)
            if tau is not None:
                self._log(1, t_us, np.concatenate([[float(fid)], tau]))
            applied = tau if tau is not None else np.zeros(follower_sim.N_JOINTS)
            state = self.states[fid]
            for _ in range(self.substeps):
                state = follower_sim.step(state, applied, self.sub_dt, self.models[fid])
            self.states[fid] = state
            meas = follower_sim.measure(state, self.models[fid],
                                        self.encoder_sigma, self.rng)
            self.meas[fid] = meas
            self._log(6, t_us, np.concatenate([[float(fid)], follower_state_payload(meas)]))
            ref = result.reference
            err_q = quat.multiply(quat.conjugate(meas.shoulder_pose), ref.shoulder_q)
            self.shoulder_error[fid].append(quat.rotation_angle(err_q))
            self.elbow_error[fid].append(abs(ref.elbow - meas.config.angles[follower_sim.ELBOW]))
        return result.commands

    def result(self, ticks: int, log_path: Path | None) -> SessionResult:
        times = np.arange(ticks) * (self.period_us * 1e-6)
        return SessionResult(
            ticks=ticks, control_hz=self.control_hz, log_path=log_path, times=times,
            shoulder_error={f: np.asarray(v) for f, v in self.shoulder_error.items()},
            elbow_error={f: np.asarray(v) for f, v in self.elbow_error.items()},
            final_states=dict(self.states), events=self.events)


def run_session(master_source, system: SystemConfig,
                followers: dict[int, FollowerModel], duration: float,
                log_path: str | Path | None = None,
                wrench_source=None, imu_source=None,
                control_hz: int = CONTROL_HZ, sim_dt: float = SIM_DT,
                encoder_sigma: float = 0.0, seed: int = 0) -> SessionResult:
    """Run a live loopback session, recording all six streams when log_path is set."""
    writer = LogWriter(log_path, session_streams()) if log_path is not None else None
    try:
        engine = _Engine(system, followers, control_hz, sim_dt, writer,
                         encoder_sigma, seed)
        ticks = int(round(duration * control_hz))
        odo_every = max(1, control_hz // ODOMETRY_HZ)
        odometer = datalog.OdometryIntegrator()
        imu = imu_source if imu_source is not None else WanderImu()
        for k in range(ticks):
            t_us = k * engine.period_us
            t = t_us * 1e-6
            master = master_source.sample(t)
            wrench = wrench_source.sample(t) if wrench_source is not None else None
            if writer is not None:
                writer.append(2, t_us, master.kinematic_payload())
                writer.append(3, t_us, master.finger_payload())
                writer.append(5, t_us, (wrench or WrenchPair()).to_payload())
                if k % odo_every == 0:
                    gyro, accel = imu.sample(t)
                    pose = odometer.step(gyro, accel, odo_every * engine.period_us * 1e-6)
                    writer.append(4, t_us, pose)
            engine.run_tick(k, t_us, master, wrench)
    finally:
        if writer is not None:
            writer.close()
    return engine.result(ticks, Path(log_path) if log_path is not None else None)


def run_replay(log_path: str | Path, system: SystemConfig,
               followers: dict[int, FollowerModel],
               out_log_path: str | Path | None = None,
               sim_dt: float = SIM_DT) -> SessionResult:
    """Re-run the controller and followers against a recorded master stream.

    The engine consumes exactly the floats stored on the exo-kinematics,
    finger and binding-force streams; with deterministic followers the
    regenerated torque-command stream is byte-identical to the original.
    """
    reader = LogReader(log_path)
    kin = reader.stream_records(2)
    if len(kin) < 2:
        raise datalog.LogError("replay needs at least two master records")
    fingers = {r.timestamp_us: r.payload for r in reader.stream_records(3)}
    wrenches = {r.timestamp_us: r.payload for r in reader.stream_records(5)}
    period_us = kin[1].timestamp_us - kin[0].timestamp_us
    control_hz = round(1_000_000 / period_us)

    writer = LogWriter(out_log_path, session_streams()) if out_log_path is not None else None
    try:
        engine = _Engine(system, followers, control_hz, sim_dt, writer)
        for k, rec in enumerate(kin):
            t_us = rec.timestamp_us
            finger_payload = fingers.get(t_us)
            if finger_payload is None:
                raise datalog.LogError(f"missing finger record at t={t_us}")
            master = MasterPose.from_stream_payloads(rec.payload, finger_payload)
            wrench_payload = wrenches.get(t_us)
            wrench = (WrenchPair.from_payload(wrench_payload)
                      if wrench_payload is not None else None)
            if writer is not None:
                writer.append(2, t_us, rec.payload)
                writer.append(3, t_us, finger_payload)
                if wrench_payload is not None:
                    writer.append(5, t_us, wrench_payload)
            engine.run_tick(k, t_us, master, wrench)
        if writer is not None:
            for odo in reader.stream_records(4):
                writer.append(4, odo.timestamp_us, odo.payload)
    finally:
        if writer is not None:
            writer.close()
    return engine.result(len(kin), Path(out_log_path) if out_log_path is not None else None)


def torque_stream_bytes(log_path: str | Path) -> bytes:
    """Concatenated (timestamp, payload) bytes of the torque-command stream,
    for byte-exact comparison between a session and its replay."""
    reader = LogReader(log_path)
    chunks = []
    for rec in reader.stream_records(1):
        chunks.append(rec.timestamp_us.to_bytes(8, "little"))
        chunks.append(np.asarray(rec.payload, dtype="<f8").tobytes())
    return b"".join(chunks)
