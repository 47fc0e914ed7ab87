"""Teleoperation controller core and master-side signal sources.

The controller consumes one master pose stream and fans commands out to any
number of registered followers: quaternion impedance for the shoulder and
wrist clusters, scalar impedance for elbow and fingers. The master stream is
tremor-filtered before tracking; follower states older than a staleness
budget withhold that follower's command and raise one event per episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Protocol

import numpy as np

from . import control, follower_sim, kinematics, quat
from .config import SubsystemGains, SystemConfig, TremorSettings
from .follower_sim import ELBOW, FINGERS, SHOULDER, WRIST, FollowerModel, Measurement

MASTER_PAYLOAD_LEN = 28
FOLLOWER_PAYLOAD_LEN = 26
TORQUE_PAYLOAD_LEN = 13
STALE_TICKS = 5


@dataclass(frozen=True)
class MasterPose:
    """Master-side arm posture: shoulder/wrist quaternions, elbow angle,
    finger angles, and their velocities."""

    shoulder_q: np.ndarray
    wrist_q: np.ndarray
    elbow: float
    fingers: np.ndarray
    shoulder_w: np.ndarray
    wrist_w: np.ndarray
    elbow_v: float
    finger_v: np.ndarray

    @classmethod
    def rest(cls) -> "MasterPose":
        return cls(quat.IDENTITY.copy(), quat.IDENTITY.copy(), 0.0, np.zeros(6),
                   np.zeros(3), np.zeros(3), 0.0, np.zeros(6))

    def to_payload(self) -> np.ndarray:
        return np.concatenate([
            self.shoulder_q, self.wrist_q, [self.elbow], self.fingers,
            self.shoulder_w, self.wrist_w, [self.elbow_v], self.finger_v,
        ])

    @classmethod
    def from_payload(cls, p) -> "MasterPose":
        p = np.asarray(p, dtype=float)
        if p.shape != (MASTER_PAYLOAD_LEN,):
            raise ValueError(f"master payload must have {MASTER_PAYLOAD_LEN} floats")
        return cls(shoulder_q=p[0:4].copy(), wrist_q=p[4:8].copy(), elbow=float(p[8]),
                   fingers=p[9:15].copy(), shoulder_w=p[15:18].copy(),
                   wrist_w=p[18:21].copy(), elbow_v=float(p[21]), finger_v=p[22:28].copy())

    def kinematic_payload(self) -> np.ndarray:
        """Stream-2 payload: shoulder/wrist quats, elbow, their velocities (16)."""
        return np.concatenate([self.shoulder_q, self.wrist_q, [self.elbow],
                               self.shoulder_w, self.wrist_w, [self.elbow_v]])

    def finger_payload(self) -> np.ndarray:
        """Stream-3 payload: finger angles and velocities (12)."""
        return np.concatenate([self.fingers, self.finger_v])

    @classmethod
    def from_stream_payloads(cls, kinematic, finger) -> "MasterPose":
        k = np.asarray(kinematic, dtype=float)
        f = np.asarray(finger, dtype=float)
        return cls(shoulder_q=k[0:4].copy(), wrist_q=k[4:8].copy(), elbow=float(k[8]),
                   fingers=f[0:6].copy(), shoulder_w=k[9:12].copy(),
                   wrist_w=k[12:15].copy(), elbow_v=float(k[15]), finger_v=f[6:12].copy())


@dataclass(frozen=True)
class WrenchPair:
    """Binding wrenches at the upper-arm and forearm cuffs, base frame."""

    upper: np.ndarray = field(default_factory=lambda: np.zeros(6))
    forearm: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def to_payload(self) -> np.ndarray:
        return np.concatenate([self.upper, self.forearm])

    @classmethod
    def from_payload(cls, p) -> "WrenchPair":
        p = np.asarray(p, dtype=float)
        return cls(upper=p[0:6].copy(), forearm=p[6:12].copy())


def follower_state_payload(meas: Measurement) -> np.ndarray:
    return np.concatenate([meas.config.angles, meas.config.velocities])


def measurement_from_payload(p, model: FollowerModel) -> Measurement:
    p = np.asarray(p, dtype=float)
    if p.shape != (FOLLOWER_PAYLOAD_LEN,):
        raise ValueError(f"follower payload must have {FOLLOWER_PAYLOAD_LEN} floats")
    cfg = kinematics.JointConfig(p[:13], p[13:])
    return Measurement(cfg,
                       follower_sim.cluster_pose(cfg.angles[SHOULDER], model.shoulder_chain),
                       follower_sim.cluster_pose(cfg.angles[WRIST], model.wrist_chain))


def follower_command(ref: MasterPose, meas: Measurement, model: FollowerModel,
                     gains: dict[str, SubsystemGains],
                     wrenches: WrenchPair | None = None) -> np.ndarray:
    """One follower's 13 joint torques for a (filtered) master reference."""
    q, qd = meas.config.angles, meas.config.velocities
    tau = np.zeros(follower_sim.N_JOINTS)

    jac_s = follower_sim.cluster_jacobian(q[SHOULDER], model.shoulder_chain)
    err_s = control.PoseError(control.quat_error(meas.shoulder_pose, ref.shoulder_q),
                              control.velocity_error(ref.shoulder_w, jac_s @ qd[SHOULDER]))
    f_upper = control.BindingForce(wrenches.upper) if wrenches is not None else None
    tau[SHOULDER] = control.shoulder_impedance_torque(err_s, jac_s, f_upper, gains["shoulder"])

    tau_ft = float(wrenches.forearm[5]) if wrenches is not None else 0.0
    tau[ELBOW] = control.joint_impedance_torque(ref.elbow, q[ELBOW], ref.elbow_v,
                                                qd[ELBOW], tau_ft, gains["elbow"])

    jac_w = follower_sim.cluster_jacobian(q[WRIST], model.wrist_chain)
    err_w = control.PoseError(control.quat_error(meas.wrist_pose, ref.wrist_q),
                              control.velocity_error(ref.wrist_w, jac_w @ qd[WRIST]))
    tau[WRIST] = control.shoulder_impedance_torque(err_w, jac_w, None, gains["wrist"])

    for i in range(6):
        tau[FINGERS.start + i] = control.joint_impedance_torque(
            ref.fingers[i], q[FINGERS.start + i], ref.finger_v[i],
            qd[FINGERS.start + i], 0.0, gains["finger"])
    return tau


class TickResult(NamedTuple):
    commands: dict[int, np.ndarray]
    events: list[str]
    reference: MasterPose | None   # tremor-filtered master actually tracked


class TeleopController:
    """One controller instance: single master in, N followers out."""

    def __init__(self, gains: dict[str, SubsystemGains], tremor: TremorSettings,
                 follower_models: dict[int, FollowerModel],
                 stale_ticks: int = STALE_TICKS):
        self.gains = gains
        self.models = dict(follower_models)
        self.stale_ticks = stale_ticks
        self._tremor = control.TremorFilterState(
            deadband=tremor.deadband, hysteresis_exit=tremor.hysteresis_exit)
        self._meas: dict[int, Measurement] = {}
        self._seen_tick: dict[int, int] = {}
        self._stale: set[int] = set()

    def register_follower(self, follower_id: int, model: FollowerModel) -> None:
        self.models[follower_id] = model

    def update_follower(self, follower_id: int, meas: Measurement, tick: int) -> None:
        if follower_id not in self.models:
            raise KeyError(f"unknown follower {follower_id}")
        self._meas[follower_id] = meas
        self._seen_tick[follower_id] = tick

    def filter_master(self, master: MasterPose) -> MasterPose:
        """Tremor filter over (shoulder rv, wrist rv, elbow, fingers); velocities pass."""
        vec = np.concatenate([quat.log_map(master.shoulder_q), quat.log_map(master.wrist_q),
                              [master.elbow], master.fingers])
        out, self._tremor = control.tremor_filter(vec, self._tremor)
        if np.array_equal(out, vec):
            return master
        return replace(master,
                       shoulder_q=quat.exp_map(out[0:3]), wrist_q=quat.exp_map(out[3:6]),
                       elbow=float(out[6]), fingers=out[7:13].copy())

    def tick(self, tick_index: int, master: MasterPose | None,
             wrenches: WrenchPair | None = None) -> TickResult:
        if not self.models:
            raise RuntimeError("no follower registered")
        events: list[str] = []
        if master is None:
            return TickResult({}, events, None)
        ref = self.filter_master(master)
        commands: dict[int, np.ndarray] = {}
        for fid in sorted(self.models):
            seen = self._seen_tick.get(fid)
            age = math.inf if seen is None else tick_index - seen
            if age > self.stale_ticks:
                if fid not in self._stale:
                    self._stale.add(fid)
                    events.append(f"stale-follower:{fid}")
                continue
            self._stale.discard(fid)
            commands[fid] = follower_command(ref, self._meas[fid], self.models[fid],
                                             self.gains, wrenches)
        return TickResult(commands, events, ref)


# ---------------------------------------------------------------------------
# Master-side signal sources (synthetic stand-ins for the worn exoskeleton)


class MasterSource(Protocol):
    def sample(self, t: float) -> MasterPose: ...


@dataclass
class StepSource:
    """Constant shoulder rotation step about an axis, from t0 onward."""

    magnitude: float = 0.3
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    t0: float = 0.0
    elbow: float = 0.0

    def sample(self, t: float) -> MasterPose:
        rest = MasterPose.rest()
        if t < self.t0:
            return rest
        return replace(rest,
                       shoulder_q=quat.from_axis_angle(self.axis, self.magnitude),
                       elbow=self.elbow)


@dataclass
class SinusoidSource:
    """Single-axis shoulder sinusoid with exact velocity feedforward."""

    amplitude: float = 0.4
    frequency: float = 0.5
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    elbow_amplitude: float = 0.0
    finger_amplitude: float = 0.0

    def sample(self, t: float) -> MasterPose:
        w = 2.0 * math.pi * self.frequency
        angle = self.amplitude * math.sin(w * t)
        rate = self.amplitude * w * math.cos(w * t)
        axis = np.asarray(self.axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        rest = MasterPose.rest()
        fingers = np.full(6, self.finger_amplitude * math.sin(w * t))
        finger_v = np.full(6, self.finger_amplitude * w * math.cos(w * t))
        return replace(rest,
                       shoulder_q=quat.from_axis_angle(axis, angle),
                       shoulder_w=rate * axis,
                       elbow=self.elbow_amplitude * math.sin(w * t),
                       elbow_v=self.elbow_amplitude * w * math.cos(w * t),
                       fingers=fingers, finger_v=finger_v)


class ExoTrajectorySource:
    """Master poses produced by sweeping the exoskeleton chain itself.

    Joint sinusoids run through the chain's forward kinematics; the published
    shoulder quaternion is the humeral orientation relative to its rest pose,
    with the angular velocity resolved into that rest frame.
    """

    def __init__(self, system: SystemConfig, amplitudes=None, frequency: float = 0.4,
                 finger_amplitude: float = 0.2):
        self.chain = system.chain
        self.frequency = frequency
        self.finger_amplitude = finger_amplitude
        n = self.chain.n_active
        self.amplitudes = (np.asarray(amplitudes, dtype=float) if amplitudes is not None
                           else np.array([0.35, 0.25, 0.3, 0.15, 0.4, 0.2][:n]))
        rest = kinematics.humeral_pose(kinematics.JointConfig(np.zeros(n)), self.chain)
        self._q_rest = rest.pose
        self._r_rest_t = quat.to_matrix(self._q_rest).T

    def sample(self, t: float) -> MasterPose:
        w = 2.0 * math.pi * self.frequency
        angles = self.amplitudes * np.sin(w * t)
        rates = self.amplitudes * w * np.cos(w * t)
        cfg = kinematics.JointConfig(angles, rates)
        hp = kinematics.humeral_pose(cfg, self.chain)
        jac = kinematics.jacobian(cfg, self.chain, link=self.chain.humeral_link)
        omega_world = jac[:3] @ rates
        shoulder_q = quat.canonical(quat.multiply(quat.conjugate(self._q_rest), hp.pose))
        wrist_angle = 0.5 * angles[-1]
        rest = MasterPose.rest()
        return replace(
            rest,
            shoulder_q=shoulder_q,
            shoulder_w=self._r_rest_t @ omega_world,
            wrist_q=quat.from_axis_angle([0, 0, 1], wrist_angle),
            wrist_w=np.array([0.0, 0.0, 0.5 * rates[-1]]),
            elbow=float(angles[4]), elbow_v=float(rates[4]),
            fingers=np.full(6, self.finger_amplitude * math.sin(w * t)),
            finger_v=np.full(6, self.finger_amplitude * w * math.cos(w * t)))


@dataclass
class SinusoidWrench:
    """Synthetic binding-force stream: small oscillating cuff wrenches."""

    amplitude: float = 0.5
    frequency: float = 0.3

    def sample(self, t: float) -> WrenchPair:
        s = math.sin(2.0 * math.pi * self.frequency * t)
        c = math.cos(2.0 * math.pi * self.frequency * t)
        upper = self.amplitude * np.array([0.2 * s, 0.0, 0.1 * c, 0.05 * s, 0.02 * c, 0.03 * s])
        forearm = self.amplitude * np.array([0.1 * c, 0.05 * s, 0.0, 0.01 * s, 0.0, 0.02 * c])
        return WrenchPair(upper, forearm)


@dataclass
class WanderImu:
    """Synthetic IMU: slow yaw wander plus small horizontal sway, gravity on z."""

    sway: float = 0.2
    yaw_rate: float = 0.05

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        gyro = np.array([0.0, 0.0, self.yaw_rate * math.sin(0.5 * t)])
        accel = np.array([self.sway * math.sin(1.3 * t), self.sway * math.cos(0.9 * t), 9.81])
        return gyro, accel


class SmoothedDifferentiator:
    """Backward differences averaged over the last 3 samples.

    Velocity estimator for master sources that deliver positions only (the
    operator console); sources with analytic rates bypass it.
    """

    def __init__(self, window: int = 3):
        self._window = window
        self._last_x: np.ndarray | None = None
        self._diffs: list[np.ndarray] = []

    def update(self, x, dt: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._last_x is None or dt <= 0:
            self._last_x = x.copy()
            return np.zeros_like(x)
        self._diffs.append((x - self._last_x) / dt)
        self._last_x = x.copy()
        if len(self._diffs) > self._window:
            self._diffs.pop(0)
        return np.mean(self._diffs, axis=0)
