"""Torque-driven simulated humanoid follower arm.

13 joints: a 3-axis shoulder cluster, elbow, 3-axis wrist cluster and six
finger joints. Dynamics are diagonal (per-joint inertia and viscous damping,
optional pendulum gravity); orientation measurements come from small DH
clusters whose composed rotation is Rx(q0)Ry(q1)Rz(q2), so the home pose is
the identity and the home Jacobian the identity matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import kinematics, quat
from .config import KvReader, load_kv, packaged_config_path

N_JOINTS = 13
SHOULDER = slice(0, 3)
ELBOW = 3
WRIST = slice(4, 7)
FINGERS = slice(7, 13)

JOINT_GROUPS = (("shoulder", SHOULDER), ("elbow", slice(3, 4)),
                ("wrist", WRIST), ("finger", FINGERS))

GRAVITY = 9.81
MAX_DT = 0.01


def _orientation_chain() -> kinematics.KinematicChain:
    return kinematics.KinematicChain(links=kinematics.build_orientation_cluster())


@dataclass(frozen=True)
class FollowerModel:
    """Per-joint dynamic parameters plus the measurement chain geometry."""

    name: str
    inertia: np.ndarray
    damping: np.ndarray
    torque_limit: np.ndarray
    angle_min: np.ndarray
    angle_max: np.ndarray
    gravity_enabled: bool
    gravity_mass: np.ndarray
    gravity_lever: np.ndarray
    upper_arm: float
    forearm: float
    shoulder_chain: kinematics.KinematicChain
    wrist_chain: kinematics.KinematicChain

    def __post_init__(self):
        for field_name in ("inertia", "damping", "torque_limit", "angle_min",
                           "angle_max", "gravity_mass", "gravity_lever"):
            arr = np.asarray(getattr(self, field_name), dtype=float)
            if arr.shape != (N_JOINTS,):
                raise ValueError(f"{field_name} must have {N_JOINTS} entries")
            object.__setattr__(self, field_name, arr)
        if np.any(self.inertia <= 0):
            raise ValueError("joint inertia must be positive")
        if np.any(self.damping < 0):
            raise ValueError("joint damping must be non-negative")
        if np.any(self.torque_limit <= 0):
            raise ValueError("torque limits must be positive")
        if np.any(self.angle_min >= self.angle_max):
            raise ValueError("angle limits need min < max per joint")

    def gravity_torque(self, q: np.ndarray) -> np.ndarray:
        if not self.gravity_enabled:
            return np.zeros(N_JOINTS)
        return self.gravity_mass * GRAVITY * self.gravity_lever * np.cos(q)


@dataclass(frozen=True)
class FollowerState:
    config: kinematics.JointConfig
    applied_torque: np.ndarray
    time: float

    def __post_init__(self):
        if len(self.config) != N_JOINTS:
            raise ValueError(f"follower state needs {N_JOINTS} joints")


def initial_state(model: FollowerModel) -> FollowerState:
    del model
    return FollowerState(kinematics.JointConfig(np.zeros(N_JOINTS)), np.zeros(N_JOINTS), 0.0)


def step(state: FollowerState, tau, dt: float, model: FollowerModel) -> FollowerState:
    """Semi-implicit Euler step of I*qdd = clamp(tau) - b*qd - g(q).

    Angle limits act as inelastic stops: position clamps to the bound and the
    velocity zeroes on contact. Deterministic for identical inputs.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (N_JOINTS,):
        raise ValueError(f"torque vector must have {N_JOINTS} entries")
    if not np.all(np.isfinite(tau)):
        raise ValueError("torque command must be finite")
    if not 0.0 < dt <= MAX_DT:
        raise ValueError(f"dt must be in (0, {MAX_DT}] s")
    q, qd = state.config.angles, state.config.velocities
    tau_c = np.clip(tau, -model.torque_limit, model.torque_limit)
    acc = (tau_c - model.damping * qd - model.gravity_torque(q)) / model.inertia
    qd_next = qd + dt * acc
    q_next = q + dt * qd_next
    low = q_next < model.angle_min
    high = q_next > model.angle_max
    q_next = np.where(low, model.angle_min, np.where(high, model.angle_max, q_next))
    qd_next = np.where(low | high, 0.0, qd_next)
    return FollowerState(kinematics.JointConfig(q_next, qd_next), tau_c, state.time + dt)


class Measurement(NamedTuple):
    config: kinematics.JointConfig
    shoulder_pose: np.ndarray   # unit quaternion, base frame
    wrist_pose: np.ndarray      # unit quaternion, forearm-local


def measure(state: FollowerState, model: FollowerModel, noise_sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> Measurement:
    """Joint readings plus cluster poses; optional Gaussian encoder noise on angles."""
    q = state.config.angles
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("encoder noise needs an explicit random generator")
        q = q + rng.normal(0.0, noise_sigma, size=N_JOINTS)
    cfg = kinematics.JointConfig(q, state.config.velocities)
    shoulder = cluster_pose(q[SHOULDER], model.shoulder_chain)
    wrist = cluster_pose(q[WRIST], model.wrist_chain)
    return Measurement(cfg, shoulder, wrist)


def cluster_pose(angles, chain: kinematics.KinematicChain) -> np.ndarray:
    mats = kinematics.fk_matrices(kinematics.JointConfig(angles), chain)
    return quat.canonical(quat.from_matrix(mats[-1][:3, :3]))


def cluster_jacobian(angles, chain: kinematics.KinematicChain) -> np.ndarray:
    """Orientation Jacobian (3x3) of a shoulder/wrist cluster."""
    return kinematics.jacobian(kinematics.JointConfig(angles), chain)[:3, :]


def snapshot_json(state: FollowerState) -> str:
    """One JSON line per state, for debugging dumps."""
    return json.dumps({
        "time": state.time,
        "angles": state.config.angles.tolist(),
        "velocities": state.config.velocities.tolist(),
        "applied_torque": state.applied_torque.tolist(),
    })


def write_snapshots_jsonl(states: Iterable[FollowerState], path: str | Path) -> None:
    with open(path, "w") as fh:
        for state in states:
            fh.write(snapshot_json(state) + "\n")


def read_snapshots_jsonl(path: str | Path) -> list[FollowerState]:
    out = []
    for line in Path(path).read_text().splitlines():
        body = json.loads(line)
        out.append(FollowerState(
            kinematics.JointConfig(body["angles"], body["velocities"]),
            np.asarray(body["applied_torque"], dtype=float), body["time"]))
    return out


def preset_path(name: str) -> Path:
    """Resolve a preset name or path to a follower config file."""
    p = Path(name)
    if p.suffix == ".cfg" and p.exists():
        return p
    return packaged_config_path(f"follower_{name}.cfg")


def make_model(config_file: str | Path) -> FollowerModel:
    """Load a follower preset from a plain-text config file."""
    path = preset_path(str(config_file))
    table = load_kv(path)
    r = KvReader(table, str(path))
    name = r.get_str("follower.name", Path(path).stem)

    per_joint = {}
    for field_name, required in (("inertia", True), ("damping", False),
                                 ("torque_limit", False), ("angle_min", False),
                                 ("angle_max", False)):
        arr = np.empty(N_JOINTS)
        for group, sl in JOINT_GROUPS:
            key = f"follower.{group}.{field_name}"
            if required:
                value = r.get_float(key)
            else:
                defaults = {"damping": 0.1, "torque_limit": 15.0,
                            "angle_min": -2.8, "angle_max": 2.8}
                value = r.get_float(key, defaults[field_name])
            arr[sl] = value
        per_joint[field_name] = arr

    mass = np.zeros(N_JOINTS)
    lever = np.zeros(N_JOINTS)
    for group, sl in JOINT_GROUPS:
        mass[sl] = r.get_float(f"follower.{group}.mass", 0.0)
        lever[sl] = r.get_float(f"follower.{group}.lever", 0.0)

    model = FollowerModel(
        name=name,
        inertia=per_joint["inertia"],
        damping=per_joint["damping"],
        torque_limit=per_joint["torque_limit"],
        angle_min=per_joint["angle_min"],
        angle_max=per_joint["angle_max"],
        gravity_enabled=r.get_bool("follower.gravity", False),
        gravity_mass=mass,
        gravity_lever=lever,
        upper_arm=r.get_float("follower.upper_arm_length", 0.28),
        forearm=r.get_float("follower.forearm_length", 0.25),
        shoulder_chain=_orientation_chain(),
        wrist_chain=_orientation_chain(),
    )
    return model
