"""Teleoperation controllers.

Pose tracking (shoulder, wrist) renders a virtual spring/damper on the
quaternion error between master and follower orientation, with an optional
binding-force injection term:

    tau = Kp * log(q_err) + Kd * J+ * (w_m - w_s) + lam * J^T * F

Scalar joints (elbow, fingers) use the same law componentwise. The
exoskeleton side combines model-based dynamics compensation with a
binding-force assist; a deadband-with-hold filter freezes the master stream
during sub-threshold tremor.

All controllers are pure state-in/state-out functions over numpy arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import quat
from .config import SubsystemGains
from .kinematics import JointConfig

PINV_DAMPING = 1e-4


class SingularityWarning(RuntimeWarning):
    """Jacobian is rank-deficient beyond the pseudoinverse damping floor."""


@dataclass(frozen=True)
class PoseError:
    """Orientation tracking error: unit quaternion (canonical) + angular velocity error."""

    q_t: np.ndarray
    qdot_t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_t", quat.canonical(quat.check_unit(self.q_t)))
        object.__setattr__(self, "qdot_t", np.asarray(self.qdot_t, dtype=float))


@dataclass(frozen=True)
class BindingForce:
    """Interaction wrench at an arm cuff: (force xyz, moment xyz), base frame."""

    wrench: np.ndarray
    joint_torque_equivalent: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.wrench, dtype=float)
        if w.shape != (6,) or not np.all(np.isfinite(w)):
            raise ValueError("binding force needs a finite 6-vector wrench")
        if not np.isfinite(self.joint_torque_equivalent):
            raise ValueError("joint torque equivalent must be finite")
        object.__setattr__(self, "wrench", w)

    @property
    def moment(self) -> np.ndarray:
        return self.wrench[3:]


def quat_error(q_s, q_m) -> np.ndarray:
    """Orientation error conj(q_s) * q_m, renormalized and canonical (w >= 0)."""
    q_s = quat.check_unit(q_s)
    q_m = quat.check_unit(q_m)
    return quat.canonical(quat.normalize(quat.multiply(quat.conjugate(q_s), q_m)))


def velocity_error(qdot_m, qdot_s) -> np.ndarray:
    """Componentwise master-minus-follower velocity difference."""
    return np.asarray(qdot_m, dtype=float) - np.asarray(qdot_s, dtype=float)


def rotation_vector(q_t) -> np.ndarray:
    """Axis-angle logarithm of a unit quaternion (identity maps to zero)."""
    return quat.log_map(quat.check_unit(q_t))


def damped_pinv(jac: np.ndarray, damping: float = PINV_DAMPING) -> np.ndarray:
    """J^T (J J^T + damping I)^-1, well-behaved through singular poses."""
    jac = np.asarray(jac, dtype=float)
    jjt = jac @ jac.T
    return jac.T @ np.linalg.inv(jjt + damping * np.eye(jjt.shape[0]))


def _clamp(tau: np.ndarray, limit: float) -> np.ndarray:
    return np.clip(tau, -limit, limit)


def shoulder_impedance_torque(err: PoseError, jac: np.ndarray, f_ft: BindingForce | None,
                              gains: SubsystemGains, damping: float = PINV_DAMPING) -> np.ndarray:
    """Pose-layer impedance torque for a 3-joint orientation cluster.

    jac may be the (3 x n) orientation Jacobian or a full (6 x n) Jacobian;
    with the 3-row form the force term uses the wrench moment. Output is
    clamped to gains.torque_limit; a rank-deficient Jacobian attaches a
    SingularityWarning but still returns the damped result.
    """
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[0] not in (3, 6):
        raise ValueError("jacobian must be (3 x n) or (6 x n)")
    ang = jac[:3] if jac.shape[0] == 6 else jac
    n = jac.shape[1]
    if n != 3:
        raise ValueError("pose impedance drives a 3-joint cluster; got "
                         f"{n} columns")
    if np.linalg.svd(ang, compute_uv=False)[-1] < np.sqrt(damping):
        warnings.warn("orientation Jacobian near rank deficiency; "
                      "damped pseudoinverse floor active", SingularityWarning, stacklevel=2)
    tau = gains.kp * rotation_vector(err.q_t)
    tau = tau + gains.kd * (damped_pinv(ang, damping) @ err.qdot_t)
    if f_ft is not None and gains.lam != 0.0:
        force = f_ft.wrench if jac.shape[0] == 6 else f_ft.moment
        tau = tau + gains.lam * (jac.T @ force)
    return _clamp(tau, gains.torque_limit)


def joint_impedance_torque(q_m: float, q_s: float, qd_m: float, qd_s: float,
                           tau_ft: float, gains: SubsystemGains) -> float:
    """Scalar joint impedance: kp*(q_m - q_s) + kd*(qd_m - qd_s) + lam*tau_ft, clamped."""
    tau = gains.kp * (q_m - q_s) + gains.kd * (qd_m - qd_s) + gains.lam * tau_ft
    return float(np.clip(tau, -gains.torque_limit, gains.torque_limit))


@dataclass(frozen=True)
class CompensationModel:
    """Exoskeleton-side dynamics model: inertia, Coriolis-like term, gravity, friction.

    inertia must be symmetric positive definite. friction is viscous b*qd plus
    a smooth Coulomb term mu*tanh(qd/eps).
    """

    inertia: np.ndarray
    coriolis: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gravity: Callable[[np.ndarray], np.ndarray]
    viscous: np.ndarray
    coulomb: np.ndarray
    eps: float = 0.01

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.inertia, dtype=float))
        if not np.allclose(m, m.T, atol=1e-12):
            raise ValueError("inertia matrix must be symmetric")
        if np.any(np.linalg.eigvalsh(m) <= 0.0):
            raise ValueError("inertia matrix must be positive definite")
        if np.any(np.asarray(self.viscous) < 0) or np.any(np.asarray(self.coulomb) < 0):
            raise ValueError("friction coefficients must be non-negative")
        object.__setattr__(self, "inertia", m)
        object.__setattr__(self, "viscous", np.asarray(self.viscous, dtype=float))
        object.__setattr__(self, "coulomb", np.asarray(self.coulomb, dtype=float))

    @classmethod
    def point_mass(cls, masses, levers, inertia_diag, viscous=None, coulomb=None,
                   velocity_product=None, g: float = 9.81) -> "CompensationModel":
        """Desk-scale default: one point mass per link, per-joint velocity-product
        Coriolis surrogate, horizontal-at-zero gravity levers."""
        masses = np.asarray(masses, dtype=float)
        levers = np.asarray(levers, dtype=float)
        n = len(masses)
        c = np.zeros(n) if velocity_product is None else np.asarray(velocity_product, dtype=float)

        def gravity(q):
            return masses * g * levers * np.cos(np.asarray(q))

        def coriolis(q, qd):
            qd = np.asarray(qd)
            return c * qd * np.abs(qd)

        return cls(
            inertia=np.diag(np.asarray(inertia_diag, dtype=float)),
            coriolis=coriolis,
            gravity=gravity,
            viscous=np.zeros(n) if viscous is None else viscous,
            coulomb=np.zeros(n) if coulomb is None else coulomb,
        )


def dynamics_compensation(state: JointConfig, accel_ref, model: CompensationModel) -> np.ndarray:
    """tau_com = M*accel_ref + h(q, qd) + g(q) + friction(qd)."""
    q, qd = state.angles, state.velocities
    accel_ref = np.asarray(accel_ref, dtype=float)
    friction = model.viscous * qd + model.coulomb * np.tanh(qd / model.eps)
    return model.inertia @ accel_ref + model.coriolis(q, qd) + model.gravity(q) + friction


def fcm_assist(bindings: list[BindingForce], jacobians: list[np.ndarray],
               scale: float = 1.0) -> np.ndarray:
    """Binding-force assist surrogate: scaled sum of J^T * wrench over the cuffs.

    Stands in for the full-arm coordination controller, which lives in prior
    work; this keeps only its interface (cuff wrenches in, joint torques out)
    and linearity.
    """
    if len(bindings) != len(jacobians):
        raise ValueError("one Jacobian per binding force required")
    if not bindings:
        return np.zeros(0)
    tau = None
    for f, jac in zip(bindings, jacobians):
        jac = np.asarray(jac, dtype=float)
        force = f.wrench if jac.shape[0] == 6 else f.moment
        term = jac.T @ force
        tau = term if tau is None else tau + term
    return scale * tau


def exo_command(tau_com, tau_h, limit: float | None = None) -> np.ndarray:
    """Exoskeleton motor command: compensation + assist, optionally clamped."""
    tau_com = np.asarray(tau_com, dtype=float)
    tau_h = np.asarray(tau_h, dtype=float)
    if tau_com.shape != tau_h.shape:
        raise ValueError("torque vectors must have equal length")
    tau = tau_com + tau_h
    return _clamp(tau, limit) if limit is not None else tau


@dataclass(frozen=True)
class TremorFilterState:
    """Deadband-with-hold filter state. held_output is None until the first sample."""

    deadband: float = 0.015
    hysteresis_exit: float = 0.015
    held_output: np.ndarray | None = None

    def __post_init__(self):
        if self.deadband <= 0:
            raise ValueError("deadband must be positive")
        if self.hysteresis_exit < self.deadband:
            raise ValueError("hysteresis_exit must be >= deadband")


def tremor_filter(x, state: TremorFilterState) -> tuple[np.ndarray, TremorFilterState]:
    """Per-axis hold: output sticks to the held value while the input stays
    inside the deadband ball around it, and snaps to the input (updating the
    hold) as soon as the deadband is exceeded."""
    x = np.asarray(x, dtype=float)
    if state.held_output is None:
        return x.copy(), replace(state, held_output=x.copy())
    held = state.held_output
    if x.shape != held.shape:
        raise ValueError("input dimension changed under the tremor filter")
    moved = np.abs(x - held) >= state.deadband
    y = np.where(moved, x, held)
    return y, replace(state, held_output=y.copy())
