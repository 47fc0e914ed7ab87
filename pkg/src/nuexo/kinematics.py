"""Forward kinematics of the exoskeleton arm chain.

The shoulder uses a linkage in the horizontal plane whose passive joints are
slaved to one motor angle ``theta1`` through an affine law: the summed linkage
rotation is ``gain * theta1 + offset``. The chain is a standard DH table
(``Rz(theta) Tz(d) Tx(a) Rx(alpha)`` per link) in which three consecutive rows
are the passive linkage joints; everything downstream (upper arm, elbow,
wrist) is a plain serial chain.

Angles are radians, lengths meters, everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import quat

ACTIVE = "active"
PASSIVE = "passive-coupled"
FIXED = "fixed"

ORTHONORMAL_TOL = 1e-9
GIMBAL_TOL = 1e-6


@dataclass(frozen=True)
class ShoulderCoupling:
    """Affine linkage coupling: summed passive rotation = gain * theta1 + offset.

    l1/l2 are the two linkage bar lengths, theta_e the fixed interior angle
    between them.
    """

    l1: float = 0.150
    l2: float = 0.187
    theta_e: float = 2.508
    gain: float = 1.444
    offset: float = 0.938

    def __post_init__(self):
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("linkage lengths must be positive")
        for v in (self.theta_e, self.gain, self.offset):
            if not math.isfinite(v):
                raise ValueError("coupling parameters must be finite")


def coupled_linkage_angles(theta1: float, coupling: ShoulderCoupling) -> tuple[float, float, float]:
    """Passive linkage joint angles (theta_2_1, theta_2_2, theta_3) for a motor angle.

    Decomposition: the first passive joint follows the motor directly, the
    second carries the fixed interior angle of the linkage, and the third
    absorbs the remainder so that theta_2_1 + theta_3 equals the affine
    coupling output exactly.
    """
    theta_2_1 = theta1
    theta_2_2 = coupling.theta_e - math.pi
    theta_3 = coupling.gain * theta1 + coupling.offset - theta1
    return theta_2_1, theta_2_2, theta_3


@dataclass(frozen=True)
class DHLink:
    """One DH table row. kind selects how theta is driven.

    active         theta = theta_offset + q[i] for the next active index i
    passive-coupled theta = theta_offset + linkage angle (coupled_part 1..3)
    fixed          theta = theta_offset
    """

    theta_offset: float
    d: float
    a: float
    alpha: float
    kind: str = ACTIVE
    coupled_part: int = 0
    name: str = ""

    def __post_init__(self):
        for v in (self.theta_offset, self.d, self.a, self.alpha):
            if not math.isfinite(v):
                raise ValueError(f"non-finite DH parameter in link {self.name!r}")
        if self.kind not in (ACTIVE, PASSIVE, FIXED):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == PASSIVE and self.coupled_part not in (1, 2, 3):
            raise ValueError("passive-coupled link needs coupled_part in 1..3")


@dataclass(frozen=True)
class KinematicChain:
    """DH chain plus the coupling and a few named frames.

    driver is the index (into the active-joint vector) of the motor that
    drives the passive linkage; humeral_link indexes the row whose output
    frame carries the upper-arm orientation. Chains without passive rows
    (e.g. the follower arm) leave driver at -1.
    """

    links: tuple[DHLink, ...]
    coupling: ShoulderCoupling | None = None
    driver: int = -1
    humeral_link: int = -1
    joint_names: tuple[str, ...] = ()

    def __post_init__(self):
        has_passive = any(l.kind == PASSIVE for l in self.links)
        if has_passive and (self.coupling is None or self.driver < 0):
            raise ValueError("chain with passive-coupled links needs a coupling and driver index")

    @property
    def n_active(self) -> int:
        # the linkage driver is an active joint without a DH row of its own
        n = sum(1 for l in self.links if l.kind == ACTIVE)
        return n + (1 if self.driver >= 0 else 0)

    def link_thetas(self, angles: np.ndarray) -> np.ndarray:
        """Resolve every row's theta for an active-joint vector."""
        if len(angles) != self.n_active:
            raise ValueError(f"expected {self.n_active} active joint angles, got {len(angles)}")
        if self.driver >= 0:
            passive = coupled_linkage_angles(float(angles[self.driver]), self.coupling)
        thetas = np.empty(len(self.links))
        i = 0
        for r, link in enumerate(self.links):
            if link.kind == ACTIVE:
                if i == self.driver:
                    i += 1  # driver angle feeds the linkage rows, not a row of its own
                thetas[r] = link.theta_offset + angles[i]
                i += 1
            elif link.kind == PASSIVE:
                thetas[r] = link.theta_offset + passive[link.coupled_part - 1]
            else:
                thetas[r] = link.theta_offset
        return thetas

    def theta_partials(self, active_index: int) -> np.ndarray:
        """d(theta_row)/d(q_active) for one active joint, across all rows."""
        grad = np.zeros(len(self.links))
        if active_index == self.driver:
            for r, link in enumerate(self.links):
                if link.kind == PASSIVE:
                    if link.coupled_part == 1:
                        grad[r] = 1.0
                    elif link.coupled_part == 3:
                        grad[r] = self.coupling.gain - 1.0
            return grad
        i = 0
        for r, link in enumerate(self.links):
            if link.kind == ACTIVE:
                if i == self.driver:
                    i += 1
                if i == active_index:
                    grad[r] = 1.0
                i += 1
        return grad


@dataclass(frozen=True)
class JointConfig:
    """Active joint angles and velocities (rad, rad/s)."""

    angles: np.ndarray
    velocities: np.ndarray

    def __init__(self, angles, velocities=None):
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if velocities is None:
            velocities = np.zeros_like(angles)
        velocities = np.atleast_1d(np.asarray(velocities, dtype=float))
        if angles.shape != velocities.shape:
            raise ValueError("angles and velocities must have equal length")
        if not (np.all(np.isfinite(angles)) and np.all(np.isfinite(velocities))):
            raise ValueError("joint configuration must be finite")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "velocities", velocities)

    def __len__(self) -> int:
        return len(self.angles)


class Frame(NamedTuple):
    """Rigid-body pose: unit quaternion rotation + translation (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def from_matrix(cls, t: np.ndarray) -> "Frame":
        r = t[:3, :3]
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation block is not a proper rotation")
        return cls(quat.from_matrix(r), t[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = quat.to_matrix(self.rotation)
        t[:3, 3] = self.translation
        return t


def dh_transform(theta: float, d: float, a: float, alpha: float) -> np.ndarray:
    """Homogeneous transform Rz(theta) Tz(d) Tx(a) Rx(alpha)."""
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_matrices(config: JointConfig, chain: KinematicChain) -> list[np.ndarray]:
    """Base-to-frame homogeneous transforms after every row (fast path)."""
    thetas = chain.link_thetas(config.angles)
    t = np.eye(4)
    out = []
    for r, link in enumerate(chain.links):
        t = t @ dh_transform(thetas[r], link.d, link.a, link.alpha)
        out.append(t)
    return out


def forward_kinematics(config: JointConfig, chain: KinematicChain) -> list[Frame]:
    """Base-to-link frames for every chain row, passive angles included."""
    return [Frame.from_matrix(t) for t in fk_matrices(config, chain)]


class HumeralPose(NamedTuple):
    pose: np.ndarray        # unit quaternion, canonical
    euler: np.ndarray       # intrinsic Z-Y-X (yaw, pitch, roll)
    gimbal_adjacent: bool


def humeral_pose(config: JointConfig, chain: KinematicChain) -> HumeralPose:
    """Orientation of the upper-arm frame, as quaternion and Z-Y-X Euler angles.

    Configurations with |pitch| within 1e-6 of pi/2 are flagged as
    gimbal-adjacent; the quaternion is still valid there.
    """
    if chain.humeral_link < 0:
        raise ValueError("chain does not designate a humeral link")
    mats = fk_matrices(config, chain)
    q = quat.canonical(quat.from_matrix(mats[chain.humeral_link][:3, :3]))
    euler = quat.to_euler_zyx(q)
    gimbal = bool(abs(abs(euler[1]) - math.pi / 2) < GIMBAL_TOL)
    return HumeralPose(q, euler, gimbal)


def jacobian(config: JointConfig, chain: KinematicChain, link: int | None = None) -> np.ndarray:
    """Geometric Jacobian (6 x n_active) of a chain frame: rows = (angular, linear).

    Passive linkage rows contribute to the driver column through the chain
    rule with the affine coupling slopes.
    """
    mats = fk_matrices(config, chain)
    end = len(chain.links) - 1 if link is None else link
    p_end = mats[end][:3, 3]
    # axis/origin of each row's rotation live in the frame before the row
    axes = np.empty((len(chain.links), 3))
    origins = np.empty((len(chain.links), 3))
    t_prev = np.eye(4)
    for r in range(len(chain.links)):
        axes[r] = t_prev[:3, 2]
        origins[r] = t_prev[:3, 3]
        t_prev = mats[r]
    jac = np.zeros((6, chain.n_active))
    for i in range(chain.n_active):
        grad = chain.theta_partials(i)
        for r in np.nonzero(grad)[0]:
            if r > end:
                continue
            jac[:3, i] += grad[r] * axes[r]
            jac[3:, i] += grad[r] * np.cross(axes[r], p_end - origins[r])
    return jac


def gh_center_displacement(theta1_values, coupling: ShoulderCoupling) -> np.ndarray:
    """Horizontal-plane displacement of the shoulder's instantaneous rotation center.

    The linkage endpoint traces C(theta1) in the horizontal plane while the
    humerus rotates at d(psi)/d(theta1) = gain, which puts the instantaneous
    center of rotation at (1 - 1/gain) * C. Displacement is reported relative
    to theta1 = 0 as (forward, lateral, vertical); a decoupled mechanism
    (gain = 0) is the rigid fixed-center baseline and returns zeros.
    """
    theta1_values = np.atleast_1d(np.asarray(theta1_values, dtype=float))
    if not np.all(np.isfinite(theta1_values)):
        raise ValueError("theta1 sweep must be finite")
    out = np.zeros((len(theta1_values), 3))
    if abs(coupling.gain) < 1e-12:
        return out
    bend = coupling.theta_e - math.pi

    def endpoint(t1):
        ax = coupling.l1 * math.cos(t1) + coupling.l2 * math.cos(t1 + bend)
        ay = coupling.l1 * math.sin(t1) + coupling.l2 * math.sin(t1 + bend)
        return ax, ay

    scale = 1.0 - 1.0 / coupling.gain
    x0, y0 = endpoint(0.0)
    for k, t1 in enumerate(theta1_values):
        x, y = endpoint(float(t1))
        out[k, 0] = scale * (y - y0)   # forward (protraction)
        out[k, 1] = scale * (x - x0)   # lateral
    return out


# ---------------------------------------------------------------------------
# Range of motion


@dataclass(frozen=True)
class AxisLimit:
    min_rad: float
    max_rad: float
    joint: int

    def __post_init__(self):
        if not self.min_rad < self.max_rad:
            raise ValueError("axis limit needs min < max")


@dataclass(frozen=True)
class RomLimits:
    """Named motion axes, each mapped onto one active joint."""

    axes: dict[str, AxisLimit]


class AxisVerdict(NamedTuple):
    value: float
    min_rad: float
    max_rad: float
    within: bool


class RomReport(NamedTuple):
    axes: dict[str, AxisVerdict]
    ok: bool


_ROM_EPS = 1e-9


def check_rom(config: JointConfig, limits: RomLimits) -> RomReport:
    """Per-axis in/out verdicts; limits are inclusive."""
    axes = {}
    ok = True
    for name, lim in limits.axes.items():
        value = float(config.angles[lim.joint])
        within = bool((lim.min_rad - _ROM_EPS) <= value <= (lim.max_rad + _ROM_EPS))
        ok = ok and within
        axes[name] = AxisVerdict(value, lim.min_rad, lim.max_rad, within)
    return RomReport(axes, ok)


# ---------------------------------------------------------------------------
# Default chains


def build_exo_chain(coupling: ShoulderCoupling | None = None, d4: float = 0.28,
                    d5: float = 0.25, a6: float = 0.08,
                    gh_vertical_offset: float = 0.0) -> KinematicChain:
    """Exoskeleton chain: two base motors, the passive shoulder linkage driven
    by a third motor, then upper-arm rotation, elbow and wrist."""
    c = coupling or ShoulderCoupling()
    links = (
        DHLink(-math.pi / 2, gh_vertical_offset, 0.0, -math.pi / 2, ACTIVE, name="base_flexion"),
        DHLink(0.0, 0.0, 0.0, math.pi / 2, ACTIVE, name="base_abduction"),
        DHLink(0.0, 0.0, c.l1, 0.0, PASSIVE, 1, name="linkage_1"),
        DHLink(0.0, 0.0, c.l2, 0.0, PASSIVE, 2, name="linkage_2"),
        DHLink(0.0, 0.0, 0.0, -math.pi / 2, PASSIVE, 3, name="linkage_3"),
        DHLink(0.0, d4, 0.0, -math.pi / 2, ACTIVE, name="humeral_rotation"),
        DHLink(0.0, d5, 0.0, math.pi / 2, ACTIVE, name="elbow"),
        DHLink(0.0, 0.0, a6, math.pi / 2, ACTIVE, name="wrist"),
    )
    return KinematicChain(
        links=links, coupling=c, driver=2, humeral_link=5,
        joint_names=("flexion", "abduction", "horizontal", "humeral_rotation", "elbow", "wrist"),
    )


def build_orientation_cluster() -> tuple[DHLink, ...]:
    """Three-joint cluster whose composed rotation is Rx(q0) Ry(q1) Rz(q2).

    A fixed axis-permuting row in front of each of the first two joints points
    their z-axes along world x and y; the closing joint rotates about z
    directly, so the home pose is the identity.
    """
    half = math.pi / 2
    return (
        DHLink(half, 0.0, 0.0, half, FIXED, name="axes_shift"),
        DHLink(half, 0.0, 0.0, half, ACTIVE, name="about_x"),
        DHLink(half, 0.0, 0.0, half, ACTIVE, name="about_y"),
        DHLink(0.0, 0.0, 0.0, 0.0, ACTIVE, name="about_z"),
    )
