"""Unit-quaternion math shared by the kinematics, control and odometry layers.

Convention: scalar-first ``q = (w, x, y, z)`` representing a rotation of
angle ``theta`` about unit axis ``n`` as ``(cos(theta/2), sin(theta/2)*n)``.
Rotations compose left-to-right on column vectors: ``rotate(multiply(a, b), v)
== rotate(a, rotate(b, v))``.

All functions accept array-likes and return float64 numpy arrays. Inputs are
not mutated.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# below this vector-part norm the log/exp maps switch to their series forms
_SMALL_ANGLE = 1e-6

UNIT_TOL = 1e-6


class NonUnitQuaternionError(ValueError):
    """Raised when an operation requires a unit quaternion and |q| is off by more than UNIT_TOL."""


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise NonUnitQuaternionError("cannot normalize zero or non-finite quaternion")
    return q / n


def canonical(q) -> np.ndarray:
    """Return the representative of {q, -q} with non-negative scalar part."""
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0.0 else q.copy()


def check_unit(q, tol: float = UNIT_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > tol:
        raise NonUnitQuaternionError(f"quaternion norm {np.linalg.norm(q):.9f} deviates from 1 by more than {tol}")
    return q


def multiply(a, b) -> np.ndarray:
    """Hamilton product a * b."""
    aw, ax, ay, az = np.asarray(a, dtype=float)
    bw, bx, by, bz = np.asarray(b, dtype=float)
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotate(q, v) -> np.ndarray:
    """Rotate 3-vector v by unit quaternion q."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w, u = q[0], q[1:]
    # q v q* expanded: v + 2w(u x v) + 2 u x (u x v)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def rotation_angle(q) -> float:
    """Rotation angle in [0, pi] encoded by unit quaternion q."""
    q = canonical(np.asarray(q, dtype=float))
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), q[0])


def log_map(q) -> np.ndarray:
    """Rotation vector (axis * angle) of a unit quaternion.

    Continuous through the identity: for vector-part norms below 1e-6 the
    first-order series 2*v/w is used instead of the atan2 form.
    """
    q = canonical(np.asarray(q, dtype=float))
    w, v = q[0], q[1:]
    s = np.linalg.norm(v)
    if s < _SMALL_ANGLE:
        # series of 2*atan2(s, w)/s around s = 0
        return (2.0 / w) * v * (1.0 - s * s / (3.0 * w * w))
    angle = 2.0 * np.arctan2(s, w)
    return (angle / s) * v


def exp_map(rv) -> np.ndarray:
    """Unit quaternion for a rotation vector (inverse of log_map)."""
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < _SMALL_ANGLE:
        # sin(a/2)/a series keeps exp continuous at zero
        return normalize(np.concatenate(([1.0], 0.5 * rv * (1.0 - angle * angle / 24.0))))
    return np.concatenate(([np.cos(0.5 * angle)], np.sin(0.5 * angle) * rv / angle))


def to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def from_matrix(m) -> np.ndarray:
    """Unit quaternion of a rotation matrix (Shepperd's method), canonicalized."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return canonical(normalize(q))


def to_euler_zyx(q) -> np.ndarray:
    """Intrinsic Z-Y-X (yaw, pitch, roll) decomposition of a unit quaternion."""
    w, x, y, z = np.asarray(q, dtype=float)
    sp = 2.0 * (w * y - z * x)
    sp = np.clip(sp, -1.0, 1.0)
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    pitch = np.arcsin(sp)
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    return np.array([yaw, pitch, roll])


def from_euler_zyx(angles) -> np.ndarray:
    """Unit quaternion from intrinsic Z-Y-X (yaw, pitch, roll) angles."""
    yaw, pitch, roll = np.asarray(angles, dtype=float)
    qz = from_axis_angle([0, 0, 1], yaw)
    qy = from_axis_angle([0, 1, 0], pitch)
    qx = from_axis_angle([1, 0, 0], roll)
    return multiply(multiply(qz, qy), qx)


def random_unit(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (canonical form)."""
    q = rng.normal(size=4)
    return canonical(normalize(q))
