"""Unit quaternion helpers, wxyz convention, canonical sign w >= 0.

q and -q encode the same rotation; canonicalize() collapses the double
cover so stored poses compare cleanly.
"""

import numpy as np

from .errors import InvalidStateError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float64)


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise InvalidStateError("cannot normalize a near-zero quaternion")
    return q / n


def canonicalize(q):
    """Normalize and flip sign so w >= 0."""
    q = normalize(q)
    if q[0] < 0:
        q = -q
    return q


def check_unit(q, tol=1e-6):
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise InvalidStateError(f"quaternion must have 4 components, got {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > tol:
        raise InvalidStateError(f"quaternion norm {np.linalg.norm(q):.6f} is not 1")
    return q


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return IDENTITY.copy()
    axis = axis / n
    half = 0.5 * angle
    return canonicalize(np.concatenate(([np.cos(half)], np.sin(half) * axis)))


def multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def to_matrix(q):
    w, x, y, z = normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def distance(p, q):
    """Geodesic rotation distance 2*acos(|<p, q>|) in [0, pi]."""
    p = check_unit(p)
    q = check_unit(q)
    d = abs(float(np.dot(p, q)))
    return 2.0 * np.arccos(min(d, 1.0))


def from_euler(roll, pitch, yaw):
    """Intrinsic x-y-z Euler angles (radians) -> canonical quaternion."""
    qx = from_axis_angle([1, 0, 0], roll)
    qy = from_axis_angle([0, 1, 0], pitch)
    qz = from_axis_angle([0, 0, 1], yaw)
    return canonicalize(multiply(multiply(qx, qy), qz))
