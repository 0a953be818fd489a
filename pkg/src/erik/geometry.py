"""Quaternion and vector primitives shared by every solver module.

Conventions used throughout the package:

* vectors are length-3 ``numpy`` arrays, quaternions are length-4 arrays
  stored scalar-first ``[w, x, y, z]``,
* quaternion products are Hamilton products; ``qmul(a, b)`` applies ``b``
  first, then ``a`` (column-matrix composition),
* frames are right handed with the parent segment of a joint aligned with
  the local +Y axis.
"""

from __future__ import annotations

import math

import numpy as np

EPS_GEO = 1e-6  # tolerance for the "approximately" guards of the solvers
_EPS_UNIT = 1e-9

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])
QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_BASIS = (X_HAT, Y_HAT, Z_HAT)
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def vec(x: float, y: float, z: float) -> np.ndarray:
    return np.array([float(x), float(y), float(z)])


def vnorm(v) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def normalize(v) -> np.ndarray:
    """Unit vector along ``v``; raises on (near-)zero input."""
    n = vnorm(v)
    if n < _EPS_UNIT:
        raise ValueError("cannot normalize a zero-length vector")
    return np.array([v[0] / n, v[1] / n, v[2] / n])


def dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def qmul(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (``b`` acts first on vectors)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def qconj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def qnormalize(q) -> np.ndarray:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n < _EPS_UNIT:
        raise ValueError("cannot normalize a zero quaternion")
    return np.array([q[0] / n, q[1] / n, q[2] / n, q[3] / n])


def qaa(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by ``angle`` about the unit ``axis``."""
    n = vnorm(axis)
    if abs(n - 1.0) > 1e-6:
        if n < _EPS_UNIT:
            raise ValueError("rotation axis must be non-zero")
        axis = (axis[0] / n, axis[1] / n, axis[2] / n)
    h = 0.5 * angle
    s = math.sin(h)
    return np.array([math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s])


def rot_v_q(v, q) -> np.ndarray:
    """Rotate vector ``v`` by unit quaternion ``q``."""
    w, x, y, z = q
    vx, vy, vz = v[0], v[1], v[2]
    # t = 2 * (q.v x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + q.v x t
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ])


def q_diff(q1, q2) -> np.ndarray:
    """Rotation ``r`` with ``r * q1 == q2`` (up to quaternion sign)."""
    return qmul(q2, qconj(q1))


def quat_to_matrix(q) -> np.ndarray:
    """Row-major rotation matrix of unit quaternion ``q``."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def quat_axis(q, axis: str) -> np.ndarray:
    """Basis column ``axis`` ('x' | 'y' | 'z') of the rotation matrix of ``q``.

    Equivalent to rotating the corresponding world unit vector by ``q``.
    """
    return rot_v_q(_BASIS[_AXIS_INDEX[axis]], q)


def matrix_to_quat(m) -> np.ndarray:
    """Unit quaternion of a proper rotation matrix (Shepperd's method)."""
    t = m[0][0] + m[1][1] + m[2][2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = (0.25 * s, (m[2][1] - m[1][2]) / s,
             (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
    elif m[0][0] > m[1][1] and m[0][0] > m[2][2]:
        s = math.sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2.0
        q = ((m[2][1] - m[1][2]) / s, 0.25 * s,
             (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
    elif m[1][1] > m[2][2]:
        s = math.sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2.0
        q = ((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s,
             0.25 * s, (m[1][2] + m[2][1]) / s)
    else:
        s = math.sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2.0
        q = ((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s,
             (m[1][2] + m[2][1]) / s, 0.25 * s)
    return qnormalize(np.array(q))


def v_diff_as_q(v1, v2) -> np.ndarray:
    """Minimal-arc quaternion mapping unit vector ``v1`` onto ``v2``.

    Antiparallel inputs rotate by pi about a deterministic perpendicular:
    the coordinate axis least aligned with ``v1``, made orthogonal to it.
    """
    d = dot(v1, v2)
    c = cross(v1, v2)
    cn = vnorm(c)
    if d > 1.0 - _EPS_UNIT and cn < _EPS_UNIT:
        return QUAT_IDENTITY.copy()
    if d < -1.0 + 1e-8 and cn < 1e-8:
        k = min(range(3), key=lambda i: abs(v1[i]))
        e = _BASIS[k]
        perp = normalize(e - dot(e, v1) * np.asarray(v1))
        return qaa(perp, math.pi)
    axis = (c[0] / cn, c[1] / cn, c[2] / cn)
    return qaa(axis, math.atan2(cn, d))


def vec_angle(v1, v2, ref=None) -> float:
    """Angle between ``v1`` and ``v2`` via atan2.

    Unsigned in [0, pi] without ``ref``; with ``ref`` the sign is negative
    when ``ref . (v1 x v2) < 0``, giving a result in (-pi, pi].
    """
    c = cross(v1, v2)
    cn = vnorm(c)
    d = dot(v1, v2)
    if cn < _EPS_UNIT and abs(d) < _EPS_UNIT:
        raise ValueError("vec_angle of a zero-length vector")
    theta = math.atan2(cn, d)
    if ref is not None and dot(ref, c) < 0.0:
        theta = -theta
    return theta


def project_onto_plane(v, n) -> np.ndarray:
    """Component of ``v`` orthogonal to the unit plane normal ``n``."""
    d = dot(v, n)
    return np.array([v[0] - d * n[0], v[1] - d * n[1], v[2] - d * n[2]])


def epa(q, axis) -> np.ndarray:
    """Ensure Positive Axis: negate ``q`` when its vector part opposes ``axis``."""
    if axis[0] * q[1] + axis[1] * q[2] + axis[2] * q[3] < 0.0:
        return np.array([-q[0], -q[1], -q[2], -q[3]])
    return np.asarray(q, dtype=float)


def quat_twist_angle(q, axis) -> float:
    """Signed rotation angle of ``q`` about ``axis``, wrapped to (-pi, pi].

    For ``q = +-qaa(axis, a)`` this recovers ``a`` regardless of the
    quaternion sign; for general ``q`` it is the swing-twist twist angle.
    """
    theta = 2.0 * math.atan2(
        axis[0] * q[1] + axis[1] * q[2] + axis[2] * q[3], q[0])
    if theta > math.pi:
        theta -= 2.0 * math.pi
    elif theta <= -math.pi:
        theta += 2.0 * math.pi
    return theta


def quat_rotation_angle(q) -> float:
    """Unsigned rotation angle of ``q`` in [0, pi]."""
    vn = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return 2.0 * math.atan2(vn, abs(q[0]))


def clamp_mag(w, d: float) -> np.ndarray:
    """``w`` unchanged when its norm is <= ``d``, else rescaled to norm ``d``."""
    w = np.asarray(w, dtype=float)
    n = float(np.linalg.norm(w))
    if n <= d or n == 0.0:
        return w
    return w * (d / n)


def clamp_max_abs(w, gamma: float) -> np.ndarray:
    """Rescale ``w`` so that no component magnitude exceeds ``gamma``."""
    w = np.asarray(w, dtype=float)
    m = float(np.max(np.abs(w))) if w.size else 0.0
    if m <= gamma or m == 0.0:
        return w
    return w * (gamma / m)


def ypr_decompose(q, pitch_axis):
    """Split ``q`` into yaw/pitch/roll factors ``q = Qy * Qp * Qr``.

    ``Qy`` and ``Qr`` rotate about world +Y, ``Qp`` about ``pitch_axis``.
    Each factor is sign-normalized (``epa``) against its own axis.
    Degenerate configurations (rotated Y parallel to +-Y) take explicit
    branches instead of failing.
    """
    u = Y_HAT
    x = np.asarray(pitch_axis, dtype=float)
    y_q = rot_v_q(u, q)
    x_q = rot_v_q(x, q)
    n = cross(u, y_q)
    nn = vnorm(n)
    if nn <= EPS_GEO:
        if dot(u, y_q) > 0.0:
            q_y = QUAT_IDENTITY.copy()
            q_p = QUAT_IDENTITY.copy()
            q_r = qaa(u, quat_twist_angle(q, u))
        else:
            q_y = QUAT_IDENTITY.copy()
            q_p = qaa(x, -math.pi)
            q_r = qaa(u, _angle_or_zero(x, x_q, y_q))
    else:
        if dot(n, x) < 0.0:
            n = -n
        n_hat = n / vnorm(n)
        q_y = qaa(u, _angle_or_zero(x, n_hat, u))
        q_p = qaa(x, _angle_or_zero(u, y_q, n_hat))
        q_r = qaa(u, _angle_or_zero(n_hat, x_q, y_q))
    return epa(q_y, u), epa(q_p, x), epa(q_r, u)


def signed_angle(v1, v2, ref) -> float:
    """Signed vec_angle that treats degenerate inputs as zero rotation.

    The solver loops guard their projections before measuring angles; this
    variant backs those call sites so a vanishing vector can never raise.
    """
    c = cross(v1, v2)
    cn = vnorm(c)
    d = dot(v1, v2)
    if cn < _EPS_UNIT and abs(d) < _EPS_UNIT:
        return 0.0
    theta = math.atan2(cn, d)
    if dot(ref, c) < 0.0:
        theta = -theta
    return theta


_angle_or_zero = signed_angle
