"""Small quaternion helpers, scalar-first ``(w, x, y, z)``, body-to-world."""

from __future__ import annotations

import math


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q):
    return (q[0], -q[1], -q[2], -q[3])


def quat_axis_angle(axis, angle):
    h = 0.5 * angle
    s = math.sin(h)
    return (math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s)


Y_AXIS = (0.0, 1.0, 0.0)
Z_AXIS = (0.0, 0.0, 1.0)


def quat_from_phi_psi(phi, psi):
    """Rotation about y by ``phi`` followed (in the body) by z by ``psi``."""
    return quat_mul(quat_axis_angle(Y_AXIS, phi), quat_axis_angle(Z_AXIS, psi))


def quat_from_psi_phi(psi, phi):
    return quat_mul(quat_axis_angle(Z_AXIS, psi), quat_axis_angle(Y_AXIS, phi))


def rotation_matrix(q):
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def world_to_body(q, v):
    """Express world vector ``v`` in body coordinates."""
    Rm = rotation_matrix(q)
    return tuple(Rm[0][i] * v[0] + Rm[1][i] * v[1] + Rm[2][i] * v[2] for i in range(3))


def phi_psi(q, outer="phi"):
    """Decompose ``q`` as ``Ry(phi) Rz(psi)`` (or ``Rz(psi) Ry(phi)``).

    The outer angle is well defined over its full range; the inner one is
    limited to +-90 degrees.  Any residual roll about body x is ignored.
    """
    Rm = rotation_matrix(q)
    # First body axis expressed in world: column 0.
    ex = (Rm[0][0], Rm[1][0], Rm[2][0])
    if outer == "phi":
        psi = math.asin(max(-1.0, min(1.0, ex[1])))
        phi = math.atan2(-ex[2], ex[0])
    else:
        phi = math.asin(max(-1.0, min(1.0, -ex[2])))
        psi = math.atan2(ex[1], ex[0])
    return phi, psi


def normalize(q):
    n = math.sqrt(sum(c * c for c in q))
    return tuple(c / n for c in q)
