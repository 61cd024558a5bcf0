"""Passive complementary (Mahony) attitude filter."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..rotations import phi_psi, quat_conj, quat_mul, world_to_body
from .sensors import ImuSample


@dataclass(frozen=True)
class MahonyState:
    quat: tuple = (1.0, 0.0, 0.0, 0.0)
    bias: tuple = (0.0, 0.0, 0.0)
    kp: float = 2.0
    ki: float = 0.1


def mahony_update(st: MahonyState, sample: ImuSample, dt: float):
    """One filter step; returns ``(state, phi_hat, psi_hat)``.

    The correction is the cross product between the measured and predicted
    gravity directions.  Rotation about the gravity axis gets no correction
    and is carried by the gyro alone.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = st.quat
    ax, ay, az = sample.accel
    an = math.sqrt(ax * ax + ay * ay + az * az)
    ex = ey = ez = 0.0
    bx, by, bz = st.bias
    if an > 0:
        ax, ay, az = ax / an, ay / an, az / an
        vx, vy, vz = world_to_body(q, (0.0, 0.0, -1.0))
        ex = ay * vz - az * vy
        ey = az * vx - ax * vz
        ez = ax * vy - ay * vx
        bx -= st.ki * ex * dt
        by -= st.ki * ey * dt
        bz -= st.ki * ez * dt
    gx, gy, gz = sample.gyro
    wx = gx - bx + st.kp * ex
    wy = gy - by + st.kp * ey
    wz = gz - bz + st.kp * ez
    # exact exponential for a rate held over the step
    wn = math.sqrt(wx * wx + wy * wy + wz * wz)
    if wn > 0:
        h = 0.5 * wn * dt
        s = math.sin(h) / wn
        dq = (math.cos(h), wx * s, wy * s, wz * s)
        q = quat_mul(q, dq)
    n = math.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    q = (q[0] / n, q[1] / n, q[2] / n, q[3] / n)
    new = MahonyState(q, (bx, by, bz), st.kp, st.ki)
    phi, psi = phi_psi(q)
    return new, phi, psi


def relative_angles(reference: tuple, quat: tuple, outer: str = "phi"):
    """(phi, psi) of ``quat`` measured in the frame ``reference``."""
    return phi_psi(quat_mul(quat_conj(reference), quat), outer)
