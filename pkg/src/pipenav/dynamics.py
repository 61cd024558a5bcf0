"""Plant model: gear motors, flow drag, rigid-body motion and RK4 integration.

Coordinates
-----------
The robot body has three generalized velocities: axial speed ``xdot`` along
the route, and body rates ``phi_dot`` (about body y) and ``psi_dot`` (about
body z).  Wheels roll without slip, so each wheel's rim speed is a linear
function of those three::

    R * w_i = xdot + Gphi_i * phi_dot + Gpsi_i * psi_dot

with lever arms taken from the moment equations (wheel 1 on the psi axis,
wheels 2 and 3 at +-120 degrees).  The lever arms sum to zero, so equal wheel
speeds give ``xdot = R * w`` exactly.

Orientation is carried as a unit quaternion integrated from the body rates;
``phi`` and ``psi`` are the plain integrals of the rates and are reported
alongside it.
"""

from __future__ import annotations

import bisect
import functools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

from .pipe_map import PipeSegment

G = 9.81
SQRT3 = math.sqrt(3.0)

# Relative velocity (m/s) -> drag (N) at 100 kPa; negative opposes forward motion.
# The (0, 0) knot keeps drag dissipative: no relative flow, no force.
DRAG_VELOCITY_KNOTS = (-0.2, 0.0, 0.1, 0.5, 1.0, 1.2)
DRAG_VELOCITY_VALUES = (0.6, 0.0, -0.2, -6.2, -14.4, -25.9)
# Line pressure (kPa) -> drag (N) at 1.2 m/s.
DRAG_PRESSURE_KNOTS = (100.0, 200.0, 300.0, 400.0, 500.0)
DRAG_PRESSURE_VALUES = (-25.9, -24.4, -18.3, -19.3, -18.9)
DRAG_REFERENCE = -25.9


class GeometryError(ValueError):
    pass


class NumericalDivergence(RuntimeError):
    pass


class DragTableWarning(UserWarning):
    pass


def _interp(knots: Sequence[float], values: Sequence[float], x: float) -> float:
    if x <= knots[0]:
        return values[0]
    if x >= knots[-1]:
        return values[-1]
    k = bisect.bisect_right(knots, x) - 1
    x0, x1 = knots[k], knots[k + 1]
    if x == x0:
        return values[k]
    y0, y1 = values[k], values[k + 1]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def drag_force(rel_velocity: float, line_pressure: float, warn: bool = True) -> float:
    """Flow drag on the robot in newtons.

    Piecewise-linear in relative velocity along the 100 kPa curve, scaled by
    the 1.2 m/s pressure curve relative to its 100 kPa value.  Inputs outside
    the tabulated hull are clamped.
    """
    if warn and not (
        DRAG_VELOCITY_KNOTS[0] <= rel_velocity <= DRAG_VELOCITY_KNOTS[-1]
        and DRAG_PRESSURE_KNOTS[0] <= line_pressure <= DRAG_PRESSURE_KNOTS[-1]
    ):
        warnings.warn(
            f"drag query ({rel_velocity:.3f} m/s, {line_pressure:.1f} kPa) clamped to table hull",
            DragTableWarning,
            stacklevel=2,
        )
    base = _interp(DRAG_VELOCITY_KNOTS, DRAG_VELOCITY_VALUES, rel_velocity)
    at_pressure = _interp(DRAG_PRESSURE_KNOTS, DRAG_PRESSURE_VALUES, line_pressure)
    if at_pressure == DRAG_REFERENCE:
        return base
    if base == DRAG_REFERENCE:
        return at_pressure
    return base * (at_pressure / DRAG_REFERENCE)


@dataclass(frozen=True)
class MotorParams:
    torque_constant: float  # K_v, N*m/A at the rotor (= V*s/rad)
    inductance: float
    resistance: float
    gear_ratio: float
    load_inertia: float
    rotor_inertia: float
    v_max: float = 12.0
    i_stall: float = 0.0

    def __post_init__(self):
        for name in ("torque_constant", "inductance", "resistance", "load_inertia", "rotor_inertia", "v_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"motor {name} must be positive")
        if self.gear_ratio < 1:
            raise ValueError("gear ratio must be >= 1")
        if self.i_stall <= 0:
            object.__setattr__(self, "i_stall", self.v_max / self.resistance)

    @property
    def output_constant(self) -> float:
        """Output-shaft torque per ampere, ``n * K_v``."""
        return self.gear_ratio * self.torque_constant

    @property
    def output_inertia(self) -> float:
        return self.load_inertia + self.gear_ratio**2 * self.rotor_inertia


def calibrate_motor(
    force: float = -DRAG_REFERENCE / 3.0,
    current: float = 0.47,
    speed: float = 0.5,
    voltage: float = 12.0,
    wheel_radius: float = 0.05,
    gear_ratio: float = 50.0,
    inductance: float = 5e-3,
    load_inertia: float = 5e-5,
    rotor_inertia: float = 1e-6,
) -> MotorParams:
    """Motor constants that reproduce a steady operating point.

    At steady state the output torque ``force * R`` needs ``current``, and the
    supply ``voltage`` covers the resistive drop plus back-EMF at the wheel
    speed for ``speed``.  The default point is the worst-case mission: a
    third of the 100 kPa / 1.2 m/s drag per wheel, 0.47 A, 12 V, 0.5 m/s.
    """
    torque = force * wheel_radius
    output_constant = torque / current
    omega = speed / wheel_radius
    resistance = (voltage - output_constant * omega) / current
    if resistance <= 0:
        raise ValueError("operating point needs more than the supply voltage")
    return MotorParams(
        torque_constant=output_constant / gear_ratio,
        inductance=inductance,
        resistance=resistance,
        gear_ratio=gear_ratio,
        load_inertia=load_inertia,
        rotor_inertia=rotor_inertia,
        v_max=voltage,
    )


@dataclass(frozen=True)
class RobotParams:
    mass: float = 2.23
    arm_length: float = 0.17
    wheel_radius: float = 0.05
    I_yy: float = 0.0126
    I_zz: float = 0.0093
    motor: MotorParams = field(default_factory=calibrate_motor)
    battery_capacity: float = 4.23  # Ah
    battery_voltage: float = 12.0
    # Pipe wall to arm-pivot circle, per side.  The arm geometry sees
    # ``D - 2 * span_offset``; 0.0878 maps a 14 in pipe to an 18 cm span.
    span_offset: float = 0.0878
    gravity_moment: str = "sin"

    def __post_init__(self):
        for name in ("mass", "arm_length", "wheel_radius", "I_yy", "I_zz", "battery_capacity", "battery_voltage"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.span_offset < 0:
            raise ValueError("span_offset must be non-negative")
        if self.gravity_moment not in ("sin", "cos"):
            raise ValueError("gravity_moment must be 'sin' or 'cos'")

    def span_diameter(self, pipe_diameter: float) -> float:
        return pipe_diameter - 2.0 * self.span_offset


def arm_angle(D: float, L: float) -> float:
    """Arm angle from the pipe axis for a centered body, ``arccos(D / 2L)``."""
    if not 0.0 <= D < 2.0 * L:
        raise GeometryError(f"arms of length {L} m cannot span a {D} m diameter")
    return math.acos(D / (2.0 * L))


def traction_force(torque: float, R: float) -> float:
    if R <= 0:
        raise ValueError("wheel radius must be positive")
    return torque / R


@dataclass(frozen=True)
class MotorState:
    i_m: float = 0.0
    theta_dot: float = 0.0


def _motor_rates(i_m, w, v_co, load_torque, p: MotorParams):
    di = (v_co - p.output_constant * w - p.resistance * i_m) / p.inductance
    dw = (p.output_constant * i_m - load_torque) / p.output_inertia
    return di, dw


def motor_step(state: MotorState, v_co: float, load_torque: float, p: MotorParams, dt: float) -> MotorState:
    """Advance one isolated gear motor by one RK4 step.

    ``theta_dot`` is the output-shaft speed; ``load_torque`` acts on the
    output shaft.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = min(max(v_co, -p.v_max), p.v_max)
    i0, w0 = state.i_m, state.theta_dot
    k1 = _motor_rates(i0, w0, v, load_torque, p)
    k2 = _motor_rates(i0 + 0.5 * dt * k1[0], w0 + 0.5 * dt * k1[1], v, load_torque, p)
    k3 = _motor_rates(i0 + 0.5 * dt * k2[0], w0 + 0.5 * dt * k2[1], v, load_torque, p)
    k4 = _motor_rates(i0 + dt * k3[0], w0 + dt * k3[1], v, load_torque, p)
    i1 = i0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    w1 = w0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    i1 = min(max(i1, -p.i_stall), p.i_stall)
    return MotorState(i1, w1)


def gravity_moment(p: RobotParams, inclination: float, D_span: float) -> float:
    theta = arm_angle(D_span, p.arm_length)
    trig = math.sin(inclination) if p.gravity_moment == "sin" else math.cos(inclination)
    return -p.mass * G * trig * p.arm_length * math.sin(theta)


def rigid_body_derivatives(
    F: Sequence[float],
    seg: PipeSegment,
    p: RobotParams,
    xdot: float = 0.0,
    drag: float | None = None,
    include_gravity_moment: bool = True,
) -> tuple[float, float, float]:
    """Body accelerations ``(xddot, phi_ddot, psi_ddot)`` for wheel tractions ``F``.

    ``drag`` overrides the tabulated drag (signed, negative opposes motion).
    """
    F1, F2, F3 = F
    D = p.span_diameter(seg.diameter)
    theta = arm_angle(D, p.arm_length)
    Lc = p.arm_length * math.cos(theta)
    if drag is None:
        drag = drag_force(xdot + seg.flow_velocity, seg.line_pressure)
    xddot = (F1 + F2 + F3 - p.mass * G * math.sin(seg.inclination) + drag) / p.mass
    phi_ddot = 0.5 * SQRT3 * Lc * (F3 - F2) / p.I_yy
    moment = Lc * (0.5 * F3 + 0.5 * F2 - F1)
    if include_gravity_moment:
        moment += gravity_moment(p, seg.inclination, D)
    psi_ddot = moment / p.I_zz
    return xddot, phi_ddot, psi_ddot


@dataclass(frozen=True)
class RobotState:
    s: float = 0.0
    xdot: float = 0.0
    phi: float = 0.0
    phi_dot: float = 0.0
    psi: float = 0.0
    psi_dot: float = 0.0
    currents: tuple = (0.0, 0.0, 0.0)
    wheel_speeds: tuple = (0.0, 0.0, 0.0)
    quat: tuple = (1.0, 0.0, 0.0, 0.0)  # body-to-world, (w, x, y, z)
    t: float = 0.0

    @property
    def motors(self) -> tuple:
        return tuple(MotorState(i, w) for i, w in zip(self.currents, self.wheel_speeds))

    @classmethod
    def initial(cls, s: float = 0.0, phi: float = 0.0, psi: float = 0.0) -> "RobotState":
        """State at rest with the body rotated by ``phi`` about y, then ``psi`` about z."""
        from .rotations import quat_from_phi_psi

        return cls(s=s, phi=phi, psi=psi, quat=quat_from_phi_psi(phi, psi))


class _Geometry:
    """Per-diameter constants: lever arms and the inverse effective mass matrix."""

    def __init__(self, p: RobotParams, diameter: float):
        D = p.span_diameter(diameter)
        theta = arm_angle(D, p.arm_length)
        Lc = p.arm_length * math.cos(theta)
        self.D_span = D
        self.gphi = (0.0, -0.5 * SQRT3 * Lc, 0.5 * SQRT3 * Lc)
        self.gpsi = (-Lc, 0.5 * Lc, 0.5 * Lc)
        self.grav_sin = -p.mass * G * p.arm_length * math.sin(theta)
        R = p.wheel_radius
        j = p.motor.output_inertia / R**2
        rows = [(1.0, self.gphi[i], self.gpsi[i]) for i in range(3)]
        M = [[0.0] * 3 for _ in range(3)]
        for a in range(3):
            for b in range(3):
                M[a][b] = j * sum(r[a] * r[b] for r in rows)
        M[0][0] += p.mass
        M[1][1] += p.I_yy
        M[2][2] += p.I_zz
        self.Minv = _inv3(M)


def _inv3(M):
    a, b, c = M[0]
    d, e, f = M[1]
    g, h, i = M[2]
    A = e * i - f * h
    B = -(d * i - f * g)
    C = d * h - e * g
    det = a * A + b * B + c * C
    return (
        (A / det, -(b * i - c * h) / det, (b * f - c * e) / det),
        (B / det, (a * i - c * g) / det, -(a * f - c * d) / det),
        (C / det, -(a * h - b * g) / det, (a * e - b * d) / det),
    )


@functools.lru_cache(maxsize=64)
def geometry(p: RobotParams, diameter: float) -> _Geometry:
    return _Geometry(p, diameter)


def wheel_speeds(p: RobotParams, diameter: float, xdot: float, phi_dot: float, psi_dot: float) -> tuple:
    g = geometry(p, diameter)
    R = p.wheel_radius
    return tuple((xdot + g.gphi[i] * phi_dot + g.gpsi[i] * psi_dot) / R for i in range(3))


def body_rates(p: RobotParams, diameter: float, speeds: Sequence[float]) -> tuple:
    """Invert the rolling constraint: wheel speeds -> (xdot, phi_dot, psi_dot)."""
    g = geometry(p, diameter)
    R = p.wheel_radius
    w1, w2, w3 = (R * w for w in speeds)
    xdot = (w1 + w2 + w3) / 3.0
    phi_dot = (w3 - w2) / (2.0 * g.gphi[2])
    psi_dot = (w1 - xdot) / g.gpsi[0]
    return xdot, phi_dot, psi_dot


def _derivative(y, volts, seg: PipeSegment, p: RobotParams, g: _Geometry):
    _, xd, _, phd, _, psd, q0, q1, q2, q3, i1, i2, i3 = y
    m = p.motor
    R = p.wheel_radius
    kt = m.output_constant
    gphi, gpsi = g.gphi, g.gpsi
    w1 = (xd + gpsi[0] * psd) / R
    w2 = (xd + gphi[1] * phd + gpsi[1] * psd) / R
    w3 = (xd + gphi[2] * phd + gpsi[2] * psd) / R
    Lm, Rm = m.inductance, m.resistance
    di1 = (volts[0] - kt * w1 - Rm * i1) / Lm
    di2 = (volts[1] - kt * w2 - Rm * i2) / Lm
    di3 = (volts[2] - kt * w3 - Rm * i3) / Lm
    f1, f2, f3 = kt * i1 / R, kt * i2 / R, kt * i3 / R
    drag = drag_force(xd + seg.flow_velocity, seg.line_pressure, warn=False)
    alpha = seg.inclination
    qx = f1 + f2 + f3 - p.mass * G * math.sin(alpha) + drag
    qphi = gphi[1] * f2 + gphi[2] * f3
    trig = math.sin(alpha) if p.gravity_moment == "sin" else math.cos(alpha)
    qpsi = gpsi[0] * f1 + gpsi[1] * f2 + gpsi[2] * f3 + g.grav_sin * trig
    Mi = g.Minv
    xdd = Mi[0][0] * qx + Mi[0][1] * qphi + Mi[0][2] * qpsi
    phdd = Mi[1][0] * qx + Mi[1][1] * qphi + Mi[1][2] * qpsi
    psdd = Mi[2][0] * qx + Mi[2][1] * qphi + Mi[2][2] * qpsi
    # q_dot = 0.5 * q (x) (0, 0, phd, psd)
    dq0 = 0.5 * (-q2 * phd - q3 * psd)
    dq1 = 0.5 * (q2 * psd - q3 * phd)
    dq2 = 0.5 * (q0 * phd - q1 * psd)
    dq3 = 0.5 * (q0 * psd + q1 * phd)
    return (xd, xdd, phd, phdd, psd, psdd, dq0, dq1, dq2, dq3, di1, di2, di3)


def plant_accelerations(state: RobotState, voltages, seg: PipeSegment, p: RobotParams):
    """Generalized accelerations and the wheel tractions that produce them."""
    g = geometry(p, seg.diameter)
    y = _pack(state)
    volts = _clamp_volts(voltages, p)
    d = _derivative(y, volts, seg, p, g)
    xdd, phdd, psdd = d[1], d[3], d[5]
    R = p.wheel_radius
    J = p.motor.output_inertia
    kt = p.motor.output_constant
    forces = []
    for i in range(3):
        wdd = (xdd + g.gphi[i] * phdd + g.gpsi[i] * psdd) / R
        forces.append((kt * state.currents[i] - J * wdd) / R)
    return (xdd, phdd, psdd), tuple(forces)


def _pack(st: RobotState):
    return (st.s, st.xdot, st.phi, st.phi_dot, st.psi, st.psi_dot, *st.quat, *st.currents)


def _clamp_volts(voltages, p: RobotParams):
    vmax = p.motor.v_max
    return tuple(min(max(float(v), -vmax), vmax) for v in voltages)


def integrate_step(
    state: RobotState,
    voltages: Sequence[float],
    seg: PipeSegment,
    p: RobotParams,
    dt: float,
    max_substep: float = 1e-3,
) -> RobotState:
    """Advance the coupled motor and body equations by ``dt`` with RK4.

    Steps longer than ``max_substep`` are split into equal sub-steps.
    """
    if not 0 < dt <= 0.01 + 1e-12:
        raise ValueError("dt must lie in (0, 0.01] s")
    volts = _clamp_volts(voltages, p)
    g = geometry(p, seg.diameter)
    n = max(1, math.ceil(dt / max_substep - 1e-9))
    h = dt / n
    y = _pack(state)
    istall = p.motor.i_stall
    for _ in range(n):
        k1 = _derivative(y, volts, seg, p, g)
        y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
        k2 = _derivative(y2, volts, seg, p, g)
        y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
        k3 = _derivative(y3, volts, seg, p, g)
        y4 = tuple(a + h * b for a, b in zip(y, k3))
        k4 = _derivative(y4, volts, seg, p, g)
        y = [a + h / 6.0 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]
        qn = math.sqrt(y[6] ** 2 + y[7] ** 2 + y[8] ** 2 + y[9] ** 2)
        for k in range(6, 10):
            y[k] /= qn
        for k in range(10, 13):
            y[k] = min(max(y[k], -istall), istall)
        y = tuple(y)
    _check_sane(y)
    s, xd, ph, phd, ps, psd = y[:6]
    return RobotState(
        s=s,
        xdot=xd,
        phi=ph,
        phi_dot=phd,
        psi=ps,
        psi_dot=psd,
        currents=tuple(y[10:13]),
        wheel_speeds=wheel_speeds(p, seg.diameter, xd, phd, psd),
        quat=tuple(y[6:10]),
        t=state.t + dt,
    )


def _check_sane(y):
    if not all(math.isfinite(v) for v in y):
        raise NumericalDivergence("non-finite plant state")
    if abs(y[1]) > 20.0 or abs(y[3]) > 200.0 or abs(y[5]) > 200.0:
        raise NumericalDivergence(
            f"plant rates out of bounds: xdot={y[1]:.3g}, phi_dot={y[3]:.3g}, psi_dot={y[5]:.3g}"
        )


def with_segment_speeds(state: RobotState, seg: PipeSegment, p: RobotParams) -> RobotState:
    """Recompute wheel speeds after a change of pipe diameter."""
    return replace(state, wheel_speeds=wheel_speeds(p, seg.diameter, state.xdot, state.phi_dot, state.psi_dot))
