"""Controller phases: LQR stabilizer, wheel PID loops and differential steering."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .dynamics import SQRT3, GeometryError, RobotParams, arm_angle, geometry
from .pipe_map import Turn


class NotStabilizable(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D_pipe: float


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray = field(default_factory=lambda: np.diag([200.0, 10.0, 200.0, 10.0]))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.shape != (4, 4) or R.shape != (3, 3):
            raise ValueError("Q must be 4x4 and R 3x3")
        if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray
    P: np.ndarray
    care_residual: float
    closed_loop_eigenvalues: np.ndarray


def linearize(p: RobotParams, D: float) -> LinearModel:
    """Stabilizing-state model about the upright equilibrium at arm-span ``D``."""
    theta = arm_angle(D, p.arm_length)
    Lc = p.arm_length * math.cos(theta)
    R = p.wheel_radius
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[2, 3] = 1.0
    b_phi = 0.5 * SQRT3 * Lc / (R * p.I_yy)
    b_psi = Lc / (R * p.I_zz)
    B = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, -b_phi, b_phi],
            [0.0, 0.0, 0.0],
            [-b_psi, 0.5 * b_psi, 0.5 * b_psi],
        ]
    )
    C = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    return LinearModel(A, B, C, D)


def care_residual(A, B, Q, R, P) -> float:
    return float(np.linalg.norm(-P @ A - A.T @ P - Q + P @ B @ np.linalg.solve(R, B.T) @ P, "fro"))


def _check_stabilizable(A, B, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-8 * max(1.0, np.abs(M).max())) < n:
                raise NotStabilizable(f"mode {lam:.3g} is not reachable from the inputs")


def solve_care(model: LinearModel, w: LqrWeights = LqrWeights(), newton_steps: int = 3) -> LqrGain:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Uses the ordered real Schur form of the Hamiltonian matrix, followed by a
    few Newton-Kleinman refinement sweeps.
    """
    A, B, Q, R = model.A, model.B, w.Q, w.R
    n = A.shape[0]
    _check_stabilizable(A, B)
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    T, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NoConvergence(f"Hamiltonian has {sdim} stable eigenvalues, expected {n}")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise NoConvergence("stable invariant subspace is not a graph")
    P = np.linalg.solve(U11.T, U21.T).T
    P = 0.5 * (P + P.T)
    for _ in range(newton_steps):
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            break
        rhs = -(Q + K.T @ R @ K)
        P_next = scipy.linalg.solve_continuous_lyapunov(Acl.T, rhs)
        P_next = 0.5 * (P_next + P_next.T)
        if care_residual(A, B, Q, R, P_next) > care_residual(A, B, Q, R, P):
            break
        P = P_next
    K = np.linalg.solve(R, B.T @ P)
    eig = np.linalg.eigvals(A - B @ K)
    residual = care_residual(A, B, Q, R, P)
    if np.max(eig.real) >= 0:
        raise NoConvergence("closed loop is not Hurwitz")
    return LqrGain(K, P, residual, eig)


def stabilizer_control(x_s: Sequence[float], gain: LqrGain) -> np.ndarray:
    """Wheel torques ``u = -K x_s`` (N*m at the output shaft)."""
    x = np.asarray(x_s, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite stabilizing state")
    return -gain.K @ x


def torque_to_voltage(torque: float, wheel_speed: float, p: RobotParams) -> float:
    """Steady-state motor inversion: resistive drop plus back-EMF, saturated."""
    m = p.motor
    v = m.resistance * torque / m.output_constant + m.output_constant * wheel_speed
    return min(max(v, -m.v_max), m.v_max)


@dataclass
class PidGains:
    K_p: float = 8.7313
    K_I: float = 322.4160
    K_D: float = 0.0073
    output_limit: float = 12.0
    integral_limit: float = 12.0

    def __post_init__(self):
        if min(self.K_p, self.K_I, self.K_D) < 0:
            raise ValueError("PID gains must be non-negative")


class PidController:
    """Positional PID on wheel speed; derivative on measurement, clamped integral."""

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.integral = 0.0
        self._last: Optional[float] = None

    def reset(self):
        self.integral = 0.0
        self._last = None

    def step(self, setpoint: float, measurement: float, dt: float) -> float:
        if dt <= 0:
            raise ValueError("dt must be positive")
        g = self.gains
        err = setpoint - measurement
        self.integral += g.K_I * err * dt
        self.integral = min(max(self.integral, -g.integral_limit), g.integral_limit)
        deriv = 0.0 if self._last is None else -(measurement - self._last) / dt
        self._last = measurement
        out = g.K_p * err + self.integral + g.K_D * deriv
        return min(max(out, -g.output_limit), g.output_limit)


@dataclass(frozen=True)
class DifferentialCommand:
    motion_type: Turn
    omega_max: float
    omega_min: float
    target_angle: float = math.nan

    def __post_init__(self):
        if self.motion_type is Turn.STRAIGHT:
            raise ValueError("differential motion needs a turn direction")
        if not self.omega_max >= self.omega_min >= 0:
            raise ValueError("need omega_max >= omega_min >= 0")
        if math.isnan(self.target_angle):
            object.__setattr__(self, "target_angle", self.motion_type.sign * 0.5 * math.pi)


def differential_setpoints(cmd: DifferentialCommand) -> tuple[float, float, float]:
    hi, lo = cmd.omega_max, cmd.omega_min
    avg = 0.5 * (hi + lo)
    return {
        Turn.PHI_POS: (avg, lo, hi),
        Turn.PHI_NEG: (avg, hi, lo),
        Turn.PSI_POS: (lo, hi, hi),
        Turn.PSI_NEG: (hi, lo, lo),
    }[cmd.motion_type]


def turn_wheel_speeds(speed: float, wheel_radius: float, inner_radius: float, outer_radius: float):
    """(omega_max, omega_min) for a feature: mean wheel speed gives ``speed``
    and the max/min ratio equals the feature's outer/inner radius ratio."""
    avg = speed / wheel_radius
    ratio = outer_radius / inner_radius
    return 2.0 * avg * ratio / (1.0 + ratio), 2.0 * avg / (1.0 + ratio)


class RotationStatus(enum.Enum):
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    DEVIATING = "deviating"


def rotation_error_check(
    orientation: tuple[float, float],
    cmd: DifferentialCommand,
    tol: float,
    deviation_bound: float = math.radians(25.0),
) -> RotationStatus:
    """Classify turn progress from ``(phi, psi)`` measured since the turn began."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    phi, psi = orientation
    if cmd.motion_type.axis == "phi":
        along, across = phi, psi
    else:
        along, across = psi, phi
    if abs(across) > deviation_bound:
        return RotationStatus.DEVIATING
    if abs(along - cmd.target_angle) <= tol:
        return RotationStatus.COMPLETED
    return RotationStatus.IN_PROGRESS


class GainSchedule:
    """LQR gains keyed by arm-span diameter, computed on first use."""

    def __init__(self, params: RobotParams, weights: LqrWeights = LqrWeights()):
        self.params = params
        self.weights = weights
        self._cache: dict[float, LqrGain] = {}

    def gain_for_pipe(self, pipe_diameter: float) -> LqrGain:
        D = round(self.params.span_diameter(pipe_diameter), 9)
        if D not in self._cache:
            self._cache[D] = solve_care(linearize(self.params, D), self.weights)
        return self._cache[D]


@dataclass(frozen=True)
class Hold:
    """Phase 1: stabilize at zero axial speed."""


@dataclass(frozen=True)
class Cruise:
    """Phase 2: stabilize and track an axial speed."""

    speed: float


@dataclass(frozen=True)
class Steer:
    """Phase 3: fixed wheel-speed setpoints, no stabilizer."""

    setpoints: tuple


@dataclass(frozen=True)
class Idle:
    """Motors off (after Done or Fault)."""


class MotionController:
    """Turns a control mode plus measurements into motor voltages.

    In the stabilizing modes the LQR owns the zero-sum (rotational) part of
    the wheel torques and one PID per wheel owns the axial speed.  Each PID
    sees its encoder speed with the gyro-measured rotation removed, so the two
    loops do not fight over the same motion.
    """

    def __init__(self, params: RobotParams, schedule: GainSchedule, pid_gains: PidGains = PidGains()):
        self.params = params
        self.schedule = schedule
        self.pids = [PidController(pid_gains) for _ in range(3)]
        self._mode = None
        self.last_torques = (0.0, 0.0, 0.0)

    def command(self, mode, pipe_diameter: float, encoder: Sequence[float], x_s: Sequence[float], dt: float):
        if type(mode) is not type(self._mode):
            for pid in self.pids:
                pid.reset()
        self._mode = mode
        p = self.params
        if isinstance(mode, Idle):
            self.last_torques = (0.0, 0.0, 0.0)
            return (0.0, 0.0, 0.0)
        if isinstance(mode, Steer):
            self.last_torques = (0.0, 0.0, 0.0)
            return tuple(pid.step(sp, w, dt) for pid, sp, w in zip(self.pids, mode.setpoints, encoder))
        speed = mode.speed if isinstance(mode, Cruise) else 0.0
        g = geometry(p, pipe_diameter)
        R = p.wheel_radius
        gain = self.schedule.gain_for_pipe(pipe_diameter)
        torques = stabilizer_control(x_s, gain)
        self.last_torques = tuple(float(t) for t in torques)
        phi_dot, psi_dot = x_s[1], x_s[3]
        m = p.motor
        mean_w = sum(encoder) / 3.0
        volts = []
        for i in range(3):
            rot = (g.gphi[i] * phi_dot + g.gpsi[i] * psi_dot) / R
            axial = encoder[i] - rot
            v_pid = self.pids[i].step(speed / R, axial, dt)
            v_lqr = m.resistance * torques[i] / m.output_constant + m.output_constant * (encoder[i] - mean_w)
            volts.append(min(max(v_pid + v_lqr, -m.v_max), m.v_max))
        return tuple(volts)
