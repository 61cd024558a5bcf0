"""Reference scenarios: stabilizer and tracking cases, turn maps, mission maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import Cruise, GainSchedule, Hold, MotionController, PidGains
from .dynamics import RobotParams, RobotState, integrate_step, with_segment_speeds
from .estimation import ImuNoise, MahonyState, imu_measure, mahony_update
from .pipe_map import ConfigEntry, PipeMap, PipeSegment, SegmentKind, Turn, build_map
from .rotations import phi_psi

INCH = 0.0254
RPM = 2.0 * math.pi / 60.0

# Initial (phi, psi) deviations in degrees, stabilizing at rest.
STABILIZER_CASES = ((-46.0, -37.0), (-25.0, -21.0), (22.0, 46.0), (15.0, 18.0))
# (v_d m/s, phi0 deg, psi0 deg) for stabilizing while tracking a speed.
TRACKING_CASES = ((0.10, 14.0, -23.0), (0.20, -13.0, 31.0), (0.30, -9.0, -18.0), (0.35, -4.0, 22.0))


@dataclass
class StabilizerRun:
    t: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    xdot: np.ndarray
    phi_hat: np.ndarray
    psi_hat: np.ndarray

    def settling_time(self, bound: float = math.radians(2.0)) -> float:
        """First time after which both angles stay inside ``bound``; inf if never."""
        outside = np.maximum(np.abs(self.phi), np.abs(self.psi)) >= bound
        if not outside.any():
            return float(self.t[0])
        last = int(np.nonzero(outside)[0][-1])
        return math.inf if last == len(self.t) - 1 else float(self.t[last + 1])

    def speed_at(self, when: float) -> float:
        return float(np.interp(when, self.t, self.xdot))


def run_stabilizer(
    phi0_deg: float,
    psi0_deg: float,
    v_d: float = 0.0,
    duration: float = 4.0,
    diameter: float = 14 * INCH,
    params: RobotParams = RobotParams(),
    noise: ImuNoise = ImuNoise(accel_sigma=0.05, gyro_sigma=0.002),
    seed: int = 0,
    dt: float = 1e-3,
    schedule: Optional[GainSchedule] = None,
) -> StabilizerRun:
    """Closed loop from an initial attitude deviation, with the attitude filter in the loop.

    The filter starts at the true launch attitude; rates come from the gyro.
    Reported angles are the true attitude split as ``Ry(phi) Rz(psi)``; the
    plant's raw rate integrals are path dependent and are not used.
    """
    rng = np.random.default_rng(seed)
    seg = PipeSegment.straight(50.0, diameter)
    state = with_segment_speeds(RobotState.initial(phi=math.radians(phi0_deg), psi=math.radians(psi0_deg)), seg, params)
    est = MahonyState(quat=state.quat)
    ctrl = MotionController(params, schedule or GainSchedule(params), PidGains())
    mode = Cruise(v_d) if v_d > 0 else Hold()
    n = int(round(duration / dt))
    out = np.empty((n + 1, 6))
    phi_hat, psi_hat = phi_psi(est.quat)
    out[0] = (state.t, *phi_psi(state.quat), state.xdot, phi_hat, psi_hat)
    for k in range(n):
        sample = imu_measure(state, noise, rng)
        est, phi_hat, psi_hat = mahony_update(est, sample, dt)
        gyro = [g - b for g, b in zip(sample.gyro, est.bias)]
        x_s = (phi_hat, gyro[1], psi_hat, gyro[2])
        volts = ctrl.command(mode, diameter, state.wheel_speeds, x_s, dt)
        state = integrate_step(state, volts, seg, params, dt)
        out[k + 1] = (state.t, *phi_psi(state.quat), state.xdot, phi_hat, psi_hat)
    return StabilizerRun(*out.T)


def junction_stop_map(dwell: float = 1.0, straight: float = 2.0, diameter: float = 14 * INCH) -> PipeMap:
    """Straight pipe ending at a T-junction passed straight through."""
    segs = [
        PipeSegment.straight(straight, diameter),
        PipeSegment.feature(SegmentKind.TJUNCTION, diameter, 12 * INCH),
        PipeSegment.straight(1.0, diameter),
    ]
    ct = [ConfigEntry(SegmentKind.TJUNCTION, Turn.STRAIGHT, dwell_time=dwell)]
    return build_map(segs, ct, extraction_arclength=straight + 0.3)


def bend_turn_map(dwell: float = 1.0) -> PipeMap:
    """12 in bend (R_i 12 in, R_o 24 in), phi -90 deg at 46/23 rpm."""
    D = 12 * INCH
    segs = [
        PipeSegment.straight(1.5, D),
        PipeSegment.feature(SegmentKind.BEND, D, 12 * INCH, 24 * INCH),
        PipeSegment.straight(1.5, D),
    ]
    ct = [ConfigEntry(SegmentKind.BEND, Turn.PHI_NEG, dwell_time=dwell, omega_max=46 * RPM, omega_min=23 * RPM)]
    return build_map(segs, ct)


def tjunction_turn_map(dwell: float = 1.0) -> PipeMap:
    """14 in T-junction (R_i 14 in, R_o 28 in), phi +90 deg; wheel speeds from 15 in/s."""
    D = 14 * INCH
    segs = [
        PipeSegment.straight(1.5, D),
        PipeSegment.feature(SegmentKind.TJUNCTION, D, 14 * INCH, 28 * INCH),
        PipeSegment.straight(1.5, D),
    ]
    ct = [ConfigEntry(SegmentKind.TJUNCTION, Turn.PHI_POS, dwell_time=dwell)]
    return build_map(segs, ct)


def three_feature_map(dwell: float = 2.0) -> PipeMap:
    """Straight-through T-junction, downward bend, then a psi turn at a T-junction."""
    D = 14 * INCH
    RI = 12 * INCH
    segs = [
        PipeSegment.straight(4.5, D),
        PipeSegment.feature(SegmentKind.TJUNCTION, D, RI),
        PipeSegment.straight(2.0, D),
        PipeSegment.feature(SegmentKind.BEND, D, RI),
        PipeSegment.straight(2.0, D),
        PipeSegment.feature(SegmentKind.TJUNCTION, D, RI),
        PipeSegment.straight(1.5, D),
    ]
    ct = [
        ConfigEntry(SegmentKind.TJUNCTION, Turn.STRAIGHT, dwell_time=dwell),
        ConfigEntry(SegmentKind.BEND, Turn.PHI_NEG, dwell_time=dwell, omega_max=46 * RPM, omega_min=23 * RPM),
        ConfigEntry(SegmentKind.TJUNCTION, Turn.PSI_POS, dwell_time=dwell),
    ]
    return build_map(segs, ct)
