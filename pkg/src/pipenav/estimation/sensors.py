"""IMU and forward ultrasonic rangefinder models."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..dynamics import G, RobotState
from ..pipe_map import PipeMap, distance_to_next_feature
from ..rotations import world_to_body

# A missing echo is reported as None.
NO_ECHO = None


@dataclass(frozen=True)
class ImuSample:
    accel: tuple
    gyro: tuple
    t: float


@dataclass(frozen=True)
class ImuNoise:
    accel_sigma: float = 0.0
    gyro_sigma: float = 0.0
    gyro_bias: tuple = (0.0, 0.0, 0.0)


def imu_measure(true_state: RobotState, noise: ImuNoise, rng: np.random.Generator) -> ImuSample:
    """Gravity vector and body rates in the body frame, plus white noise.

    The accelerometer channel reports the gravity vector itself, so a level
    robot reads ``(0, 0, -g)``.
    """
    accel = world_to_body(true_state.quat, (0.0, 0.0, -G))
    gyro = (0.0, true_state.phi_dot, true_state.psi_dot)
    if noise.accel_sigma > 0:
        accel = tuple(a + float(e) for a, e in zip(accel, rng.normal(0.0, noise.accel_sigma, 3)))
    gyro = tuple(w + b for w, b in zip(gyro, noise.gyro_bias))
    if noise.gyro_sigma > 0:
        gyro = tuple(w + float(e) for w, e in zip(gyro, rng.normal(0.0, noise.gyro_sigma, 3)))
    return ImuSample(accel, gyro, true_state.t)


@dataclass(frozen=True)
class UltrasonicModel:
    max_range: float = 4.0
    sigma: float = 0.01
    update_period: float = 0.06
    latency: float = 0.02

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.update_period <= 0:
            raise ValueError("update_period must be positive")
        if self.latency < 0 or self.max_range <= 0:
            raise ValueError("latency must be >= 0 and max_range > 0")


def ultrasonic_measure(
    model: UltrasonicModel, pipe_map: PipeMap, s_true: float, rng: np.random.Generator
) -> Optional[float]:
    """Noisy range to the next feature, or ``NO_ECHO`` beyond ``max_range``."""
    d = distance_to_next_feature(pipe_map, s_true)
    if d is None:
        return NO_ECHO
    z = d + (float(rng.normal(0.0, model.sigma)) if model.sigma > 0 else 0.0)
    if z > model.max_range:
        return NO_ECHO
    return max(z, 0.0)


class UltrasonicSensor:
    """Schedules readings every ``update_period`` and applies the latency.

    ``poll`` is called every simulation step with the true arclength; it
    returns ``(True, reading)`` when a reading is delivered.  The reading
    describes where the robot was ``latency`` seconds earlier.  ``phase``
    offsets the schedule by a number of simulation steps.
    """

    def __init__(
        self, model: UltrasonicModel, pipe_map: PipeMap, rng: np.random.Generator, dt: float, phase: int = 0
    ):
        self.model = model
        self.map = pipe_map
        self.rng = rng
        self.period_steps = max(1, round(model.update_period / dt))
        self.delay_steps = round(model.latency / dt)
        self._history: deque = deque(maxlen=self.delay_steps + 1)
        self._step = phase

    def poll(self, s_true: float):
        self._history.append(s_true)
        due = self._step % self.period_steps == 0
        self._step += 1
        if not due:
            return False, NO_ECHO
        s_then = self._history[0]
        s_then = min(max(s_then, 0.0), self.map.total_length)
        return True, ultrasonic_measure(self.model, self.map, s_then, self.rng)


def no_echo_probability(d, max_range: float, sigma: float):
    """P(d + noise > max_range) for Gaussian noise; 1 where ``d`` is inf."""
    d = np.asarray(d, dtype=float)
    if sigma <= 0:
        return (d > max_range).astype(float)
    from scipy.special import ndtr

    return ndtr((d - max_range) / sigma)


def range_likelihood(z: float, d, sigma: float):
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    finite = np.isfinite(d)
    r = (z - d[finite]) / sigma
    out[finite] = np.exp(-0.5 * r * r) / (sigma * math.sqrt(2.0 * math.pi))
    return out
