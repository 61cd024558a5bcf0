"""Drag-driven motor load, battery discharge time and inspection range."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .dynamics import DRAG_VELOCITY_KNOTS, G, RobotParams, drag_force


class ZeroCurrent(RuntimeWarning):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    robot_speed: float = 0.5
    flow_speed: float = 0.7  # positive opposes the robot
    line_pressure: float = 100.0
    diameter: float = 0.508
    inclination: float = 0.0

    @property
    def relative_velocity(self) -> float:
        return self.robot_speed + self.flow_speed


def per_motor_force(op: OperatingPoint, p: RobotParams = RobotParams()) -> float:
    """Axial force each of the three wheels must supply, newtons.

    Negative when the flow pushes the robot along.
    """
    rel = op.relative_velocity
    if not DRAG_VELOCITY_KNOTS[0] <= rel <= DRAG_VELOCITY_KNOTS[-1]:
        warnings.warn(f"relative velocity {rel:.3f} m/s outside drag table; clamped", stacklevel=2)
    drag = drag_force(rel, op.line_pressure, warn=False)
    return (-drag + p.mass * G * math.sin(op.inclination)) / 3.0


def motor_current(force_per_wheel: float, p: RobotParams = RobotParams()) -> float:
    """Steady current for a wheel force; assisting loads draw nothing."""
    force = max(force_per_wheel, 0.0)
    return force * p.wheel_radius / p.motor.output_constant


@dataclass(frozen=True)
class RangeReport:
    force_per_motor: float
    current_per_motor: float
    total_current: float
    power: float
    discharge_time: float  # hours
    range: float  # meters


def range_estimate(op: OperatingPoint, p: RobotParams = RobotParams(), avionics_current: float = 0.0) -> RangeReport:
    force = per_motor_force(op, p)
    i_motor = motor_current(force, p)
    total = 3.0 * i_motor + avionics_current
    if total <= 0:
        warnings.warn("no current drawn; range is unbounded", ZeroCurrent, stacklevel=2)
        hours = math.inf
    else:
        hours = p.battery_capacity / total
    dist = op.robot_speed * hours * 3600.0 if hours != math.inf else math.inf
    return RangeReport(force, i_motor, total, total * p.battery_voltage, hours, dist)
