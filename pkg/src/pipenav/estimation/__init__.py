from .mahony import MahonyState, mahony_update, relative_angles
from .particle_filter import BeliefState, Degenerate, pf_estimate, pf_init, pf_update
from .sensors import NO_ECHO, ImuNoise, ImuSample, UltrasonicModel, UltrasonicSensor, imu_measure, ultrasonic_measure

__all__ = [
    "BeliefState",
    "Degenerate",
    "ImuNoise",
    "ImuSample",
    "MahonyState",
    "NO_ECHO",
    "UltrasonicModel",
    "UltrasonicSensor",
    "imu_measure",
    "mahony_update",
    "pf_estimate",
    "pf_init",
    "pf_update",
    "relative_angles",
    "ultrasonic_measure",
]
