"""Particle filter over arclength along the planned route."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..pipe_map import PipeMap, distances_to_next_feature
from .sensors import UltrasonicModel, no_echo_probability, range_likelihood

log = logging.getLogger(__name__)

LIKELIHOOD_FLOOR = 1e-12


class Degenerate(RuntimeWarning):
    pass


@dataclass
class BeliefState:
    x: np.ndarray
    w: np.ndarray
    rng: np.random.Generator = field(repr=False)
    degenerate_count: int = 0

    def __post_init__(self):
        if self.x.shape != self.w.shape or self.x.ndim != 1:
            raise ValueError("particles and weights must be matching 1-D arrays")
        if self.x.size < 2:
            raise ValueError("need at least two particles")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.w**2))


def pf_init(pipe_map: PipeMap, n: int, rng: np.random.Generator) -> BeliefState:
    if n < 2:
        raise ValueError("need at least two particles")
    x = rng.uniform(0.0, pipe_map.total_length, n)
    return BeliefState(x, np.full(n, 1.0 / n), rng)


def systematic_resample(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = w.size
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def measurement_likelihood(
    x: np.ndarray, z: Optional[float], pipe_map: PipeMap, sensor: UltrasonicModel, sigma: float
) -> np.ndarray:
    d = distances_to_next_feature(pipe_map, x)
    if z is None:
        return no_echo_probability(d, sensor.max_range, sigma)
    return range_likelihood(z, d, sigma)


def pf_update(
    b: BeliefState,
    u: float,
    sigma_u: float,
    z: Optional[float],
    pipe_map: PipeMap,
    sensor: UltrasonicModel = UltrasonicModel(),
    z_sigma: Optional[float] = None,
) -> BeliefState:
    """Resample, propagate by odometry ``u`` with noise ``sigma_u``, reweight.

    ``z`` is a range reading or ``None`` for no echo.  When every particle's
    likelihood falls to the floor the belief is reinitialised uniformly.
    """
    if sigma_u <= 0:
        raise ValueError("sigma_u must be positive")
    if z_sigma is None:
        z_sigma = max(sensor.sigma, 1e-3)
    rng = b.rng
    idx = systematic_resample(b.w, rng)
    x = b.x[idx] + u + rng.normal(0.0, sigma_u, b.n)
    np.clip(x, 0.0, pipe_map.total_length, out=x)
    lik = measurement_likelihood(x, z, pipe_map, sensor, z_sigma)
    degenerate = b.degenerate_count
    if not np.any(lik > LIKELIHOOD_FLOOR):
        log.debug("particle filter degenerate; reinitialising")
        degenerate += 1
        x = rng.uniform(0.0, pipe_map.total_length, b.n)
        lik = measurement_likelihood(x, z, pipe_map, sensor, z_sigma)
        if not np.any(lik > LIKELIHOOD_FLOOR):
            lik = np.ones(b.n)
    lik = np.maximum(lik, LIKELIHOOD_FLOOR)
    eta = lik.sum()
    return BeliefState(x, lik / eta, rng, degenerate)


def pf_estimate(b: BeliefState) -> tuple[float, float, float]:
    mean = float(np.dot(b.w, b.x))
    var = float(np.dot(b.w, (b.x - mean) ** 2))
    return mean, max(var, 0.0) ** 0.5, b.ess
