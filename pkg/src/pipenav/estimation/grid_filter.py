"""Exact histogram Bayes filter over arclength, used to check the particle filter.

Kept deliberately separate from the particle filter: it recomputes feature
distances and the sensor likelihood itself.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..pipe_map import PipeMap


class GridFilter:
    def __init__(self, pipe_map: PipeMap, resolution: float = 1e-3, max_range: float = 4.0, z_sigma: float = 0.01):
        self.map = pipe_map
        self.h = resolution
        self.total = pipe_map.total_length
        self.n = int(math.ceil(self.total / resolution))
        self.centers = (np.arange(self.n) + 0.5) * resolution
        self.centers[-1] = min(self.centers[-1], self.total)
        self.p = np.full(self.n, 1.0 / self.n)
        self.max_range = max_range
        self.z_sigma = z_sigma
        starts = [pipe_map.starts[k] for k, seg in enumerate(pipe_map.segments) if seg.is_feature]
        starts = [s for s in starts if s <= pipe_map.extraction_arclength]
        d = np.full(self.n, np.inf)
        for s0 in reversed(starts):
            d = np.where(self.centers < s0, s0 - self.centers, d)
        self.dist = d

    def predict(self, u: float, sigma_u: float):
        h = self.h
        half = int(math.ceil((abs(u) + 6.0 * sigma_u) / h)) + 1
        offsets = np.arange(-half, half + 1) * h
        # probability of landing in each destination bin
        cdf_hi = 0.5 * (1.0 + _erf((offsets + 0.5 * h - u) / (sigma_u * math.sqrt(2.0))))
        cdf_lo = 0.5 * (1.0 + _erf((offsets - 0.5 * h - u) / (sigma_u * math.sqrt(2.0))))
        kernel = cdf_hi - cdf_lo
        kernel /= kernel.sum()
        full = np.convolve(self.p, kernel)
        out = full[half : half + self.n].copy()
        out[0] += full[:half].sum()
        out[-1] += full[half + self.n :].sum()
        self.p = out / out.sum()

    def correct(self, z: Optional[float]):
        sig = self.z_sigma
        if z is None:
            lik = np.where(
                np.isfinite(self.dist),
                0.5 * (1.0 + _erf((self.dist - self.max_range) / (sig * math.sqrt(2.0)))),
                1.0,
            )
        else:
            r = np.where(np.isfinite(self.dist), (z - self.dist) / sig, np.inf)
            lik = np.exp(-0.5 * r * r)
        post = self.p * lik
        total = post.sum()
        if total > 0:
            self.p = post / total

    def estimate(self) -> tuple[float, float]:
        mean = float(np.dot(self.p, self.centers))
        var = float(np.dot(self.p, (self.centers - mean) ** 2))
        return mean, math.sqrt(max(var, 0.0))


def _erf(x):
    from scipy.special import erf

    return erf(x)
