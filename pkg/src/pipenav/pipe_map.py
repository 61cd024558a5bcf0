"""Pipeline route model: ordered segments plus the configuration-type array.

The route is a single traversal path from the launch point to the extraction
point.  Straight segments carry inclination and line conditions; bends and
T-junctions are the "features" the navigator stops at, and each one has a
matching :class:`ConfigEntry` describing what the robot should do there.
"""

from __future__ import annotations

import bisect
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MIN_DIAMETER = 0.2286  # 9 in
MAX_DIAMETER = 0.508  # 20 in
MIN_PRESSURE = 100.0  # kPa
MAX_PRESSURE = 500.0
DEFAULT_DWELL = 60.0


class MapError(ValueError):
    """Base class for route validation failures."""


class EmptyMap(MapError):
    pass


class CountMismatch(MapError):
    pass


class IllegalTurn(MapError):
    pass


class OrderMismatch(MapError):
    """A CT entry's feature kind disagrees with the segment at its position."""


class OutOfRange(MapError):
    pass


class MapWarning(UserWarning):
    pass


class SegmentKind(enum.Enum):
    STRAIGHT = "straight"
    BEND = "bend"
    TJUNCTION = "tjunction"


class Turn(enum.Enum):
    PHI_POS = "phi+"
    PHI_NEG = "phi-"
    PSI_POS = "psi+"
    PSI_NEG = "psi-"
    STRAIGHT = "straight"

    @property
    def axis(self) -> Optional[str]:
        if self is Turn.STRAIGHT:
            return None
        return self.value[:3]

    @property
    def sign(self) -> int:
        return {"+": 1, "-": -1}.get(self.value[-1], 0)


@dataclass(frozen=True)
class PipeSegment:
    kind: SegmentKind
    length: float
    diameter: float
    inclination: float = 0.0
    inner_radius: Optional[float] = None
    outer_radius: Optional[float] = None
    line_pressure: float = 100.0
    flow_velocity: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise MapError(f"segment length must be positive, got {self.length}")
        if not self.diameter > 0:
            raise MapError(f"segment diameter must be positive, got {self.diameter}")
        if not MIN_DIAMETER - 1e-9 <= self.diameter <= MAX_DIAMETER + 1e-9:
            warnings.warn(
                f"diameter {self.diameter:.4f} m outside the 9-20 in adaptability range",
                MapWarning,
                stacklevel=3,
            )
        if not MIN_PRESSURE <= self.line_pressure <= MAX_PRESSURE:
            clamped = min(max(self.line_pressure, MIN_PRESSURE), MAX_PRESSURE)
            warnings.warn(
                f"line pressure {self.line_pressure} kPa clamped to {clamped}",
                MapWarning,
                stacklevel=3,
            )
            object.__setattr__(self, "line_pressure", clamped)
        if self.kind is not SegmentKind.STRAIGHT and self.inner_radius is None:
            raise MapError(f"{self.kind.value} segment needs an inner radius")

    @property
    def is_feature(self) -> bool:
        return self.kind is not SegmentKind.STRAIGHT

    @classmethod
    def straight(cls, length: float, diameter: float, **kw) -> "PipeSegment":
        return cls(SegmentKind.STRAIGHT, length, diameter, **kw)

    @classmethod
    def feature(
        cls,
        kind: SegmentKind,
        diameter: float,
        inner_radius: float,
        outer_radius: Optional[float] = None,
        length: Optional[float] = None,
        **kw,
    ) -> "PipeSegment":
        """Build a 90 degree bend or T-junction.

        The arclength defaults to the quarter circle traced by the pipe
        centerline, ``pi/2 * (R_i + D/2)``.  The outer radius defaults to
        ``2 * R_i``.
        """
        if kind is SegmentKind.STRAIGHT:
            raise MapError("use PipeSegment.straight for straight segments")
        if outer_radius is None:
            outer_radius = 2.0 * inner_radius
        if length is None:
            length = 0.5 * math.pi * (inner_radius + 0.5 * diameter)
        return cls(
            kind,
            length,
            diameter,
            inner_radius=inner_radius,
            outer_radius=outer_radius,
            **kw,
        )


@dataclass(frozen=True)
class ConfigEntry:
    """One element of the CT array.

    ``omega_max``/``omega_min`` (rad/s) optionally pin the phase-3 wheel
    speeds for this feature; otherwise they are derived from the cruise speed
    and the feature's radius ratio.
    """

    config_kind: SegmentKind
    desired_turn: Turn
    dwell_time: float = DEFAULT_DWELL
    omega_max: Optional[float] = None
    omega_min: Optional[float] = None

    def __post_init__(self):
        if self.config_kind is SegmentKind.STRAIGHT:
            raise MapError("CT entries describe bends or T-junctions only")
        if self.desired_turn is Turn.STRAIGHT and self.config_kind is SegmentKind.BEND:
            raise IllegalTurn("a bend cannot be passed straight through")
        if self.dwell_time < 0:
            raise MapError("dwell time must be non-negative")


@dataclass(frozen=True)
class PipeMap:
    segments: tuple
    ct: tuple
    extraction_arclength: float
    starts: tuple = field(repr=False)
    feature_segments: tuple = field(repr=False)

    @property
    def total_length(self) -> float:
        return self.starts[-1] + self.segments[-1].length

    @property
    def feature_starts(self) -> np.ndarray:
        return np.array([self.starts[k] for k in self.feature_segments], dtype=float)

    def feature_start(self, ct_index: int) -> float:
        return self.starts[self.feature_segments[ct_index]]

    def feature_segment(self, ct_index: int) -> PipeSegment:
        return self.segments[self.feature_segments[ct_index]]

    def locate(self, s: float) -> int:
        """Index of the segment containing arclength ``s``."""
        if not -1e-12 <= s <= self.total_length + 1e-12:
            raise OutOfRange(f"arclength {s} outside [0, {self.total_length}]")
        k = bisect.bisect_right(self.starts, s) - 1
        return min(max(k, 0), len(self.segments) - 1)


def build_map(
    segments: Sequence[PipeSegment],
    ct: Sequence[ConfigEntry],
    extraction_arclength: Optional[float] = None,
) -> PipeMap:
    segments = tuple(segments)
    ct = tuple(ct)
    if not segments:
        raise EmptyMap("a route needs at least one segment")
    features = tuple(k for k, seg in enumerate(segments) if seg.is_feature)
    if len(features) != len(ct):
        raise CountMismatch(
            f"{len(features)} non-straight segments but {len(ct)} CT entries"
        )
    for i, (k, entry) in enumerate(zip(features, ct)):
        seg = segments[k]
        if entry.config_kind is not seg.kind:
            raise OrderMismatch(
                f"CT[{i}] is a {entry.config_kind.value} but segment {k} is a {seg.kind.value}"
            )
        if seg.kind is SegmentKind.BEND and entry.desired_turn is Turn.STRAIGHT:
            raise IllegalTurn(f"CT[{i}] asks to go straight through a bend")
    starts = [0.0]
    for seg in segments[:-1]:
        starts.append(starts[-1] + seg.length)
    total = starts[-1] + segments[-1].length
    if extraction_arclength is None:
        extraction_arclength = total
    if not 0.0 <= extraction_arclength <= total + 1e-12:
        raise OutOfRange(f"extraction point {extraction_arclength} beyond route end {total}")
    return PipeMap(segments, ct, float(extraction_arclength), tuple(starts), features)


def segment_at(pipe_map: PipeMap, s: float) -> tuple[PipeSegment, float]:
    """Segment containing ``s`` and the offset into it.

    A boundary point belongs to the later segment; the route end belongs to
    the last segment.
    """
    k = pipe_map.locate(s)
    return pipe_map.segments[k], s - pipe_map.starts[k]


def distance_to_next_feature(pipe_map: PipeMap, s: float) -> Optional[float]:
    pipe_map.locate(s)
    starts = pipe_map.feature_starts
    j = int(np.searchsorted(starts, s, side="right"))
    if j >= len(starts) or starts[j] > pipe_map.extraction_arclength:
        return None
    return float(starts[j] - s)


def distances_to_next_feature(pipe_map: PipeMap, s: np.ndarray) -> np.ndarray:
    """Vectorised :func:`distance_to_next_feature`; ``inf`` where none remains."""
    starts = pipe_map.feature_starts
    starts = starts[starts <= pipe_map.extraction_arclength]
    s = np.asarray(s, dtype=float)
    if starts.size == 0:
        return np.full(s.shape, np.inf)
    j = np.searchsorted(starts, s, side="right")
    padded = np.append(starts, np.inf)
    return padded[j] - s
