import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipenav.pipe_map import (
    ConfigEntry,
    CountMismatch,
    EmptyMap,
    IllegalTurn,
    MapWarning,
    OrderMismatch,
    OutOfRange,
    PipeSegment,
    SegmentKind,
    Turn,
    build_map,
    distance_to_next_feature,
    distances_to_next_feature,
    segment_at,
)

INCH = 0.0254
D14 = 14 * INCH


def bend(D=D14, r=12 * INCH):
    return PipeSegment.feature(SegmentKind.BEND, D, r)


def tee(D=D14, r=12 * INCH):
    return PipeSegment.feature(SegmentKind.TJUNCTION, D, r)


def test_minimal_map_total_length():
    b = bend()
    m = build_map(
        [PipeSegment.straight(5.0, D14), b, PipeSegment.straight(5.0, D14)],
        [ConfigEntry(SegmentKind.BEND, Turn.PHI_NEG)],
    )
    assert m.total_length == pytest.approx(10.0 + b.length, abs=1e-12)
    assert m.extraction_arclength == pytest.approx(m.total_length)


def test_feature_length_is_centerline_quarter_circle():
    b = bend(D14, 12 * INCH)
    assert b.length == pytest.approx(0.5 * math.pi * (12 * INCH + 0.5 * D14))
    assert b.outer_radius == pytest.approx(24 * INCH)


def test_count_mismatch():
    with pytest.raises(CountMismatch):
        build_map(
            [PipeSegment.straight(1.0, D14), bend(), PipeSegment.straight(1.0, D14), bend()],
            [ConfigEntry(SegmentKind.BEND, Turn.PHI_NEG)],
        )


def test_empty_map():
    with pytest.raises(EmptyMap):
        build_map([], [])


def test_straight_through_bend_is_illegal():
    with pytest.raises(IllegalTurn):
        ConfigEntry(SegmentKind.BEND, Turn.STRAIGHT)


def test_three_feature_map_is_valid():
    segs = [
        PipeSegment.straight(4.5, D14), tee(), PipeSegment.straight(2.0, D14), bend(),
        PipeSegment.straight(2.0, D14), tee(), PipeSegment.straight(1.5, D14),
    ]
    ct = [
        ConfigEntry(SegmentKind.TJUNCTION, Turn.STRAIGHT),
        ConfigEntry(SegmentKind.BEND, Turn.PHI_NEG),
        ConfigEntry(SegmentKind.TJUNCTION, Turn.PSI_POS),
    ]
    m = build_map(segs, ct)
    assert len(m.ct) == 3
    assert list(m.feature_segments) == [1, 3, 5]


def test_segment_at_ends_and_boundaries():
    m = build_map([PipeSegment.straight(5.0, D14), PipeSegment.straight(3.0, D14)], [])
    seg, off = segment_at(m, 0.0)
    assert seg is m.segments[0] and off == 0.0
    seg, off = segment_at(m, 8.0)
    assert seg is m.segments[1] and off == pytest.approx(3.0)
    seg, off = segment_at(m, 6.0)
    assert seg is m.segments[1] and off == pytest.approx(1.0)
    seg, off = segment_at(m, 5.0)
    assert seg is m.segments[1] and off == 0.0
    with pytest.raises(OutOfRange):
        segment_at(m, 8.1)
    with pytest.raises(OutOfRange):
        segment_at(m, -0.1)


def test_distance_to_next_feature_examples():
    m = build_map(
        [PipeSegment.straight(5.0, D14), bend(), PipeSegment.straight(2.0, D14)],
        [ConfigEntry(SegmentKind.BEND, Turn.PSI_POS)],
    )
    assert distance_to_next_feature(m, 4.5) == pytest.approx(0.5)
    assert distance_to_next_feature(m, m.total_length - 0.5) is None
    s = 5.0 - 0.3556
    assert distance_to_next_feature(m, s) == pytest.approx(0.3556, abs=1e-12)


def test_features_past_extraction_are_ignored():
    m = build_map(
        [PipeSegment.straight(5.0, D14), tee(), PipeSegment.straight(2.0, D14)],
        [ConfigEntry(SegmentKind.TJUNCTION, Turn.STRAIGHT)],
        extraction_arclength=4.0,
    )
    assert distance_to_next_feature(m, 1.0) is None
    assert np.isinf(distances_to_next_feature(m, np.array([1.0]))[0])


def test_validation_warnings_and_clamps():
    with pytest.warns(MapWarning):
        PipeSegment.straight(1.0, 0.1)
    with pytest.warns(MapWarning):
        s = PipeSegment.straight(1.0, D14, line_pressure=700.0)
    assert s.line_pressure == 500.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PipeSegment.straight(1.0, 0.2286)
        PipeSegment.straight(1.0, 0.508)


def test_extraction_beyond_end():
    with pytest.raises(OutOfRange):
        build_map([PipeSegment.straight(1.0, D14)], [], extraction_arclength=1.5)


# -- properties ---------------------------------------------------------------

lengths = st.lists(st.floats(0.05, 10.0), min_size=1, max_size=8)


@given(lengths, st.data())
def test_segment_at_reconstructs_arclength(ls, data):
    m = build_map([PipeSegment.straight(x, D14) for x in ls], [])
    s = data.draw(st.floats(0.0, m.total_length))
    seg, off = segment_at(m, s)
    k = m.locate(s)
    assert seg is m.segments[k]
    assert math.fsum(m.segments[j].length for j in range(k)) + off == pytest.approx(s, abs=1e-12)
    assert 0.0 <= off <= seg.length + 1e-12


@given(st.floats(0.5, 8.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_distance_decreases_at_unit_rate(length, a, b):
    m = build_map(
        [PipeSegment.straight(length, D14), tee(), PipeSegment.straight(1.0, D14)],
        [ConfigEntry(SegmentKind.TJUNCTION, Turn.STRAIGHT)],
    )
    s1, s2 = sorted((a * length * 0.999, b * length * 0.999))
    d1 = distance_to_next_feature(m, s1)
    d2 = distance_to_next_feature(m, s2)
    assert d1 - d2 == pytest.approx(s2 - s1, abs=1e-12)


KIND_TURNS = {
    SegmentKind.BEND: [Turn.PHI_POS, Turn.PHI_NEG, Turn.PSI_POS, Turn.PSI_NEG],
    SegmentKind.TJUNCTION: [Turn.PHI_POS, Turn.PHI_NEG, Turn.PSI_POS, Turn.PSI_NEG, Turn.STRAIGHT],
}


@settings(max_examples=60)
@given(st.lists(st.sampled_from([SegmentKind.BEND, SegmentKind.TJUNCTION]), min_size=2, max_size=5), st.randoms())
def test_build_map_rejects_reordered_ct(kinds, rnd):
    segs = []
    for k in kinds:
        segs += [PipeSegment.straight(1.0, D14), PipeSegment.feature(k, D14, 12 * INCH)]
    ct = [ConfigEntry(k, Turn.PSI_POS) for k in kinds]
    build_map(segs, ct)
    perm = list(ct)
    rnd.shuffle(perm)
    if [e.config_kind for e in perm] == kinds:
        build_map(segs, perm)
    else:
        with pytest.raises(OrderMismatch):
            build_map(segs, perm)
