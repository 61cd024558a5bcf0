"""Acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists a
PASS/FAIL line per criterion.  Tolerances are pinned below.
"""

import json
import math
import os
import sys
import time

import numpy as np
import pytest

from pipenav import cli
from pipenav.control import DifferentialCommand, differential_setpoints, linearize
from pipenav.dynamics import (
    DRAG_PRESSURE_KNOTS,
    DRAG_PRESSURE_VALUES,
    DRAG_VELOCITY_KNOTS,
    DRAG_VELOCITY_VALUES,
    RobotParams,
    drag_force,
)
from pipenav.energy import OperatingPoint, range_estimate
from pipenav.navigation import TRACE_COLUMNS, MissionConfig, mission_run, turn_command
from pipenav.pf_bench import BenchConfig, run_bench
from pipenav.pipe_map import Turn
from pipenav.scenarios import (
    STABILIZER_CASES,
    TRACKING_CASES,
    bend_turn_map,
    junction_stop_map,
    run_stabilizer,
    tjunction_turn_map,
)

P = RobotParams()
RPM = 2 * math.pi / 60
DEG = math.pi / 180
INCH = 0.0254

B_PRINTED = {(1, 1): -123.72, (1, 2): 123.72, (3, 0): -193.55, (3, 1): 96.77, (3, 2): 96.77}
B_REL_TOL = 1e-3
CARE_RESIDUAL_MAX = 1e-8
ROW_EQUALITY_TOL = 1e-9
GAIN_REL_TOL = 0.15
SETTLE_BOUND = 2 * DEG
SETTLE_BY = 1.5
TRACK_SETTLE_BY = 2.5
SPEED_REL_TOL = 0.05
SPEED_BY = 4.0
CASE_WALL_MAX = 1.0
TURN_ALONG_TOL = 3 * DEG
TURN_ACROSS_MAX = 25 * DEG
TURN_CLEAN_MAX = 3 * DEG
DERIVED_RPM_TOL = 0.5
KNOT_PRESSURE_DROP = (25.9 - 18.9) / 25.9
DROP_REL_TOL = 0.01
FORCE_REL_TOL = 0.02
RANGE_REL_TOL = 0.02
PF_AGREEMENT_MIN = 95
WEIGHT_SUM_TOL = 1e-9
STAGE_WALL_MAX = 60.0
TRIGGER_DISTANCE = 14 * INCH
STOP_ERROR_MAX = 0.2 * TRIGGER_DISTANCE
ENSEMBLE_SEEDS = range(8)
ENSEMBLE_SPEEDS = (0.1, 0.2, 0.3)


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@criterion(1, "B matrix at D = 0.18 m matches printed entries within 0.1%")
def test_criterion_01_b_matrix():
    B = linearize(P, 0.18).B
    for (i, j), ref in B_PRINTED.items():
        assert abs(B[i, j] - ref) <= B_REL_TOL * abs(ref), f"B[{i},{j}] = {B[i, j]:.4f} vs {ref}"
    assert B[1, 0] == 0 and B[3, 1] == B[3, 2]


@criterion(2, "CARE residual, Hurwitz loop, K rows 2 = 3, K vs printed gain or documented deviation")
def test_criterion_02_riccati():
    cfg = cli.parse_config("")
    model, gain, rel, text = cli.lqr_report(cfg)
    assert gain.care_residual < CARE_RESIDUAL_MAX
    assert np.all(gain.closed_loop_eigenvalues.real < 0)
    worst = float(rel.max())
    assert worst <= GAIN_REL_TOL or f"exceeds {GAIN_REL_TOL:.0%}" in text
    row_gap = float(np.max(np.abs(gain.K[1] - gain.K[2])))
    assert row_gap <= ROW_EQUALITY_TOL, f"K rows 2 and 3 differ by {row_gap:.4g}"


@criterion(3, "stabilizer settles every initial deviation below 2 deg within 1.5 s")
def test_criterion_03_stabilizer_settling():
    for phi0, psi0 in STABILIZER_CASES:
        t0 = time.perf_counter()
        run = run_stabilizer(phi0, psi0, duration=3.0)
        wall = time.perf_counter() - t0
        ts = run.settling_time(SETTLE_BOUND)
        assert ts <= SETTLE_BY, f"({phi0}, {psi0}) settled at {ts:.3f} s"
        assert wall < CASE_WALL_MAX, f"({phi0}, {psi0}) took {wall:.2f} s"


@criterion(4, "speed tracking: deviations cancel by 2.5 s and speed within 5% by 4 s")
def test_criterion_04_tracking():
    for v_d, phi0, psi0 in TRACKING_CASES:
        t0 = time.perf_counter()
        run = run_stabilizer(phi0, psi0, v_d=v_d, duration=4.5)
        wall = time.perf_counter() - t0
        ts = run.settling_time(SETTLE_BOUND)
        assert ts <= TRACK_SETTLE_BY, f"v_d {v_d}: settled at {ts:.3f} s"
        late = run.t >= SPEED_BY
        err = float(np.max(np.abs(run.xdot[late] - v_d))) / v_d
        assert err <= SPEED_REL_TOL, f"v_d {v_d}: speed error {err:.2%} after {SPEED_BY} s"
        assert wall < CASE_WALL_MAX, f"v_d {v_d} took {wall:.2f} s"


def _check_turn(pipe_map, target, expected_rpm, rpm_tol):
    cmd = turn_command(pipe_map, 0, P, MissionConfig())
    w = np.array(differential_setpoints(cmd)) / RPM
    assert np.all(np.abs(w - expected_rpm) <= rpm_tol), f"setpoints {w.round(2)} vs {expected_rpm}"
    rep = mission_run(pipe_map, seed=1)
    assert rep.status == "done", rep.reason
    (turn,) = rep.turns
    for name, along in (("estimated", turn.along), ("true", turn.true_along)):
        assert abs(along - target) <= TURN_ALONG_TOL, f"{name} rotation {math.degrees(along):.2f} deg"
    assert abs(turn.across) <= TURN_ACROSS_MAX and abs(turn.true_across) <= TURN_ACROSS_MAX
    phases = [r[TRACE_COLUMNS.index("phase")] for r in rep.trace]
    after = phases.index("stabilize") + phases[phases.index("stabilize"):].index("cruise")
    row = rep.trace[after]
    residual = max(abs(row[TRACE_COLUMNS.index("phi_rad")]), abs(row[TRACE_COLUMNS.index("psi_rad")]))
    assert residual < TURN_CLEAN_MAX, f"true residual {math.degrees(residual):.2f} deg after stabilizing"


@criterion(5, "bend -90 deg at 34.5/46/23 rpm and T-junction +90 deg at 73/49/97 rpm")
def test_criterion_05_turns():
    _check_turn(bend_turn_map(), -0.5 * math.pi, np.array([34.5, 46.0, 23.0]), 1e-9)
    _check_turn(tjunction_turn_map(), 0.5 * math.pi, np.array([73.0, 49.0, 97.0]), DERIVED_RPM_TOL)


@criterion(6, "differential setpoints follow the wheel assignment table for all motion types")
def test_criterion_06_wheel_assignment():
    table = {
        Turn.PHI_POS: ("avg", "min", "max"),
        Turn.PHI_NEG: ("avg", "max", "min"),
        Turn.PSI_POS: ("min", "max", "max"),
        Turn.PSI_NEG: ("max", "min", "min"),
    }
    rng = np.random.default_rng(6)
    pairs = [(46 * RPM, 23 * RPM), (97 * RPM, 49 * RPM), (0.0, 0.0)] + [
        tuple(sorted(rng.uniform(0, 30, 2), reverse=True)) for _ in range(500)
    ]
    for turn, keys in table.items():
        for hi, lo in pairs:
            w = differential_setpoints(DifferentialCommand(turn, hi, lo))
            ref = {"avg": 0.5 * (hi + lo), "max": hi, "min": lo}
            assert w == tuple(ref[k] for k in keys), (turn, hi, lo, w)
            if turn.axis == "phi":
                assert w[0] == 0.5 * (w[1] + w[2])
    w = differential_setpoints(DifferentialCommand(Turn.PHI_NEG, 46 * RPM, 23 * RPM))
    assert np.allclose(np.array(w) / RPM, [34.5, 46.0, 23.0], rtol=1e-12)
    w = differential_setpoints(DifferentialCommand(Turn.PHI_POS, 97 * RPM, 49 * RPM))
    assert np.allclose(np.array(w) / RPM, [73.0, 49.0, 97.0], rtol=1e-12)


@criterion(7, "drag knots exact, monotone in |v| on [0.1, 1.2], 27% pressure drop")
def test_criterion_07_drag():
    knots = [(v, 100.0, f) for v, f in zip(DRAG_VELOCITY_KNOTS, DRAG_VELOCITY_VALUES) if v != 0.0]
    knots += [(1.2, p, f) for p, f in zip(DRAG_PRESSURE_KNOTS, DRAG_PRESSURE_VALUES) if p != 100.0]
    assert len(knots) == 9
    for v, p, f in knots:
        assert drag_force(v, p) == f, (v, p)
    v = np.linspace(0.1, 1.2, 1101)
    mags = np.abs([drag_force(x, 100.0) for x in v])
    assert np.all(np.diff(mags) >= 0)
    drop = (drag_force(1.2, 100.0) - drag_force(1.2, 500.0)) / drag_force(1.2, 100.0)
    assert abs(drop - KNOT_PRESSURE_DROP) <= DROP_REL_TOL * KNOT_PRESSURE_DROP


@criterion(8, "worst-case energy: 8.7 N per motor, 1.41 A, 3 h, 5400 m")
def test_criterion_08_energy():
    r = range_estimate(OperatingPoint(robot_speed=0.5, flow_speed=0.7, line_pressure=100.0))
    assert abs(r.force_per_motor - 8.7) <= FORCE_REL_TOL * 8.7, r.force_per_motor
    assert r.total_current == pytest.approx(1.41, rel=FORCE_REL_TOL)
    assert r.discharge_time == pytest.approx(3.0, rel=RANGE_REL_TOL)
    assert abs(r.range - 5400.0) <= RANGE_REL_TOL * 5400.0, r.range


@criterion(9, "particle filter agrees with the exact grid filter in >= 95/100 trials")
def test_criterion_09_particle_filter():
    t0 = time.perf_counter()
    res = run_bench(BenchConfig())
    wall = time.perf_counter() - t0
    assert res.agreement >= PF_AGREEMENT_MIN, f"{res.agreement}/100 agree"
    assert res.max_weight_error <= WEIGHT_SUM_TOL
    assert wall < STAGE_WALL_MAX
    small = BenchConfig(trials=3, steps=40)
    a, b = run_bench(small), run_bench(small)
    assert [(t.pf_mean, t.pf_std) for t in a.trials] == [(t.pf_mean, t.pf_std) for t in b.trials]


@criterion(10, "junction stop replica: trigger at 14 in, error grows with speed, <= 20% at 0.3 m/s")
def test_criterion_10_stop_ensemble():
    t0 = time.perf_counter()
    means = []
    cfg0 = MissionConfig()
    for v in ENSEMBLE_SPEEDS:
        errors = []
        for seed in ENSEMBLE_SEEDS:
            rep = mission_run(junction_stop_map(), cfg=MissionConfig(v_d=v), seed=seed)
            assert rep.status == "done", (v, seed, rep.reason)
            (stop,) = rep.stops
            trigger = stop.feature_start - stop.trigger_s
            assert abs(trigger - TRIGGER_DISTANCE) <= cfg0.confidence_bound, (v, seed, trigger)
            errors.append(abs(stop.stop_error))
        means.append(float(np.mean(errors)))
    wall = time.perf_counter() - t0
    assert all(b >= a for a, b in zip(means, means[1:])), f"mean errors {means}"
    assert means[-1] <= STOP_ERROR_MAX, f"mean error at 0.3 m/s {means[-1]:.4f} m"
    assert wall < STAGE_WALL_MAX, f"ensemble took {wall:.1f} s"


@criterion(11, "three-feature mission: Done, entries in order, byte-identical CSV")
def test_criterion_11_end_to_end(tmp_path):
    path = os.path.join(os.path.dirname(__file__), "..", "scenarios", "three_features.yaml")
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["mission", "--config", path, "--out", str(out), "--no-figures"]) == cli.EXIT_OK
        outs.append(out)
    wall = time.perf_counter() - t0
    a, b = ((o / "trace.csv").read_bytes() for o in outs)
    assert a == b
    report = json.loads((outs[0] / "report.json").read_text())
    assert report["status"] == "done"
    assert report["ct_consumed"] == [0, 1, 2]
    assert wall < STAGE_WALL_MAX


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
