"""Command-line scenario runner.

Subcommands: mission, lqr, energy, pf-bench, drag-table.  Each one writes
CSV and text outputs (plus PNG figures unless disabled) to ``--out``.
Exit codes: 0 ok, 2 config error, 3 mission fault, 4 mission timeout.
Log verbosity comes from ``PIPENAV_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import replace

import numpy as np
import scipy.linalg

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config, parse_config, with_seed
from .control import linearize, solve_care
from .dynamics import DRAG_PRESSURE_KNOTS, DRAG_VELOCITY_KNOTS, drag_force
from .energy import range_estimate
from .navigation import TRACE_COLUMNS, mission_run
from .pf_bench import run_bench

log = logging.getLogger("pipenav")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_TIMEOUT = 0, 2, 3, 4
CSV_VERSION = "1"

# Gain printed with the original stabilizer design (18 cm span, Q = diag(200, 10, 200, 10), R = I).
PUBLISHED_GAIN = np.array(
    [
        [-4.92, -1.12, -13.26, -2.98],
        [-9.37, -2.11, 3.48, 0.78],
        [-9.37, -2.11, 3.48, 0.78],
    ]
)
GAIN_TOLERANCE = 0.15


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x) + 0.0, ".9g")
    return str(x)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _matrix(name, M) -> str:
    M = np.atleast_2d(M)
    rows = ["  [" + "  ".join(f"{v:11.5g}" for v in row) + "]" for row in M]
    return f"{name} =\n" + "\n".join(rows) + "\n"


# -- subcommands ------------------------------------------------------------


def cmd_mission(cfg: ScenarioConfig, out: str, figures: bool) -> int:
    report = mission_run(cfg.pipe_map, cfg.robot, cfg.mission, cfg.seed, cfg.weights, cfg.pid)
    write_csv(os.path.join(out, "trace.csv"), TRACE_COLUMNS, report.trace)
    summary = report.summary()
    summary["seed"] = cfg.seed
    summary["csv_version"] = CSV_VERSION
    write_text(os.path.join(out, "report.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if figures:
        from .plots import mission_figures

        mission_figures(report.trace, TRACE_COLUMNS, cfg.pipe_map, out)
    print(f"status={report.status} duration_s={report.duration:.3f} distance_m={report.distance:.4f} "
          f"ct_consumed={report.ct_consumed}")
    for st in report.stops:
        print(f"stop ct={st.ct_index} distance_m={st.stop_distance:.4f} error_m={st.stop_error:+.4f}")
    for tr in report.turns:
        print(f"turn ct={tr.ct_index} along_deg={math.degrees(tr.along):.2f} across_deg={math.degrees(tr.across):.2f}")
    if report.status == "fault":
        print(f"error: code={EXIT_FAULT} kind=Fault message={report.reason!r}", file=sys.stderr)
        return EXIT_FAULT
    if report.status == "timeout":
        print(f"error: code={EXIT_TIMEOUT} kind=Timeout message={report.reason!r}", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def lqr_report(cfg: ScenarioConfig):
    model = linearize(cfg.robot, cfg.lqr_span)
    gain = solve_care(model, cfg.weights)
    rel = np.abs(gain.K - PUBLISHED_GAIN) / np.maximum(np.abs(PUBLISHED_GAIN), 1e-12)
    lines = [
        f"span diameter D = {cfg.lqr_span:.4f} m",
        _matrix("A", model.A),
        _matrix("B", model.B),
        _matrix("Q", cfg.weights.Q),
        _matrix("R", cfg.weights.R),
        _matrix("P", gain.P),
        _matrix("K", gain.K),
        "closed-loop eigenvalues = " + ", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in gain.closed_loop_eigenvalues),
        f"CARE residual (Frobenius) = {gain.care_residual:.3e}",
        f"max |K[1]-K[2]| = {np.max(np.abs(gain.K[1] - gain.K[2])):.6g}",
        "",
        _matrix("published K", PUBLISHED_GAIN),
        _matrix("relative deviation", rel),
    ]
    worst = float(rel.max())
    if worst > GAIN_TOLERANCE:
        A_pub = model.A - model.B @ PUBLISHED_GAIN
        eig_pub = np.linalg.eigvals(A_pub)
        lines += [
            f"deviation: max elementwise relative deviation {worst:.3g} exceeds {GAIN_TOLERANCE:.0%}.",
            "The computed gain is authoritative: it solves the Riccati equation for the stated A, B, Q, R",
            f"to a residual of {gain.care_residual:.1e} and its closed loop is Hurwitz.",
            "The published gain has equal rows 2 and 3; with the phi columns of B opposite in sign,",
            "equal torques on wheels 2 and 3 cannot act on phi, so that gain leaves phi uncontrolled.",
            "Closed-loop eigenvalues with the published gain: "
            + ", ".join(f"{z.real:.4g}{z.imag:+.4g}j" for z in eig_pub),
        ]
    else:
        lines.append(f"computed gain within {GAIN_TOLERANCE:.0%} of the published gain elementwise")
    return model, gain, rel, "\n".join(lines) + "\n"


def cmd_lqr(cfg: ScenarioConfig, out: str, figures: bool) -> int:
    model, gain, rel, text = lqr_report(cfg)
    print(text, end="")
    write_text(os.path.join(out, "lqr.txt"), text)
    write_csv(os.path.join(out, "lqr_gain.csv"), ["row", "phi", "phi_dot", "psi", "psi_dot"],
              [(i + 1, *gain.K[i]) for i in range(3)])
    if figures:
        from .plots import lqr_figure

        Acl = model.A - model.B @ gain.K
        t = np.linspace(0.0, 1.5, 301)
        x0 = np.radians([-46.0, 0.0, -37.0, 0.0])
        x = np.array([scipy.linalg.expm(Acl * tk) @ x0 for tk in t])
        lqr_figure(t, x, out)
    return EXIT_OK


def energy_report(cfg: ScenarioConfig) -> str:
    op, p = cfg.energy.op, cfg.robot
    r = range_estimate(op, p, cfg.energy.avionics_current)
    return "\n".join(
        [
            f"robot speed            {op.robot_speed:.3f} m/s",
            f"flow speed (opposing)  {op.flow_speed:.3f} m/s",
            f"relative velocity      {op.relative_velocity:.3f} m/s",
            f"line pressure          {op.line_pressure:.1f} kPa",
            f"pipe diameter          {op.diameter:.4f} m",
            f"force per motor        {r.force_per_motor:.4f} N",
            f"current per motor      {r.current_per_motor:.4f} A",
            f"avionics current       {cfg.energy.avionics_current:.4f} A",
            f"total current          {r.total_current:.4f} A",
            f"electrical power       {r.power:.3f} W",
            f"battery capacity       {p.battery_capacity:.3f} Ah (back-derived default: 3 h at 1.41 A)",
            f"discharge time         {r.discharge_time:.3f} h",
            f"inspection range       {r.range:.1f} m",
        ]
    ) + "\n"


def cmd_energy(cfg: ScenarioConfig, out: str, figures: bool) -> int:
    text = energy_report(cfg)
    print(text, end="")
    write_text(os.path.join(out, "energy.txt"), text)
    op = cfg.energy.op
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for rel in np.round(np.arange(0.1, 1.2001, 0.05), 10):
            r = range_estimate(replace(op, flow_speed=float(rel) - op.robot_speed), cfg.robot, cfg.energy.avionics_current)
            rows.append((float(rel), r.force_per_motor, r.total_current, r.discharge_time, r.range))
    write_csv(os.path.join(out, "energy_sweep.csv"),
              ["rel_velocity_mps", "force_per_motor_N", "total_current_A", "discharge_h", "range_m"], rows)
    if figures:
        from .plots import energy_figure

        main = range_estimate(op, cfg.robot, cfg.energy.avionics_current)
        finite = [(r[0], r[4] / 1000.0) for r in rows if math.isfinite(r[4])]
        energy_figure([a for a, _ in finite], [b for _, b in finite], op.relative_velocity, main.range / 1000.0, out)
    return EXIT_OK


def cmd_pf_bench(cfg: ScenarioConfig, out: str, figures: bool) -> int:
    res = run_bench(cfg.bench)
    rows = [(t.seed, t.s_true, t.pf_mean, t.pf_std, t.grid_mean, t.grid_std, int(t.agrees), t.max_weight_error,
             t.degenerate) for t in res.trials]
    write_csv(os.path.join(out, "pf_bench.csv"),
              ["seed", "s_true_m", "pf_mean_m", "pf_std_m", "grid_mean_m", "grid_std_m", "agrees",
               "max_weight_error", "degenerate"], rows)
    errs = np.array([abs(t.pf_mean - t.grid_mean) for t in res.trials])
    ratio = np.array([abs(t.pf_mean - t.grid_mean) / t.grid_std for t in res.trials])
    text = (
        f"trials {len(res.trials)}  particles {cfg.bench.particles}  steps {cfg.bench.steps}\n"
        f"agreement (|pf - grid| <= 3 grid std) {res.agreement}/{len(res.trials)}\n"
        f"|pf - grid| mean {errs.mean():.4g} m  median {np.median(errs):.4g} m  max {errs.max():.4g} m\n"
        f"max weight-sum error {res.max_weight_error:.3e}\n"
        f"elapsed {res.elapsed:.1f} s\n"
    )
    print(text, end="")
    write_text(os.path.join(out, "pf_bench.txt"), text.replace(f"elapsed {res.elapsed:.1f} s\n", ""))
    if figures:
        from .plots import bench_figure

        bench_figure(ratio, out)
    return EXIT_OK


def drag_table(velocities=None, pressures=None):
    v = np.round(np.arange(DRAG_VELOCITY_KNOTS[0], DRAG_VELOCITY_KNOTS[-1] + 1e-9, 0.05), 10) if velocities is None else velocities
    p = np.arange(DRAG_PRESSURE_KNOTS[0], DRAG_PRESSURE_KNOTS[-1] + 1e-9, 50.0) if pressures is None else pressures
    table = np.array([[drag_force(float(a), float(b), warn=False) for b in p] for a in v])
    return v, p, table


def cmd_drag_table(cfg: ScenarioConfig, out: str, figures: bool) -> int:
    v, p, table = drag_table()
    write_csv(os.path.join(out, "drag_table.csv"), ["rel_velocity_mps"] + [f"drag_N_at_{b:g}kPa" for b in p],
              [(float(a), *row) for a, row in zip(v, table)])
    print(f"wrote {len(v)}x{len(p)} drag table")
    if figures:
        from .plots import drag_figure

        drag_figure(v, p, table, out)
    return EXIT_OK


COMMANDS = {
    "mission": cmd_mission,
    "lqr": cmd_lqr,
    "energy": cmd_energy,
    "pf-bench": cmd_pf_bench,
    "drag-table": cmd_drag_table,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pipenav", description="In-pipe robot navigation simulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="scenario YAML file (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--out", help="output directory (default: scenario output.directory)")
    ap.add_argument("--strict", action="store_true", help="treat unknown config keys as errors")
    ap.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return ap


def main(argv=None) -> int:
    level = os.environ.get("PIPENAV_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, strict=args.strict) if args.config else parse_config("", strict=args.strict)
    except ConfigError as exc:
        line = "" if exc.line is None else f" line={exc.line}"
        print(f"error: code={EXIT_CONFIG} kind={type(exc).__name__} where={exc.where or '<root>'}{line} "
              f"message={exc.message!r}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: code={EXIT_CONFIG} kind=OSError message={str(exc)!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    out = args.out or cfg.output.directory
    figures = cfg.output.figures and not args.no_figures
    return COMMANDS[args.command](cfg, out, figures)


if __name__ == "__main__":
    sys.exit(main())
