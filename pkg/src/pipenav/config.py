"""Scenario files: YAML with unit-tagged quantities.

Every field has a default, so an empty file is a valid scenario (one
straight 14 in pipe, no features).  Quantities may be bare numbers (SI) or
strings such as ``"14 in"``, ``"10 cm/s"``, ``"46 rpm"`` or ``"90 deg"``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np
import yaml

from .control import LqrWeights, PidGains
from .dynamics import RobotParams
from .energy import OperatingPoint
from .estimation import ImuNoise, UltrasonicModel
from .navigation import INCH, MissionConfig
from .pf_bench import BenchConfig
from .pipe_map import ConfigEntry, MapError, PipeMap, PipeSegment, SegmentKind, Turn, build_map


class ConfigError(ValueError):
    """Base for scenario errors; carries the field path and source line."""

    def __init__(self, message: str, where: str = "", line: Optional[int] = None):
        self.where = where
        self.line = line
        loc = where or "<root>"
        if line is not None:
            loc += f" (line {line})"
        super().__init__(f"{loc}: {message}")
        self.message = message


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class UnitError(ConfigError):
    pass


class ConfigWarning(UserWarning):
    pass


UNITS = {
    "length": {"m": 1.0, "cm": 0.01, "mm": 1e-3, "in": INCH, "ft": 0.3048},
    "speed": {"m/s": 1.0, "cm/s": 0.01, "mm/s": 1e-3, "in/s": INCH, "ft/s": 0.3048},
    "angular_speed": {"rad/s": 1.0, "rpm": 2.0 * math.pi / 60.0, "deg/s": math.pi / 180.0},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "time": {"s": 1.0, "ms": 1e-3, "min": 60.0, "h": 3600.0},
    "pressure": {"kPa": 1.0, "Pa": 1e-3, "MPa": 1e3, "bar": 100.0, "psi": 6.894757},
    "mass": {"kg": 1.0, "g": 1e-3},
    "charge": {"Ah": 1.0, "mAh": 1e-3},
    "current": {"A": 1.0, "mA": 1e-3},
    "voltage": {"V": 1.0},
    "frequency": {"Hz": 1.0, "kHz": 1e3},
    "inertia": {"kg*m^2": 1.0, "kg m^2": 1.0},
    "none": {},
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S.*?)?\s*$")


def quantity(value: Any, dim: str, where: str = "", line: Optional[int] = None) -> float:
    """Convert a bare number or a ``"<number> <unit>"`` string to SI."""
    if isinstance(value, bool):
        raise UnitError(f"expected a {dim} quantity, got a boolean", where, line)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"expected a {dim} quantity, got {type(value).__name__}", where, line)
    m = _QTY.match(value)
    if not m:
        raise UnitError(f"cannot read {value!r} as a {dim} quantity", where, line)
    number, unit = float(m.group(1)), m.group(2)
    if unit is None:
        return number
    table = UNITS[dim]
    if unit not in table:
        raise UnitError(f"unit {unit!r} is not a {dim} unit (use one of {', '.join(table) or 'none'})", where, line)
    return number * table[unit]


# -- source positions -------------------------------------------------------


def _line_index(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


def _fmt(path) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s


class _Reader:
    """Walks the parsed document, converting fields and tracking unknown keys."""

    def __init__(self, lines: dict, strict: bool):
        self.lines = lines
        self.strict = strict

    def line(self, path):
        return self.lines.get(tuple(path))

    def section(self, doc, path, allowed) -> dict:
        if doc is None:
            return {}
        if not isinstance(doc, dict):
            raise ParseError("expected a mapping", _fmt(path), self.line(path))
        for key in doc:
            if key not in allowed:
                msg = f"unknown key {key!r}"
                where = _fmt(tuple(path) + (key,))
                if self.strict:
                    raise UnknownKey(msg, where, self.line(tuple(path) + (key,)))
                warnings.warn(f"{where}: {msg} ignored", ConfigWarning, stacklevel=2)
        return doc

    def get(self, doc, path, key, dim, default):
        if key not in doc or doc[key] is None:
            return default
        p = tuple(path) + (key,)
        if dim == "int":
            v = doc[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ParseError(f"expected an integer, got {v!r}", _fmt(p), self.line(p))
            return v
        if dim == "str":
            return str(doc[key])
        if dim == "bool":
            if not isinstance(doc[key], bool):
                raise ParseError(f"expected true/false, got {doc[key]!r}", _fmt(p), self.line(p))
            return doc[key]
        return quantity(doc[key], dim, _fmt(p), self.line(p))


# -- scenario ---------------------------------------------------------------


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    cadence: int = 10
    figures: bool = True


@dataclass(frozen=True)
class EnergyConfig:
    op: OperatingPoint = OperatingPoint()
    avionics_current: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    pipe_map: PipeMap
    robot: RobotParams = RobotParams()
    weights: LqrWeights = LqrWeights()
    pid: PidGains = PidGains()
    mission: MissionConfig = MissionConfig()
    energy: EnergyConfig = EnergyConfig()
    bench: BenchConfig = BenchConfig()
    lqr_span: float = 0.18
    seed: int = 0
    output: OutputConfig = OutputConfig()


def default_map(diameter: float = 14 * INCH) -> PipeMap:
    return build_map([PipeSegment.straight(5.0, diameter)], [])


_SEGMENT_KEYS = ("kind", "length", "diameter", "inclination", "inner_radius", "outer_radius", "line_pressure",
                 "flow_velocity")
_CT_KEYS = ("kind", "turn", "dwell", "omega_max", "omega_min")
_TURNS = {t.value: t for t in Turn}


def _parse_map(r: _Reader, doc) -> PipeMap:
    path = ("map",)
    doc = r.section(doc, path, ("diameter", "segments", "ct", "extraction"))
    D = r.get(doc, path, "diameter", "length", 14 * INCH)
    raw_segments = doc.get("segments")
    if raw_segments is None:
        if doc.get("ct"):
            raise ParseError("CT entries given without segments", _fmt(path + ("ct",)), r.line(path + ("ct",)))
        return default_map(D)
    if not isinstance(raw_segments, list):
        raise ParseError("segments must be a list", _fmt(path + ("segments",)), r.line(path + ("segments",)))
    segments = []
    for i, s in enumerate(raw_segments):
        sp = path + ("segments", i)
        s = r.section(s, sp, _SEGMENT_KEYS)
        try:
            kind = SegmentKind(str(s.get("kind", "straight")))
        except ValueError:
            raise ParseError(f"unknown segment kind {s.get('kind')!r}", _fmt(sp + ("kind",)), r.line(sp + ("kind",)))
        common = dict(
            inclination=r.get(s, sp, "inclination", "angle", 0.0),
            line_pressure=r.get(s, sp, "line_pressure", "pressure", 100.0),
            flow_velocity=r.get(s, sp, "flow_velocity", "speed", 0.0),
        )
        d = r.get(s, sp, "diameter", "length", D)
        try:
            if kind is SegmentKind.STRAIGHT:
                if "length" not in s:
                    raise ParseError("straight segment needs a length", _fmt(sp), r.line(sp))
                segments.append(PipeSegment.straight(r.get(s, sp, "length", "length", None), d, **common))
            else:
                ri = r.get(s, sp, "inner_radius", "length", 12 * INCH)
                segments.append(
                    PipeSegment.feature(
                        kind, d, ri, r.get(s, sp, "outer_radius", "length", None),
                        r.get(s, sp, "length", "length", None), **common,
                    )
                )
        except MapError as exc:
            raise ParseError(str(exc), _fmt(sp), r.line(sp)) from exc
    ct = []
    raw_ct = doc.get("ct") or []
    if not isinstance(raw_ct, list):
        raise ParseError("ct must be a list", _fmt(path + ("ct",)), r.line(path + ("ct",)))
    for i, c in enumerate(raw_ct):
        cp = path + ("ct", i)
        c = r.section(c, cp, _CT_KEYS)
        try:
            kind = SegmentKind(str(c.get("kind")))
            turn = _TURNS[str(c.get("turn", "straight"))]
        except (ValueError, KeyError):
            raise ParseError(
                f"bad CT entry (kind {c.get('kind')!r}, turn {c.get('turn')!r}; turns are {', '.join(_TURNS)})",
                _fmt(cp), r.line(cp),
            )
        try:
            ct.append(
                ConfigEntry(
                    kind, turn,
                    dwell_time=r.get(c, cp, "dwell", "time", 60.0),
                    omega_max=r.get(c, cp, "omega_max", "angular_speed", None),
                    omega_min=r.get(c, cp, "omega_min", "angular_speed", None),
                )
            )
        except MapError as exc:
            raise ParseError(str(exc), _fmt(cp), r.line(cp)) from exc
    try:
        return build_map(segments, ct, r.get(doc, path, "extraction", "length", None))
    except MapError as exc:
        raise ParseError(f"{type(exc).__name__}: {exc}", _fmt(path), r.line(path)) from exc


_ROBOT_DIMS = {
    "mass": "mass", "arm_length": "length", "wheel_radius": "length", "I_yy": "inertia", "I_zz": "inertia",
    "battery_capacity": "charge", "battery_voltage": "voltage", "span_offset": "length",
}


def _parse_robot(r: _Reader, doc) -> RobotParams:
    path = ("robot",)
    doc = r.section(doc, path, tuple(_ROBOT_DIMS) + ("gravity_moment",))
    kw = {k: r.get(doc, path, k, dim, None) for k, dim in _ROBOT_DIMS.items()}
    kw = {k: v for k, v in kw.items() if v is not None}
    if "gravity_moment" in doc:
        kw["gravity_moment"] = str(doc["gravity_moment"])
    try:
        return RobotParams(**kw)
    except ValueError as exc:
        raise ParseError(str(exc), "robot", r.line(path)) from exc


def _parse_controller(r: _Reader, doc):
    path = ("controller",)
    doc = r.section(doc, path, ("q", "r", "pid"))
    kw = {}
    for key, n in (("q", 4), ("r", 3)):
        if doc.get(key) is None:
            continue
        v = doc[key]
        p = path + (key,)
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise ParseError("expected numbers", _fmt(p), r.line(p))
        if arr.shape == (n,):
            arr = np.diag(arr)
        if arr.shape != (n, n):
            raise ParseError(f"expected {n} diagonal entries or an {n}x{n} matrix", _fmt(p), r.line(p))
        kw[key.upper()] = arr
    try:
        weights = LqrWeights(**kw)
    except ValueError as exc:
        raise ParseError(str(exc), "controller", r.line(path)) from exc
    pp = path + ("pid",)
    pid_doc = r.section(doc.get("pid"), pp, ("kp", "ki", "kd", "output_limit", "integral_limit"))
    base = PidGains()
    pid = PidGains(
        r.get(pid_doc, pp, "kp", "none", base.K_p),
        r.get(pid_doc, pp, "ki", "none", base.K_I),
        r.get(pid_doc, pp, "kd", "none", base.K_D),
        r.get(pid_doc, pp, "output_limit", "voltage", base.output_limit),
        r.get(pid_doc, pp, "integral_limit", "voltage", base.integral_limit),
    )
    return weights, pid


def _parse_sensors(r: _Reader, doc):
    path = ("sensors",)
    doc = r.section(doc, path, ("imu", "ultrasonic"))
    ip = path + ("imu",)
    imu = r.section(doc.get("imu"), ip, ("accel_sigma", "gyro_sigma", "gyro_bias"))
    base_imu = MissionConfig().imu_noise
    bias = imu.get("gyro_bias", base_imu.gyro_bias)
    if not (isinstance(bias, (list, tuple)) and len(bias) == 3):
        raise ParseError("gyro_bias needs three entries", _fmt(ip + ("gyro_bias",)), r.line(ip + ("gyro_bias",)))
    noise = ImuNoise(
        r.get(imu, ip, "accel_sigma", "none", base_imu.accel_sigma),
        r.get(imu, ip, "gyro_sigma", "angular_speed", base_imu.gyro_sigma),
        tuple(quantity(b, "angular_speed", _fmt(ip + ("gyro_bias",))) for b in bias),
    )
    up = path + ("ultrasonic",)
    us = r.section(doc.get("ultrasonic"), up, ("max_range", "sigma", "update_period", "latency"))
    b = UltrasonicModel()
    try:
        sonar = UltrasonicModel(
            r.get(us, up, "max_range", "length", b.max_range),
            r.get(us, up, "sigma", "length", b.sigma),
            r.get(us, up, "update_period", "time", b.update_period),
            r.get(us, up, "latency", "time", b.latency),
        )
    except ValueError as exc:
        raise ParseError(str(exc), _fmt(up), r.line(up)) from exc
    return noise, sonar


_MISSION_DIMS = {
    "v_d": "speed", "junction_trigger_distance": "length", "confidence_bound": "length", "stop_tolerance": "length",
    "max_mission_time": "time", "turn_speed": "speed", "turn_tolerance": "angle", "deviation_bound": "angle",
    "settle_angle": "angle", "post_turn_timeout": "time", "turn_timeout": "time", "retry_dwell": "time",
    "control_dt": "time", "supervisor_dt": "time", "particles": "int", "sigma_u_fraction": "none",
    "sigma_u_floor": "length", "odometry_scale_sigma": "none", "initial_spread": "length",
}


def _parse_mission(r: _Reader, doc, noise, sonar, cadence) -> MissionConfig:
    path = ("mission",)
    doc = r.section(doc, path, tuple(_MISSION_DIMS))
    kw = {k: r.get(doc, path, k, dim, None) for k, dim in _MISSION_DIMS.items()}
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return MissionConfig(imu_noise=noise, ultrasonic=sonar, trace_every=cadence, **kw)
    except ValueError as exc:
        raise ParseError(str(exc), "mission", r.line(path)) from exc


def _parse_energy(r: _Reader, doc) -> EnergyConfig:
    path = ("energy",)
    doc = r.section(doc, path, ("robot_speed", "flow_speed", "line_pressure", "diameter", "inclination",
                                "avionics_current"))
    b = OperatingPoint()
    op = OperatingPoint(
        r.get(doc, path, "robot_speed", "speed", b.robot_speed),
        r.get(doc, path, "flow_speed", "speed", b.flow_speed),
        r.get(doc, path, "line_pressure", "pressure", b.line_pressure),
        r.get(doc, path, "diameter", "length", b.diameter),
        r.get(doc, path, "inclination", "angle", b.inclination),
    )
    return EnergyConfig(op, r.get(doc, path, "avionics_current", "current", 0.0))


_BENCH_DIMS = {
    "trials": "int", "particles": "int", "steps": "int", "speed": "speed", "period": "time", "start": "length",
    "odometry_scale_sigma": "none", "sigma_u_fraction": "none", "sigma_u_floor": "length",
}


def _parse_bench(r: _Reader, doc, seed) -> BenchConfig:
    path = ("pf_bench",)
    doc = r.section(doc, path, tuple(_BENCH_DIMS))
    kw = {k: r.get(doc, path, k, dim, None) for k, dim in _BENCH_DIMS.items()}
    return BenchConfig(seed=seed, **{k: v for k, v in kw.items() if v is not None})


TOP_KEYS = ("seed", "output", "map", "robot", "controller", "sensors", "mission", "energy", "pf_bench", "lqr")


def parse_config(text: str, strict: bool = False) -> ScenarioConfig:
    """Parse scenario text into a fully resolved :class:`ScenarioConfig`.

    Unknown keys warn, or raise :class:`UnknownKey` when ``strict``.
    """
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", exc)), "", mark.line + 1 if mark else None) from exc
    lines = _line_index(node) if node is not None else {}
    r = _Reader(lines, strict)
    doc = r.section(doc, (), TOP_KEYS)
    seed = r.get(doc, (), "seed", "int", 0)
    op = ("output",)
    out_doc = r.section(doc.get("output"), op, ("directory", "cadence", "figures"))
    output = OutputConfig(
        r.get(out_doc, op, "directory", "str", "out"),
        r.get(out_doc, op, "cadence", "int", 10),
        r.get(out_doc, op, "figures", "bool", True),
    )
    if output.cadence < 1:
        raise ParseError("cadence must be >= 1", "output.cadence", r.line(op + ("cadence",)))
    pipe_map = _parse_map(r, doc.get("map"))
    robot = _parse_robot(r, doc.get("robot"))
    weights, pid = _parse_controller(r, doc.get("controller"))
    noise, sonar = _parse_sensors(r, doc.get("sensors"))
    mission = _parse_mission(r, doc.get("mission"), noise, sonar, output.cadence)
    energy = _parse_energy(r, doc.get("energy"))
    bench = _parse_bench(r, doc.get("pf_bench"), seed)
    lp = ("lqr",)
    lqr_doc = r.section(doc.get("lqr"), lp, ("span_diameter",))
    span = r.get(lqr_doc, lp, "span_diameter", "length", 0.18)
    return ScenarioConfig(pipe_map, robot, weights, pid, mission, energy, bench, span, seed, output)


def load_config(path: str, strict: bool = False) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), strict=strict)


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=seed, bench=replace(cfg.bench, seed=seed))
