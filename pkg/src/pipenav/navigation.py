"""Mission supervisor and the closed-loop mission runner.

The supervisor steps at the supervisory rate and decides which controller
mode the motion controller runs: cruise between features, hold at a
feature, steer through it, then stabilize before cruising again.  Feature
detection comes from the particle filter; turn progress from the attitude
filter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .control import (
    Cruise,
    DifferentialCommand,
    GainSchedule,
    Hold,
    Idle,
    LqrWeights,
    MotionController,
    PidGains,
    RotationStatus,
    Steer,
    differential_setpoints,
    rotation_error_check,
    turn_wheel_speeds,
)
from .dynamics import NumericalDivergence, RobotParams, RobotState, integrate_step
from .estimation import (
    BeliefState,
    ImuNoise,
    MahonyState,
    UltrasonicModel,
    UltrasonicSensor,
    imu_measure,
    mahony_update,
    pf_estimate,
    pf_init,
    pf_update,
    relative_angles,
)
from .pipe_map import PipeMap, Turn, segment_at
from .rotations import Y_AXIS, Z_AXIS, quat_axis_angle, quat_mul, normalize

log = logging.getLogger(__name__)

INCH = 0.0254


class FaultEscalation(RuntimeError):
    def __init__(self, reason: str, snapshot: Optional[dict] = None):
        super().__init__(reason)
        self.reason = reason
        self.snapshot = snapshot or {}


# -- phases -----------------------------------------------------------------


@dataclass(frozen=True)
class Phase2Cruise:
    v_d: float
    name = "cruise"


@dataclass(frozen=True)
class Phase1Hold:
    remaining: float
    ct_index: int
    retry: bool = False
    name = "hold"


@dataclass(frozen=True)
class Phase3Steer:
    ct_index: int
    command: DifferentialCommand
    turning: bool = False  # False while closing in on the feature entry
    attempt: int = 0
    elapsed: float = 0.0
    name = "steer"


@dataclass(frozen=True)
class PostTurnStabilize:
    timeout: float
    name = "stabilize"


@dataclass(frozen=True)
class Done:
    name = "done"


@dataclass(frozen=True)
class Fault:
    reason: str
    name = "fault"


NavPhase = Union[Phase2Cruise, Phase1Hold, Phase3Steer, PostTurnStabilize, Done, Fault]


@dataclass(frozen=True)
class MissionConfig:
    v_d: float = 0.2
    junction_trigger_distance: float = 14 * INCH
    confidence_bound: float = 0.15
    stop_tolerance: float = 0.1
    max_mission_time: float = 600.0
    turn_speed: float = 15 * INCH  # axial speed while steering, m/s
    turn_tolerance: float = math.radians(3.0)
    deviation_bound: float = math.radians(25.0)
    settle_angle: float = math.radians(3.0)
    post_turn_timeout: float = 10.0
    turn_timeout: float = 20.0
    retry_dwell: float = 1.0
    control_dt: float = 1e-3
    supervisor_dt: float = 1e-2
    particles: int = 1000
    sigma_u_fraction: float = 0.02
    sigma_u_floor: float = 0.002
    odometry_scale_sigma: float = 0.01
    imu_noise: ImuNoise = ImuNoise(accel_sigma=0.05, gyro_sigma=0.002)
    ultrasonic: UltrasonicModel = UltrasonicModel()
    trace_every: int = 10  # control steps per trace row
    initial_spread: Optional[float] = None  # None: uniform prior; else N(start, spread)

    def __post_init__(self):
        for name in ("v_d", "junction_trigger_distance", "confidence_bound", "stop_tolerance", "max_mission_time",
                     "turn_speed", "control_dt", "supervisor_dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        ratio = self.supervisor_dt / self.control_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("supervisor_dt must be a whole multiple of control_dt")
        if self.particles < 2 or self.trace_every < 1:
            raise ValueError("need particles >= 2 and trace_every >= 1")
        if self.initial_spread is not None and not self.initial_spread > 0:
            raise ValueError("initial_spread must be positive")


@dataclass(frozen=True)
class Estimates:
    x_hat: float
    sigma_hat: float
    quat: tuple
    phi_dot: float
    psi_dot: float


def junction_interrupt(
    belief: BeliefState, pipe_map: PipeMap, cfg: MissionConfig, feature_index: Optional[int] = None
) -> bool:
    """True once the belief is confidently within trigger range of a feature.

    ``feature_index`` picks the pending CT entry; by default the next
    feature ahead of the belief mean is used.
    """
    mean, std, _ = pf_estimate(belief)
    return _interrupt(mean, std, pipe_map, cfg, feature_index)


def _interrupt(mean, std, pipe_map, cfg, feature_index):
    if std > cfg.confidence_bound:
        return False
    if feature_index is None:
        from .pipe_map import distance_to_next_feature

        d = distance_to_next_feature(pipe_map, min(max(mean, 0.0), pipe_map.total_length))
        if d is None:
            return False
    else:
        if feature_index >= len(pipe_map.ct):
            return False
        d = pipe_map.feature_start(feature_index) - mean
    return d <= cfg.junction_trigger_distance


def turn_command(pipe_map: PipeMap, ct_index: int, p: RobotParams, cfg: MissionConfig) -> DifferentialCommand:
    entry = pipe_map.ct[ct_index]
    if entry.omega_max is not None and entry.omega_min is not None:
        hi, lo = entry.omega_max, entry.omega_min
    else:
        seg = pipe_map.feature_segment(ct_index)
        hi, lo = turn_wheel_speeds(cfg.turn_speed, p.wheel_radius, seg.inner_radius, seg.outer_radius)
    return DifferentialCommand(entry.desired_turn, hi, lo)


def _turn_quat(turn: Turn, angle: float):
    return quat_axis_angle(Y_AXIS if turn.axis == "phi" else Z_AXIS, angle)


class Supervisor:
    """Phase state machine.

    ``reference`` is the attitude of the current straight run; the
    stabilizer holds the robot at that attitude, and each completed turn
    rotates it by the commanded angle.
    """

    def __init__(self, pipe_map: PipeMap, params: RobotParams, cfg: MissionConfig, reference=(1.0, 0.0, 0.0, 0.0)):
        self.map = pipe_map
        self.params = params
        self.cfg = cfg
        self.phase: NavPhase = Phase2Cruise(cfg.v_d)
        self.ct_index = 0
        self.reference = tuple(reference)
        self.consumed: list[int] = []
        self.events: list[tuple] = []  # (kind, ct_index, details)

    def angles(self, quat, outer: str = "phi"):
        return relative_angles(self.reference, quat, outer)

    def _consume(self, k: int):
        if self.consumed and k <= self.consumed[-1]:
            raise FaultEscalation(
                f"CT entry {k} consumed out of order",
                {"phase": self.phase.name, "ct_index": self.ct_index, "consumed": list(self.consumed)},
            )
        self.consumed.append(k)
        self.ct_index = k + 1

    def step(self, est: Estimates, dt: float) -> NavPhase:
        ph = self.phase
        cfg = self.cfg
        n = len(self.map.ct)
        new = ph
        if isinstance(ph, Phase2Cruise):
            if self.ct_index < n and _interrupt(est.x_hat, est.sigma_hat, self.map, cfg, self.ct_index):
                dwell = self.map.ct[self.ct_index].dwell_time
                new = Phase1Hold(dwell, self.ct_index)
                self.events.append(("interrupt", self.ct_index, {}))
            elif (self.ct_index >= n and est.x_hat >= self.map.extraction_arclength - cfg.stop_tolerance
                  and est.sigma_hat <= cfg.confidence_bound):
                # a diffuse belief can drift past extraction on featureless maps
                new = Done()
        elif isinstance(ph, Phase1Hold):
            left = ph.remaining - dt
            if left > 1e-9:
                new = replace(ph, remaining=left)
            else:
                k = ph.ct_index
                self.events.append(("hold_end", k, {}))
                entry = self.map.ct[k]
                if entry.desired_turn is Turn.STRAIGHT:
                    self._consume(k)
                    new = Phase2Cruise(cfg.v_d)
                else:
                    cmd = turn_command(self.map, k, self.params, cfg)
                    new = Phase3Steer(k, cmd, turning=ph.retry, attempt=int(ph.retry))
        elif isinstance(ph, Phase3Steer):
            new = self._steer(ph, est, dt)
        elif isinstance(ph, PostTurnStabilize):
            phi, psi = self.angles(est.quat)
            if abs(phi) < cfg.settle_angle and abs(psi) < cfg.settle_angle:
                self.events.append(("settled", self.consumed[-1], {"phi": phi, "psi": psi}))
                new = Phase2Cruise(cfg.v_d)
            elif ph.timeout - dt <= 0:
                new = Fault("attitude did not settle after turn")
            else:
                new = PostTurnStabilize(ph.timeout - dt)
        if type(new) is not type(ph):
            log.info("phase %s -> %s (ct_index %d)", ph.name, new.name, self.ct_index)
        self.phase = new
        return new

    def _steer(self, ph: Phase3Steer, est: Estimates, dt: float) -> NavPhase:
        cfg = self.cfg
        if not ph.turning:
            if est.x_hat >= self.map.feature_start(ph.ct_index):
                self.events.append(("turn_start", ph.ct_index, {}))
                return replace(ph, turning=True, elapsed=0.0)
            return ph
        outer = ph.command.motion_type.axis
        rel = self.angles(est.quat, outer)
        status = rotation_error_check(rel, ph.command, cfg.turn_tolerance, cfg.deviation_bound)
        if status is RotationStatus.COMPLETED:
            along, across = (rel if outer == "phi" else rel[::-1])
            self.events.append(("turn_done", ph.ct_index, {"along": along, "across": across}))
            self.reference = normalize(
                quat_mul(self.reference, _turn_quat(ph.command.motion_type, ph.command.target_angle))
            )
            self._consume(ph.ct_index)
            return PostTurnStabilize(cfg.post_turn_timeout)
        if status is RotationStatus.DEVIATING:
            self.events.append(("turn_deviating", ph.ct_index, {"attempt": ph.attempt}))
            if ph.attempt == 0:
                return Phase1Hold(cfg.retry_dwell, ph.ct_index, retry=True)
            return Fault(f"turn at CT entry {ph.ct_index} deviated twice")
        if ph.elapsed + dt > cfg.turn_timeout:
            return Fault(f"turn at CT entry {ph.ct_index} timed out")
        return replace(ph, elapsed=ph.elapsed + dt)

    def control_mode(self):
        ph = self.phase
        if isinstance(ph, (Phase2Cruise, PostTurnStabilize)):
            return Cruise(self.cfg.v_d)
        if isinstance(ph, Phase1Hold):
            return Hold()
        if isinstance(ph, Phase3Steer):
            if ph.turning:
                return Steer(differential_setpoints(ph.command))
            return Cruise(self.cfg.turn_speed)
        return Idle()


# -- mission ----------------------------------------------------------------

TRACE_COLUMNS = (
    "t_s", "s_m", "xdot_mps", "phi_rad", "psi_rad", "phi_hat_rad", "psi_hat_rad",
    "w1_radps", "w2_radps", "w3_radps", "phase", "ct_index", "pf_mean_m", "pf_std_m",
    "i1_A", "i2_A", "i3_A",
)


@dataclass
class StopRecord:
    ct_index: int
    trigger_s: float  # true arclength when the interrupt fired
    stop_s: float  # true arclength at the end of the dwell
    feature_start: float
    trigger_distance: float

    @property
    def stop_distance(self) -> float:
        return self.feature_start - self.stop_s

    @property
    def stop_error(self) -> float:
        return self.trigger_distance - self.stop_distance


@dataclass
class TurnRecord:
    ct_index: int
    along: float  # estimated rotation about the commanded axis at completion
    across: float  # estimated rotation about the other axis at completion
    true_along: float
    true_across: float
    settled_residual: Optional[float] = None  # max |angle| when cleanup finished


@dataclass
class MissionReport:
    status: str  # done | fault | timeout
    reason: str
    duration: float
    distance: float
    energy: float  # joules drawn from the battery
    phase_times: dict
    ct_consumed: list
    stops: list
    turns: list
    localization_rms: float
    localization_max: float
    degenerate_count: int
    trace: list = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "duration_s": round(self.duration, 6),
            "distance_m": round(self.distance, 6),
            "energy_J": round(self.energy, 6),
            "phase_times_s": {k: round(v, 6) for k, v in sorted(self.phase_times.items())},
            "ct_consumed": list(self.ct_consumed),
            "stops": [
                {
                    "ct_index": r.ct_index,
                    "trigger_s_m": round(r.trigger_s, 6),
                    "stop_s_m": round(r.stop_s, 6),
                    "stop_distance_m": round(r.stop_distance, 6),
                    "stop_error_m": round(r.stop_error, 6),
                }
                for r in self.stops
            ],
            "turns": [
                {
                    "ct_index": r.ct_index,
                    "along_deg": round(math.degrees(r.along), 4),
                    "across_deg": round(math.degrees(r.across), 4),
                    "true_along_deg": round(math.degrees(r.true_along), 4),
                    "true_across_deg": round(math.degrees(r.true_across), 4),
                    "settled_residual_deg": None
                    if r.settled_residual is None
                    else round(math.degrees(r.settled_residual), 4),
                }
                for r in self.turns
            ],
            "localization_rms_m": round(self.localization_rms, 6),
            "localization_max_m": round(self.localization_max, 6),
            "degenerate_count": self.degenerate_count,
        }


def mission_run(
    pipe_map: PipeMap,
    params: RobotParams = RobotParams(),
    cfg: MissionConfig = MissionConfig(),
    seed: int = 0,
    weights: LqrWeights = LqrWeights(),
    pid_gains: PidGains = PidGains(),
    start: float = 0.0,
    schedule: Optional[GainSchedule] = None,
) -> MissionReport:
    """Run plant, estimators and supervisor until Done, Fault or timeout."""
    root = np.random.SeedSequence(seed)
    rng_imu, rng_sonar, rng_odo, rng_pf = (np.random.default_rng(s) for s in root.spawn(4))
    dt = cfg.control_dt
    sup_every = int(round(cfg.supervisor_dt / dt))

    state = RobotState.initial(s=start)
    seg, _ = segment_at(pipe_map, start)
    from .dynamics import with_segment_speeds

    state = with_segment_speeds(state, seg, params)
    schedule = schedule or GainSchedule(params, weights)
    controller = MotionController(params, schedule, pid_gains)
    sup = Supervisor(pipe_map, params, cfg, reference=state.quat)
    mahony = MahonyState(quat=state.quat)
    period_steps = max(1, round(cfg.ultrasonic.update_period / dt))
    sensor = UltrasonicSensor(cfg.ultrasonic, pipe_map, rng_sonar, dt, phase=int(rng_sonar.integers(period_steps)))
    belief = pf_init(pipe_map, cfg.particles, rng_pf)
    if cfg.initial_spread is not None:
        x0 = np.clip(rng_pf.normal(start, cfg.initial_spread, cfg.particles), 0.0, pipe_map.total_length)
        belief = BeliefState(x0, belief.w, rng_pf)
    x_hat, sigma_hat, _ = pf_estimate(belief)
    odo = 0.0
    total = pipe_map.total_length

    phase_times: dict[str, float] = {}
    stops: list[StopRecord] = []
    turns: list[TurnRecord] = []
    loc_err: list[float] = []
    trace: list[tuple] = []
    energy = 0.0
    status, reason = "timeout", f"mission exceeded {cfg.max_mission_time} s"
    pending_trigger: dict[int, float] = {}
    gyro = (0.0, 0.0, 0.0)
    n_steps = int(math.ceil(cfg.max_mission_time / dt))

    for k in range(n_steps):
        s_clamped = min(max(state.s, 0.0), total)
        seg, _ = segment_at(pipe_map, s_clamped)

        sample = imu_measure(state, cfg.imu_noise, rng_imu)
        mahony, _, _ = mahony_update(mahony, sample, dt)
        gyro = tuple(g - b for g, b in zip(sample.gyro, mahony.bias))

        due, z = sensor.poll(s_clamped)
        if due:
            u = odo * (1.0 + cfg.odometry_scale_sigma * float(rng_odo.normal()))
            sigma_u = max(cfg.sigma_u_fraction * abs(u), cfg.sigma_u_floor)
            belief = pf_update(belief, u, sigma_u, z, pipe_map, cfg.ultrasonic)
            odo = 0.0
            x_hat, sigma_hat, _ = pf_estimate(belief)
            loc_err.append(x_hat - s_clamped)

        if k % sup_every == 0:
            n_events = len(sup.events)
            est = Estimates(x_hat, sigma_hat, mahony.quat, gyro[1], gyro[2])
            try:
                sup.step(est, cfg.supervisor_dt)
            except FaultEscalation as exc:
                log.error("fault: %s %s", exc.reason, exc.snapshot)
                sup.phase = Fault(exc.reason)
            for kind, idx, info in sup.events[n_events:]:
                if kind == "interrupt":
                    pending_trigger[idx] = s_clamped
                elif kind == "hold_end" and idx in pending_trigger:
                    stops.append(
                        StopRecord(idx, pending_trigger.pop(idx), s_clamped, pipe_map.feature_start(idx),
                                   cfg.junction_trigger_distance)
                    )
                elif kind == "turn_done":
                    outer = pipe_map.ct[idx].desired_turn.axis
                    prev_ref = _undo_turn(sup.reference, pipe_map.ct[idx].desired_turn)
                    t_rel = relative_angles(prev_ref, state.quat, outer)
                    t_along, t_across = t_rel if outer == "phi" else t_rel[::-1]
                    turns.append(TurnRecord(idx, info["along"], info["across"], t_along, t_across))
                elif kind == "settled" and turns:
                    turns[-1].settled_residual = max(abs(info["phi"]), abs(info["psi"]))
            if isinstance(sup.phase, Done):
                status, reason = "done", ""
                break
            if isinstance(sup.phase, Fault):
                status, reason = "fault", sup.phase.reason
                break

        phase_name = sup.phase.name
        phase_times[phase_name] = phase_times.get(phase_name, 0.0) + dt
        mode = sup.control_mode()
        phi_r, psi_r = sup.angles(mahony.quat)
        x_s = (phi_r, gyro[1], psi_r, gyro[2])
        volts = controller.command(mode, seg.diameter, state.wheel_speeds, x_s, dt)

        if k % cfg.trace_every == 0:
            tphi, tpsi = sup.angles(state.quat)
            trace.append(
                (state.t, state.s, state.xdot, tphi, tpsi, phi_r, psi_r, *state.wheel_speeds,
                 phase_name, sup.ct_index, x_hat, sigma_hat, *state.currents)
            )
        try:
            new_state = integrate_step(state, volts, seg, params, dt)
        except NumericalDivergence as exc:
            status, reason = "fault", f"numerical divergence: {exc}"
            break
        energy += dt * sum(max(v * i, 0.0) for v, i in zip(volts, new_state.currents))
        odo += dt * params.wheel_radius * sum(new_state.wheel_speeds) / 3.0
        state = new_state
        if not all(math.isfinite(c) for c in mahony.quat):
            status, reason = "fault", "attitude estimate diverged"
            break

    errs = np.asarray(loc_err) if loc_err else np.zeros(1)
    return MissionReport(
        status=status,
        reason=reason,
        duration=state.t,
        distance=state.s - start,
        energy=float(energy),
        phase_times=phase_times,
        ct_consumed=list(sup.consumed),
        stops=stops,
        turns=turns,
        localization_rms=float(np.sqrt(np.mean(errs**2))),
        localization_max=float(np.max(np.abs(errs))),
        degenerate_count=belief.degenerate_count,
        trace=trace,
    )


def _undo_turn(reference, turn: Turn):
    return quat_mul(reference, _turn_quat(turn, -turn.sign * 0.5 * math.pi))
