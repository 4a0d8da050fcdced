"""Closed-loop braking and altitude-hold control via stimulation.

The actuator is single-sided and train-quantized: a command is a whole
500 ms both-muscle train that adds lift and brake, so the controller
can only push up/slow down and must wait out a refractory period
between trains. Proportional law on the tracking error:

    frequency = clamp(f_lo + kp * |error|, f_lo, f_hi)

AltitudeHold fires only while the vehicle is below the target altitude;
BrakeToSpeed fires only while it is faster than the target speed.

The controller consumes operator-side state estimates (motion-capture
position with finite-difference speed, as the base station sees them),
never simulator ground truth. Estimates older than 50 ms hold the
output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dose import DoseAnchorTable, DoseNoise, NO_NOISE
from .dynamics import Simulator, TrimConfig
from .geometry import Vec3
from .stimulus import DEFAULT_AMPLITUDE_MV, DEFAULT_PULSE_WIDTH_MS, \
    StimCommand, StimTarget

MODE_ALTITUDE_HOLD = "altitude_hold"
MODE_BRAKE_TO_SPEED = "brake_to_speed"
MAX_TELEMETRY_AGE_MS = 50.0


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class ControlGoal:
    """Setpoint plus gains. kp is Hz per meter (altitude mode) or Hz per
    m/s (speed mode)."""

    mode: str
    target: float
    kp: float = 60.0
    deadband: float = 0.1
    refractory_ms: float = 700.0
    f_lo: float = 63.0
    f_hi: float = 100.0
    train_ms: float = 500.0

    def __post_init__(self) -> None:
        if self.mode not in (MODE_ALTITUDE_HOLD, MODE_BRAKE_TO_SPEED):
            raise ControlError(f"unknown control mode {self.mode!r}")
        if self.deadband < 0.0:
            raise ControlError("deadband must be non-negative")
        if self.refractory_ms < self.train_ms:
            raise ControlError(
                "refractory must cover the whole train duration")
        if not self.f_lo < self.f_hi:
            raise ControlError("need f_lo < f_hi")

    def to_json(self) -> str:
        return json.dumps({
            "mode": self.mode, "target": self.target, "kp": self.kp,
            "deadband": self.deadband, "refractory_ms": self.refractory_ms,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ControlGoal":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class StateEstimate:
    """Operator-side estimate: mocap altitude plus differenced speed."""

    t_ms: float
    altitude_m: float
    speed_mps: float


def control_step(
    estimate: StateEstimate | None,
    goal: ControlGoal,
    now_ms: float,
    last_command_ms: float | None = None,
) -> tuple[StimCommand | None, str]:
    """One controller tick. Returns (command, status); the command is
    None unless the controller decides to fire."""
    if estimate is None or now_ms - estimate.t_ms > MAX_TELEMETRY_AGE_MS:
        return None, "stale"
    if (last_command_ms is not None
            and now_ms - last_command_ms < goal.refractory_ms):
        return None, "refractory"

    if goal.mode == MODE_ALTITUDE_HOLD:
        error = goal.target - estimate.altitude_m
        if error <= goal.deadband:   # at/above target: cannot push down
            return None, "hold"
    else:
        error = estimate.speed_mps - goal.target
        if error <= goal.deadband:   # at/below target: cannot speed up
            return None, "hold"

    freq = min(goal.f_hi, max(goal.f_lo, goal.f_lo + goal.kp * abs(error)))
    cmd = StimCommand(StimTarget.BOTH, freq, goal.train_ms,
                      DEFAULT_AMPLITUDE_MV, DEFAULT_PULSE_WIDTH_MS)
    return cmd, "fired"


@dataclass
class ClosedLoopResult:
    t_ms: np.ndarray
    altitude: np.ndarray
    speed: np.ndarray
    commands: list[tuple[float, StimCommand]]

    def rms_altitude_error(self, target: float) -> float:
        return float(np.sqrt(np.mean((self.altitude - target) ** 2)))

    def mean_final_speed(self, window_s: float = 5.0) -> float:
        mask = self.t_ms >= self.t_ms[-1] - window_s * 1000.0
        return float(np.mean(self.speed[mask]))


class MocapEstimator:
    """Finite-difference speed estimator over noisy position fixes."""

    def __init__(self, sigma_m: float = 0.001, seed: int = 0) -> None:
        self._rng = np.random.default_rng((seed, 0x657374))
        self._sigma = sigma_m
        self._last: tuple[float, np.ndarray] | None = None

    def update(self, t_ms: float, position: Vec3) -> StateEstimate | None:
        p = np.array(position, dtype=float)
        if self._sigma > 0.0:
            p = p + self._rng.normal(0.0, self._sigma, 3)
        prev = self._last
        self._last = (t_ms, p)
        if prev is None or t_ms <= prev[0]:
            return None
        dt_s = (t_ms - prev[0]) / 1000.0
        vel = (p - prev[1]) / dt_s
        return StateEstimate(t_ms=t_ms, altitude_m=float(p[2]),
                             speed_mps=float(np.linalg.norm(vel[:2])))


def closed_loop_sim(
    goal: ControlGoal | None,
    trim: TrimConfig = TrimConfig(),
    dose_table: DoseAnchorTable | None = None,
    dose_noise: DoseNoise = NO_NOISE,
    duration_s: float = 30.0,
    sink_accel: float = 0.0,
    controller_period_ms: float = 50.0,
    seed: int = 0,
    start_altitude: float = 2.0,
) -> ClosedLoopResult:
    """Run the simulator for duration_s with an optional controller in
    the loop (goal None = uncontrolled baseline). A constant sink
    disturbance pulls the vehicle down; the arena is not enforced so
    long runs stay in frame."""
    sim = Simulator(trim=trim, dose_table=dose_table, dose_noise=dose_noise,
                    seed=seed, enforce_arena=False,
                    start_position=Vec3(6.0, 4.0, start_altitude))
    sim.external_accel = Vec3(0.0, 0.0, -sink_accel)
    estimator = MocapEstimator(seed=seed)
    n = int(round(duration_s * 1000.0 / sim.dt_ms))
    period = int(round(controller_period_ms / sim.dt_ms))

    t = np.empty(n)
    alt = np.empty(n)
    spd = np.empty(n)
    commands: list[tuple[float, StimCommand]] = []
    estimate: StateEstimate | None = None
    last_cmd_ms: float | None = None

    for i in range(n):
        if i % period == 0:
            est = estimator.update(sim.t_ms, sim.position)
            if est is not None:
                estimate = est
            if goal is not None:
                cmd, status = control_step(estimate, goal, sim.t_ms,
                                           last_cmd_ms)
                if cmd is not None:
                    sim.queue_command(cmd)
                    commands.append((sim.t_ms, cmd))
                    last_cmd_ms = sim.t_ms
        sim.step()
        t[i] = sim.t_ms
        alt[i] = sim.position.z
        spd[i] = math.hypot(sim.velocity.x, sim.velocity.y)

    return ClosedLoopResult(t_ms=t, altitude=alt, speed=spd,
                            commands=commands)
