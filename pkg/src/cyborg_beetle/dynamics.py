"""Stroke-averaged 6-DOF free-flight simulation with stimulation-induced
response deltas, trial noise, and post-stimulation recovery.

Model structure, per 1 ms step (semi-implicit Euler, exact exponential
updates for all first-order internals):

- Muscle activation follows the pulse train (stimulus module); a force
  envelope tracks activation normalized by its steady cycle mean with a
  short time constant, which removes pulse ripple while keeping the
  envelope's steady level at exactly 1.
- Attitude: the commanded Euler offset is the envelope-weighted
  per-trial response (pitch/yaw/roll deltas); the actual offset relaxes
  toward it with tau_attitude while a train is active and decays back
  to trim with tau_recover afterwards.
- Translation: world acceleration = envelope-weighted deltas (braking
  along the instantaneous body heading, sideslip to its left, lift up)
  plus a weak drag restoring the velocity toward level cruise along the
  slow baseline heading. The baseline heading performs a mild
  Ornstein-Uhlenbeck walk so trials are realistically non-identical.

Trials are deterministic given (trim, protocol, seed): the seed expands
into independent streams for the heading walk, the per-trial response
draw, and the sensor noise.

One simulator instance owns its state and must be stepped from a single
thread; external commands go through an ordered queue drained once per
step. Batch runs use independent instances.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .dose import DoseAnchorTable, DoseNoise, InducedResponse, NO_NOISE, \
    ZERO_RESPONSE, default_table, noisy_response
from .geometry import ARENA_SIZE, EulerBody, UnitQuat, Vec3, \
    body_rates_from_quats, euler_to_quat, heading_direction, wrap_deg
from .records import TrialMeta, TrialRecord, TruthSeries
from .sensors import NoiseConfig, ZERO_NOISE, sample_imu, sample_mocap
from .stimulus import ActivationState, PulseTrain, StimCommand, \
    activation_step, build_pulse_train, steady_mean_activation

DEFAULT_DT_MS = 1.0


class SimulationFault(RuntimeError):
    """Non-finite state or another unrecoverable simulation error."""


@dataclass(frozen=True)
class TrimConfig:
    """Baseline flight and response-lag configuration."""

    cruise_speed: float = 2.0          # m/s
    payload_mass_g: float = 1.23
    trim_pitch_deg: float = 0.0
    tau_attitude_ms: float = 80.0      # attitude response lag
    tau_recover_ms: float = 150.0      # post-stimulation recovery
    tau_force_ms: float = 30.0         # force envelope smoothing
    tau_act_ms: float = 10.0
    tau_decay_ms: float = 40.0
    drag_per_s: float = 0.1            # cruise-restoring drag rate
    heading_sigma_deg: float = 1.5     # OU stationary sd; 0 disables
    heading_tau_ms: float = 400.0
    payload_threshold_g: float = 1.23
    payload_penalty_per_g: float = 0.15 / (3.50 - 1.23)
    max_offset_pitch_deg: float = 80.0  # keeps euler pitch regular

    def __post_init__(self) -> None:
        if self.cruise_speed <= 0.0:
            raise ValueError("cruise speed must be positive")
        if self.payload_mass_g < 0.0:
            raise ValueError("payload mass must be non-negative")


def payload_speed(trim: TrimConfig) -> float:
    """Effective cruise speed: unchanged up to the backpack mass, linear
    penalty above it (15% reduction at 3.50 g by default)."""
    excess = trim.payload_mass_g - trim.payload_threshold_g
    if excess <= 0.0:
        return trim.cruise_speed
    factor = max(0.0, 1.0 - trim.payload_penalty_per_g * excess)
    return trim.cruise_speed * factor


@dataclass(frozen=True)
class TrialProtocol:
    """Stimulation trial: 150 ms pre window, the train, a post window."""

    command: StimCommand | None
    pre_ms: float = 150.0
    post_ms: float = 350.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pre_ms < 0.0 or self.post_ms < 0.0:
            raise ValueError("window durations must be non-negative")

    @property
    def stim_ms(self) -> float:
        return self.command.duration_ms if self.command else 500.0

    @property
    def duration_ms(self) -> float:
        return self.pre_ms + self.stim_ms + self.post_ms


@dataclass(frozen=True)
class BeetleState:
    position: Vec3
    velocity: Vec3
    attitude: UnitQuat
    body_rates: Vec3           # deg/s
    activation_left: ActivationState
    activation_right: ActivationState


@dataclass
class _ActiveStim:
    """One accepted command realized as trains plus a response draw."""

    command: StimCommand
    train: PulseTrain
    start_ms: float
    mean_activation: float
    response: InducedResponse

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.command.duration_ms


class Simulator:
    """Single-threaded owner of one beetle's state."""

    def __init__(
        self,
        trim: TrimConfig = TrimConfig(),
        dose_table: DoseAnchorTable | None = None,
        dose_noise: DoseNoise = NO_NOISE,
        seed: int = 0,
        dt_ms: float = DEFAULT_DT_MS,
        start_position: Vec3 = Vec3(6.0, 4.0, 2.0),
        start_heading_deg: float | None = None,
        enforce_arena: bool = True,
    ) -> None:
        if dt_ms > 2.0:
            raise ValueError("step size must be <= 2 ms")
        self.trim = trim
        self.table = dose_table or default_table()
        self.dose_noise = dose_noise
        self.dt_ms = dt_ms
        self.enforce_arena = enforce_arena
        self._rng = np.random.default_rng((seed, 0x6F75))   # heading walk
        self._dose_rng = np.random.default_rng((seed, 0x646F7365))
        self.cruise = payload_speed(trim)

        self.t_ms = 0.0
        heading = (float(self._rng.uniform(0.0, 360.0))
                   if start_heading_deg is None else start_heading_deg)
        self._psi_center = heading
        self.psi_base = heading
        hx, hy = heading_direction(heading)
        self.position = start_position
        self.velocity = Vec3(self.cruise * hx, self.cruise * hy, 0.0)
        self.offset = (0.0, 0.0, 0.0)  # yaw, pitch, roll (deg)
        self.act_left = ActivationState(0.0)
        self.act_right = ActivationState(0.0)
        self.env_left = 0.0
        self.env_right = 0.0
        self.attitude = self._attitude_quat()
        self.body_rates = Vec3(0.0, 0.0, 0.0)
        self.accel_world = Vec3(0.0, 0.0, 0.0)
        self.external_accel = Vec3(0.0, 0.0, 0.0)  # disturbance hook
        self._prev_delta = Vec3(0.0, 0.0, 0.0)
        self.stim: _ActiveStim | None = None
        self.terminated = False
        self.commands: deque[tuple[StimCommand, object]] = deque()

    # -- command intake ----------------------------------------------------

    def queue_command(self, cmd: StimCommand, dose_seed=None) -> None:
        """Thread-safe enough for one producer; drained once per step. A
        command arriving during an active train replaces it."""
        self.commands.append((cmd, dose_seed))

    def _accept(self, cmd: StimCommand, dose_seed) -> None:
        if cmd.amplitude_mv == 0.0 or cmd.duration_ms == 0.0:
            self.stim = None  # electrically null: no muscle effect
            return
        rng = (np.random.default_rng(dose_seed) if dose_seed is not None
               else self._dose_rng)
        response = noisy_response(cmd.target, cmd.frequency_hz, self.table,
                                  self.dose_noise, rng)
        self.stim = _ActiveStim(
            command=cmd,
            train=build_pulse_train(cmd),
            start_ms=self.t_ms,
            mean_activation=steady_mean_activation(
                cmd.frequency_hz, cmd.pulse_width_ms, self.trim.tau_act_ms,
                self.trim.tau_decay_ms),
            response=response,
        )

    # -- state queries ------------------------------------------------------

    def stim_active(self) -> bool:
        return (self.stim is not None
                and self.stim.start_ms <= self.t_ms < self.stim.end_ms)

    def snapshot(self) -> BeetleState:
        return BeetleState(
            position=self.position,
            velocity=self.velocity,
            attitude=self.attitude,
            body_rates=self.body_rates,
            activation_left=self.act_left,
            activation_right=self.act_right,
        )

    def _attitude_quat(self) -> UnitQuat:
        yaw_off, pitch_off, roll_off = self.offset
        pitch = self.trim.trim_pitch_deg + pitch_off
        pitch = max(-self.trim.max_offset_pitch_deg,
                    min(self.trim.max_offset_pitch_deg, pitch))
        return euler_to_quat(EulerBody(
            wrap_deg(self.psi_base + yaw_off), pitch, wrap_deg(roll_off)))

    # -- integration ---------------------------------------------------------

    def step(self) -> None:
        """Advance one dt: drain commands, update activations/envelopes,
        relax attitude, integrate translation."""
        trim = self.trim
        dt = self.dt_ms
        dt_s = dt / 1000.0

        while self.commands:
            cmd, dose_seed = self.commands.popleft()
            self._accept(cmd, dose_seed)

        # activation per side (train-relative time)
        stim = self.stim
        left_train = right_train = None
        if stim is not None:
            sides = stim.command.target.sides
            t_rel = self.t_ms - stim.start_ms
            if "left" in sides:
                left_train = stim.train
            if "right" in sides:
                right_train = stim.train
        else:
            t_rel = 0.0
        self.act_left = activation_step(
            self.act_left, left_train, t_rel, dt, trim.tau_act_ms,
            trim.tau_decay_ms)
        self.act_right = activation_step(
            self.act_right, right_train, t_rel, dt, trim.tau_act_ms,
            trim.tau_decay_ms)

        # force envelope: first-order track of normalized activation
        decay_f = math.exp(-dt / trim.tau_force_ms)
        if stim is not None:
            norm = 1.0 / stim.mean_activation
            tgt_left = self.act_left.level * norm if left_train else 0.0
            tgt_right = self.act_right.level * norm if right_train else 0.0
        else:
            tgt_left = tgt_right = 0.0
        self.env_left = tgt_left + (self.env_left - tgt_left) * decay_f
        self.env_right = tgt_right + (self.env_right - tgt_right) * decay_f

        if stim is None:
            weight = 0.0
            angle_weight = 0.0
            response = ZERO_RESPONSE
        else:
            sides = stim.command.target.sides
            envs = [self.env_left if s == "left" else self.env_right
                    for s in sides]
            weight = sum(envs) / len(envs)
            # the attitude relaxation already filters pulse ripple, so
            # the angle command tracks raw normalized activation
            raw = [tgt_left if s == "left" else tgt_right for s in sides]
            angle_weight = sum(raw) / len(raw)
            response = stim.response

        # baseline heading random walk (exact OU update)
        if trim.heading_sigma_deg > 0.0:
            decay_h = math.exp(-dt / trim.heading_tau_ms)
            self.psi_base = (
                self._psi_center
                + (self.psi_base - self._psi_center) * decay_h
                + trim.heading_sigma_deg
                * math.sqrt(1.0 - decay_h * decay_h)
                * float(self._rng.standard_normal()))

        # attitude offset relaxation toward the commanded offset
        tau = (trim.tau_attitude_ms if self.stim_active()
               else trim.tau_recover_ms)
        decay_a = math.exp(-dt / tau)
        cmd_off = (angle_weight * response.d_yaw,
                   angle_weight * response.d_pitch,
                   angle_weight * response.d_roll)
        self.offset = tuple(
            c + (o - c) * decay_a for o, c in zip(self.offset, cmd_off))

        prev_q = self.attitude
        self.attitude = self._attitude_quat()
        self.body_rates = body_rates_from_quats(prev_q, self.attitude, dt_s)

        # translation: response deltas along the instantaneous body
        # heading + drag toward level cruise along the baseline heading.
        # The delta is trapezoid-averaged across the step and the linear
        # drag term integrated exactly, so a 1 ms step tracks a fine-step
        # integration to well under 0.1%.
        yaw_now = self.psi_base + self.offset[0]
        hx, hy = heading_direction(yaw_now)
        delta = Vec3(
            weight * (response.d_ah * hx - response.d_alat * hy)
            + self.external_accel.x,
            weight * (response.d_ah * hy + response.d_alat * hx)
            + self.external_accel.y,
            weight * response.d_av + self.external_accel.z,
        )
        a_eff = (delta + self._prev_delta).scaled(0.5)
        self._prev_delta = delta
        bx, by = heading_direction(self.psi_base)
        k = trim.drag_per_s
        v_inf = Vec3(self.cruise * bx + a_eff.x / k,
                     self.cruise * by + a_eff.y / k,
                     a_eff.z / k)
        decay_v = math.exp(-k * dt_s)
        v_prev = self.velocity
        self.velocity = v_inf + (self.velocity - v_inf).scaled(decay_v)
        self.position = self.position + (v_prev + self.velocity).scaled(
            0.5 * dt_s)
        self.accel_world = (self.velocity - v_prev).scaled(1.0 / dt_s)
        self.t_ms += dt

        if not all(map(math.isfinite, (*self.position, *self.velocity,
                                       *self.attitude))):
            raise SimulationFault(
                f"non-finite state at t = {self.t_ms} ms: "
                f"pos {self.position}, vel {self.velocity}")
        if self.enforce_arena and not _inside_arena(self.position):
            self.terminated = True


def _inside_arena(p: Vec3) -> bool:
    return (0.0 <= p.x <= ARENA_SIZE[0] and 0.0 <= p.y <= ARENA_SIZE[1]
            and 0.0 <= p.z <= ARENA_SIZE[2])


def run_trial(
    trim: TrimConfig,
    protocol: TrialProtocol,
    dose_table: DoseAnchorTable | None = None,
    dose_noise: DoseNoise = NO_NOISE,
    sensor_noise: NoiseConfig = ZERO_NOISE,
    mocap_rate_hz: float = 200.0,
    beetle_id: int = 0,
    trial_id: int = 0,
    keep_truth: bool = True,
) -> TrialRecord:
    """Simulate one stimulation trial and emulate its sensor streams.

    Deterministic given (trim, protocol, seed): the protocol seed feeds
    the heading walk, the trial's response draw, and the sensor noise.
    Arena exit truncates the record and sets the truncated flag.
    """
    seq = np.random.SeedSequence(protocol.seed)
    sim_seed, dose_seed, sensor_seed = [int(s.generate_state(1)[0])
                                        for s in seq.spawn(3)]
    sim = Simulator(trim=trim, dose_table=dose_table, dose_noise=dose_noise,
                    seed=sim_seed)
    n_steps = int(round(protocol.duration_ms / sim.dt_ms))
    onset_step = int(round(protocol.pre_ms / sim.dt_ms))

    n = n_steps + 1
    t = np.empty(n)
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    quat = np.empty((n, 4))
    rates = np.empty((n, 3))
    accel = np.empty((n, 3))
    act_l = np.empty(n)
    act_r = np.empty(n)
    stim_on = np.zeros(n, dtype=int)

    def record(i: int) -> None:
        t[i] = sim.t_ms
        pos[i] = sim.position
        vel[i] = sim.velocity
        quat[i] = sim.attitude
        rates[i] = sim.body_rates
        accel[i] = getattr(sim, "accel_world", Vec3(0.0, 0.0, 0.0))
        act_l[i] = sim.act_left.level
        act_r[i] = sim.act_right.level
        stim_on[i] = int(sim.stim_active())

    record(0)
    filled = n
    for i in range(1, n):
        if i == onset_step + 1 and protocol.command is not None:
            sim.queue_command(protocol.command, dose_seed)
        sim.step()
        record(i)
        if sim.terminated:
            filled = i + 1
            break

    truth = TruthSeries(
        t_ms=t[:filled], position=pos[:filled], velocity=vel[:filled],
        quat=quat[:filled], body_rates=rates[:filled],
        accel_world=accel[:filled], act_left=act_l[:filled],
        act_right=act_r[:filled], stim_on=stim_on[:filled])

    noise = replace(sensor_noise, seed=sensor_seed)
    imu = sample_imu(truth, noise)
    mocap = sample_mocap(truth, noise, mocap_rate_hz)
    cmd = protocol.command
    meta = TrialMeta(
        beetle_id=beetle_id,
        trial_id=trial_id,
        target=cmd.target if cmd else None,
        frequency_hz=cmd.frequency_hz if cmd else 0.0,
        seed=protocol.seed,
        pre_ms=protocol.pre_ms,
        stim_ms=protocol.stim_ms,
        post_ms=protocol.post_ms,
        truncated=sim.terminated,
    )
    return TrialRecord(meta=meta, truth=truth if keep_truth else None,
                       imu=imu, mocap=mocap)
