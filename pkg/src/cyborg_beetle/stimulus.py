"""Stimulation pulse trains and first-order muscle activation dynamics.

A stimulation command (side, frequency, duration, amplitude, pulse
width) is realized as a train of rectangular pulses. The train drives a
dimensionless activation level per muscle side:

    during a pulse   da/dt = (1 - a) / tau_act
    otherwise        da/dt = -a / tau_decay

Both regimes are integrated exactly (piecewise exponentials split at
pulse edges), so the step size only controls reporting resolution, not
accuracy. Amplitude and pulse width are validated and carried through
for protocol fidelity but do not grade the response; only frequency
does. Functions here are pure and thread-safe.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum
from typing import TextIO

# Protocol defaults for a single stimulation command.
DEFAULT_AMPLITUDE_MV = 3000.0
DEFAULT_PULSE_WIDTH_MS = 3.0
DEFAULT_DURATION_MS = 500.0

# Muscle activation time constants (ms). Chosen so activation is near
# steady well inside a 500 ms train and visibly recovers afterwards.
DEFAULT_TAU_ACT_MS = 10.0
DEFAULT_TAU_DECAY_MS = 40.0

# Frequency anchors of the calibrated graded-response range (Hz).
DRIVE_F_LO = 63.0
DRIVE_F_HI = 100.0


class StimulusError(ValueError):
    """Invalid stimulation command or parameter."""


class StimTarget(Enum):
    LEFT = 1
    RIGHT = 2
    BOTH = 3

    @property
    def sides(self) -> tuple[str, ...]:
        if self is StimTarget.BOTH:
            return ("left", "right")
        return (self.name.lower(),)


@dataclass(frozen=True)
class StimCommand:
    """One stimulation request.

    frequency_hz in [1, 1000], duration_ms in [0, 10000], amplitude_mv
    in [0, 5000], pulse_width_ms > 0, and duty cycle at most 100%.
    """

    target: StimTarget
    frequency_hz: float
    duration_ms: float = DEFAULT_DURATION_MS
    amplitude_mv: float = DEFAULT_AMPLITUDE_MV
    pulse_width_ms: float = DEFAULT_PULSE_WIDTH_MS

    def __post_init__(self) -> None:
        if not isinstance(self.target, StimTarget):
            raise StimulusError(f"unknown stimulation target: {self.target!r}")
        if not (1.0 <= self.frequency_hz <= 1000.0):
            raise StimulusError(
                f"frequency {self.frequency_hz} Hz outside [1, 1000]")
        if not (0.0 <= self.duration_ms <= 10000.0):
            raise StimulusError(
                f"duration {self.duration_ms} ms outside [0, 10000]")
        if not (0.0 <= self.amplitude_mv <= 5000.0):
            raise StimulusError(
                f"amplitude {self.amplitude_mv} mV outside [0, 5000]")
        if not self.pulse_width_ms > 0.0:
            raise StimulusError("pulse width must be positive")
        duty = self.pulse_width_ms * self.frequency_hz
        if duty > 1000.0 + 1e-9:
            raise StimulusError(
                f"pulses overlap: width*frequency = {duty:.1f} ms/s > 1000")


@dataclass(frozen=True)
class PulseTrain:
    """Realized onset schedule of one command, times in ms from train start."""

    onsets: tuple[float, ...]
    pulse_width_ms: float
    amplitude_mv: float
    frequency_hz: float = 0.0

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.onsets, self.onsets[1:])):
            raise StimulusError("pulse onsets must be strictly increasing")

    @property
    def end_ms(self) -> float:
        """End of the last pulse, or 0 for an empty train."""
        if not self.onsets:
            return 0.0
        return self.onsets[-1] + self.pulse_width_ms

    def active_at(self, t_ms: float) -> bool:
        """True when t_ms (relative to train start) falls inside a pulse."""
        i = bisect.bisect_right(self.onsets, t_ms) - 1
        if i < 0:
            return False
        return t_ms - self.onsets[i] < self.pulse_width_ms


def build_pulse_train(cmd: StimCommand) -> PulseTrain:
    """Onsets at k * 1000/f ms for every k with onset < duration."""
    spacing = 1000.0 / cmd.frequency_hz
    n = int(math.ceil(cmd.duration_ms / spacing - 1e-12))
    onsets = tuple(k * spacing for k in range(n))
    return PulseTrain(onsets, cmd.pulse_width_ms, cmd.amplitude_mv,
                      cmd.frequency_hz)


@dataclass(frozen=True)
class ActivationState:
    """Dimensionless activation level of one muscle, in [0, 1]."""

    level: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.level <= 1.0):
            raise StimulusError(f"activation level {self.level} outside [0, 1]")


def _rise(a: float, dt: float, tau: float) -> float:
    return 1.0 - (1.0 - a) * math.exp(-dt / tau)


def _fall(a: float, dt: float, tau: float) -> float:
    return a * math.exp(-dt / tau)


def activation_step(
    a: ActivationState,
    train: PulseTrain | None,
    t_ms: float,
    dt_ms: float,
    tau_act_ms: float = DEFAULT_TAU_ACT_MS,
    tau_decay_ms: float = DEFAULT_TAU_DECAY_MS,
) -> ActivationState:
    """Advance activation from t_ms to t_ms + dt_ms (train-relative time).

    Pulse edges inside the step are handled exactly, so a 1 ms step
    reproduces a fine-step ODE integration to machine precision.
    """
    if dt_ms > 1.0 + 1e-12:
        raise StimulusError("activation step requires dt <= 1 ms")
    if tau_act_ms <= 0.0 or tau_decay_ms <= 0.0:
        raise StimulusError("time constants must be positive")
    level = a.level
    if train is None or not train.onsets:
        return ActivationState(_fall(level, dt_ms, tau_decay_ms))

    t0, t1 = t_ms, t_ms + dt_ms
    # Segment boundaries: pulse starts/ends falling inside (t0, t1).
    edges = [t0]
    i = bisect.bisect_left(train.onsets, t0 - train.pulse_width_ms)
    while i < len(train.onsets) and train.onsets[i] < t1:
        for e in (train.onsets[i], train.onsets[i] + train.pulse_width_ms):
            if t0 < e < t1:
                edges.append(e)
        i += 1
    edges.append(t1)
    edges.sort()

    for s0, s1 in zip(edges, edges[1:]):
        if s1 - s0 <= 0.0:
            continue
        if train.active_at(0.5 * (s0 + s1)):
            level = _rise(level, s1 - s0, tau_act_ms)
        else:
            level = _fall(level, s1 - s0, tau_decay_ms)
    return ActivationState(min(1.0, max(0.0, level)))


def steady_mean_activation(
    frequency_hz: float,
    pulse_width_ms: float = DEFAULT_PULSE_WIDTH_MS,
    tau_act_ms: float = DEFAULT_TAU_ACT_MS,
    tau_decay_ms: float = DEFAULT_TAU_DECAY_MS,
) -> float:
    """Mean activation over one period of the periodic steady state.

    Used to normalize activation into a unit response weight. Closed
    form from the piecewise-exponential limit cycle.
    """
    if frequency_hz <= 0.0:
        raise StimulusError("frequency must be positive")
    period = 1000.0 / frequency_hz
    w = pulse_width_ms
    if w >= period:
        return 1.0
    gap = period - w
    ea = math.exp(-w / tau_act_ms)
    ed = math.exp(-gap / tau_decay_ms)
    a_hi = (1.0 - ea) / (1.0 - ea * ed)   # level at pulse end
    a_lo = a_hi * ed                      # level at pulse start
    pulse_area = w - (1.0 - a_lo) * tau_act_ms * (1.0 - ea)
    gap_area = a_hi * tau_decay_ms * (1.0 - ed)
    return (pulse_area + gap_area) / period


def normalized_drive(
    frequency_hz: float,
    f_lo: float = DRIVE_F_LO,
    f_hi: float = DRIVE_F_HI,
) -> float:
    """Map frequency to a [0, 1] drive level, linear between the anchors.

    Clamped outside [f_lo, f_hi]; frequencies outside the valid command
    range [1, 1000] Hz are rejected.
    """
    if not (1.0 <= frequency_hz <= 1000.0):
        raise StimulusError(
            f"frequency {frequency_hz} Hz outside [1, 1000]")
    if frequency_hz <= f_lo:
        return 0.0
    if frequency_hz >= f_hi:
        return 1.0
    return (frequency_hz - f_lo) / (f_hi - f_lo)


def activation_series(
    train: PulseTrain | None,
    t_end_ms: float,
    dt_ms: float = 1.0,
    tau_act_ms: float = DEFAULT_TAU_ACT_MS,
    tau_decay_ms: float = DEFAULT_TAU_DECAY_MS,
) -> list[float]:
    """Activation level sampled at k*dt_ms for k = 0 .. t_end/dt."""
    n = int(round(t_end_ms / dt_ms))
    a = ActivationState(0.0)
    out = [a.level]
    for k in range(n):
        a = activation_step(a, train, k * dt_ms, dt_ms, tau_act_ms,
                            tau_decay_ms)
        out.append(a.level)
    return out


def export_schedule(
    out: TextIO,
    left: PulseTrain | None,
    right: PulseTrain | None,
    t_end_ms: float,
    dt_ms: float = 1.0,
    tau_act_ms: float = DEFAULT_TAU_ACT_MS,
    tau_decay_ms: float = DEFAULT_TAU_DECAY_MS,
) -> None:
    """Write the stimulus schedule CSV: t_ms, left_level, right_level,
    pulse_active."""
    la = activation_series(left, t_end_ms, dt_ms, tau_act_ms, tau_decay_ms)
    ra = activation_series(right, t_end_ms, dt_ms, tau_act_ms, tau_decay_ms)
    out.write("t_ms,left_level,right_level,pulse_active\n")
    for k, (l, r) in enumerate(zip(la, ra)):
        t = k * dt_ms
        active = int((left is not None and left.active_at(t))
                     or (right is not None and right.active_at(t)))
        out.write(f"{t:.9g},{l:.9g},{r:.9g},{active}\n")
