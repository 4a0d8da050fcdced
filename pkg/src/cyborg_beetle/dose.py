"""Frequency -> induced-response model with calibrated trial noise.

Maps a stimulation (target side, frequency) to stroke-averaged response
deltas: pitch/yaw/roll in degrees and horizontal/lateral/vertical
acceleration in m/s^2. Each channel interpolates linearly between two
measured anchors and clamps outside them. Angle channels anchor at
63 -> 100 Hz; acceleration channels anchor over the full 40 -> 100 Hz
sweep.

Sign conventions follow the geometry module: stimulating the LEFT
muscle yields positive (rightward, contralateral) yaw, positive
(right-wing-down, contralateral) roll and positive (leftward,
ipsilateral) lateral acceleration; the RIGHT muscle mirrors all three.
Horizontal deltas are braking (<= 0) and vertical deltas are lift
(>= 0) for every target and frequency.

Trial-to-trial variability is zero-mean Gaussian per channel with two
calibrated couplings (pitch <-> vertical positive, yaw <-> roll
negative) so that batch rank correlations land on the measured values.
The default sigmas/couplings below were produced by the bisection
calibrators in this module (scripts/calibrate_noise.py regenerates
them).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .stats import spearman
from .stimulus import StimTarget

CHANNELS = ("d_pitch", "d_yaw", "d_roll", "d_ah", "d_alat", "d_av")
ANGLE_F_LO, ANGLE_F_HI = 63.0, 100.0
ACCEL_F_LO, ACCEL_F_HI = 40.0, 100.0

# Channels whose sign flips between left and right stimulation.
MIRRORED_CHANNELS = ("d_yaw", "d_roll", "d_alat")


class DoseError(ValueError):
    """Invalid dose-response input or unattainable calibration target."""


@dataclass(frozen=True)
class InducedResponse:
    """Per-trial response deltas: angles in degrees, accelerations in
    m/s^2. d_ah < 0 means braking, d_av > 0 means upward, d_alat > 0
    means leftward."""

    d_pitch: float = 0.0
    d_yaw: float = 0.0
    d_roll: float = 0.0
    d_ah: float = 0.0
    d_alat: float = 0.0
    d_av: float = 0.0

    def as_tuple(self) -> tuple[float, ...]:
        return (self.d_pitch, self.d_yaw, self.d_roll, self.d_ah,
                self.d_alat, self.d_av)

    def __getitem__(self, channel: str) -> float:
        if channel not in CHANNELS:
            raise KeyError(channel)
        return getattr(self, channel)

    def mirrored(self) -> "InducedResponse":
        """Left/right mirror: yaw, roll and lateral negated."""
        return InducedResponse(self.d_pitch, -self.d_yaw, -self.d_roll,
                               self.d_ah, -self.d_alat, self.d_av)


ZERO_RESPONSE = InducedResponse()


class Anchor(NamedTuple):
    f_lo: float
    v_lo: float
    f_hi: float
    v_hi: float

    def value_at(self, frequency: float) -> float:
        if frequency <= self.f_lo:
            return self.v_lo
        if frequency >= self.f_hi:
            return self.v_hi
        u = (frequency - self.f_lo) / (self.f_hi - self.f_lo)
        return self.v_lo + u * (self.v_hi - self.v_lo)


@dataclass(frozen=True)
class DoseAnchorTable:
    """Anchor pairs per target and channel. The right-muscle table is
    the exact mirror of the left (yaw/roll/lateral negated)."""

    left: Mapping[str, Anchor]
    both: Mapping[str, Anchor]

    def __post_init__(self) -> None:
        for name, tab in (("left", self.left), ("both", self.both)):
            missing = set(CHANNELS) - set(tab)
            if missing:
                raise DoseError(f"{name} table missing channels: {missing}")
            for ch, a in tab.items():
                if not a.f_lo < a.f_hi:
                    raise DoseError(
                        f"{name}.{ch}: need f_lo < f_hi, got {a}")

    def anchors_for(self, target: StimTarget) -> Mapping[str, Anchor]:
        if target is StimTarget.BOTH:
            return self.both
        if target is StimTarget.LEFT:
            return self.left
        if target is StimTarget.RIGHT:
            return {
                ch: (Anchor(a.f_lo, -a.v_lo, a.f_hi, -a.v_hi)
                     if ch in MIRRORED_CHANNELS else a)
                for ch, a in self.left.items()
            }
        raise DoseError(f"unknown stimulation target: {target!r}")

    def to_json(self) -> str:
        doc = {}
        for name in ("left", "right", "both"):
            target = StimTarget[name.upper()]
            doc[name] = {
                ch: {"f_lo": a.f_lo, "v_lo": a.v_lo,
                     "f_hi": a.f_hi, "v_hi": a.v_hi}
                for ch, a in self.anchors_for(target).items()
            }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DoseAnchorTable":
        doc = json.loads(text)

        def parse(name: str) -> dict[str, Anchor]:
            try:
                block = doc[name]
            except KeyError as e:
                raise DoseError(f"anchor table missing target {name!r}") from e
            return {ch: Anchor(v["f_lo"], v["v_lo"], v["f_hi"], v["v_hi"])
                    for ch, v in block.items()}

        table = cls(left=parse("left"), both=parse("both"))
        if "right" in doc:
            right = parse("right")
            derived = table.anchors_for(StimTarget.RIGHT)
            for ch in CHANNELS:
                if ch in right and not _anchor_close(right[ch], derived[ch]):
                    raise DoseError(
                        f"right.{ch} breaks left/right mirror symmetry")
        return table


def _anchor_close(a: Anchor, b: Anchor) -> bool:
    return all(math.isclose(x, y, rel_tol=1e-9, abs_tol=1e-12)
               for x, y in zip(a, b))


def default_table() -> DoseAnchorTable:
    """Anchor values measured on the real robot: single-muscle pitch
    5 -> 22 deg, contralateral yaw 2 -> 17 deg and roll 5 -> 10 deg over
    63 -> 100 Hz; both-muscle pitch 10 -> 22 deg; braking
    -0.7 -> -1.4 m/s^2 and lift +1.0 -> +1.6 m/s^2 (both muscles) over
    the 40 -> 100 Hz sweep; ipsilateral sideslip 0.5 -> 1.0 m/s^2.
    Single-muscle braking/lift show no frequency trend and sit at flat
    -0.5 / +0.5 m/s^2."""
    left = {
        "d_pitch": Anchor(ANGLE_F_LO, 5.0, ANGLE_F_HI, 22.0),
        "d_yaw": Anchor(ANGLE_F_LO, 2.0, ANGLE_F_HI, 17.0),
        "d_roll": Anchor(ANGLE_F_LO, 5.0, ANGLE_F_HI, 10.0),
        "d_ah": Anchor(ACCEL_F_LO, -0.5, ACCEL_F_HI, -0.5),
        "d_alat": Anchor(ACCEL_F_LO, 0.5, ACCEL_F_HI, 1.0),
        "d_av": Anchor(ACCEL_F_LO, 0.5, ACCEL_F_HI, 0.5),
    }
    both = {
        "d_pitch": Anchor(ANGLE_F_LO, 10.0, ANGLE_F_HI, 22.0),
        "d_yaw": Anchor(ANGLE_F_LO, 0.0, ANGLE_F_HI, 0.0),
        "d_roll": Anchor(ANGLE_F_LO, 0.0, ANGLE_F_HI, 0.0),
        "d_ah": Anchor(ACCEL_F_LO, -0.7, ACCEL_F_HI, -1.4),
        "d_alat": Anchor(ACCEL_F_LO, 0.0, ACCEL_F_HI, 0.0),
        "d_av": Anchor(ACCEL_F_LO, 1.0, ACCEL_F_HI, 1.6),
    }
    return DoseAnchorTable(left=left, both=both)


def steady_response(target: StimTarget, frequency_hz: float,
                    table: DoseAnchorTable) -> InducedResponse:
    """Noise-free response deltas for one stimulation condition.

    frequency_hz == 0 is the no-stimulation case and returns the zero
    response. Outside the anchors the value clamps.
    """
    if frequency_hz == 0.0:
        return ZERO_RESPONSE
    if frequency_hz < 0.0 or not math.isfinite(frequency_hz):
        raise DoseError(f"invalid stimulation frequency {frequency_hz}")
    anchors = table.anchors_for(target)
    return InducedResponse(
        **{ch: anchors[ch].value_at(frequency_hz) for ch in CHANNELS})


@dataclass(frozen=True)
class DoseNoise:
    """Trial-to-trial variability: per-channel sigma plus the two
    calibrated noise couplings."""

    sigma: tuple[float, float, float, float, float, float]
    rho_pitch_av: float = 0.0
    rho_yaw_roll: float = 0.0

    def __post_init__(self) -> None:
        if len(self.sigma) != len(CHANNELS):
            raise DoseError("sigma needs one entry per channel")
        if any(s < 0.0 for s in self.sigma):
            raise DoseError("sigma must be non-negative")
        for r in (self.rho_pitch_av, self.rho_yaw_roll):
            if not -1.0 < r < 1.0:
                raise DoseError("noise couplings must be in (-1, 1)")

    def correlation(self) -> np.ndarray:
        c = np.eye(len(CHANNELS))
        ip, iv = CHANNELS.index("d_pitch"), CHANNELS.index("d_av")
        iy, ir = CHANNELS.index("d_yaw"), CHANNELS.index("d_roll")
        c[ip, iv] = c[iv, ip] = self.rho_pitch_av
        c[iy, ir] = c[ir, iy] = self.rho_yaw_roll
        return c

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(len(CHANNELS))
        chol = np.linalg.cholesky(self.correlation())
        return np.asarray(self.sigma) * (chol @ z)


NO_NOISE = DoseNoise(sigma=(0.0,) * 6)

# Calibrated against the measured batch rank correlations
# (f->pitch 0.23 pooled, f->yaw 0.26 and f->roll 0.19 single-muscle,
# f->braking -0.10 both-muscle, yaw<->roll -0.41, pitch<->lift +0.49).
# Regenerate with scripts/calibrate_noise.py.
DEFAULT_NOISE = DoseNoise(
    sigma=(18.6243, 15.8429, 7.6558, 1.1685, 0.6, 0.6),
    rho_pitch_av=0.5974,
    rho_yaw_roll=-0.5014,
)


def noisy_response(target: StimTarget, frequency_hz: float,
                   table: DoseAnchorTable, noise: DoseNoise,
                   rng_seed) -> InducedResponse:
    """steady_response plus one correlated Gaussian draw; deterministic
    for a given seed (seed may be an int or a numpy Generator)."""
    base = steady_response(target, frequency_hz, table)
    if all(s == 0.0 for s in noise.sigma):
        return base
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    eps = noise.draw(rng)
    vals = np.asarray(base.as_tuple()) + eps
    return InducedResponse(*map(float, vals))


def contralateral_value(target: StimTarget, channel: str,
                        value: float) -> float:
    """Express a mirrored channel in the contralateral-positive frame
    (right-muscle trials are negated)."""
    if target is StimTarget.RIGHT and channel in MIRRORED_CHANNELS:
        return -value
    return value


def simulate_response_batch(
    table: DoseAnchorTable,
    noise: DoseNoise,
    targets: Sequence[StimTarget],
    n_per_target: int,
    seed: int,
    f_lo: float = ANGLE_F_LO,
    f_hi: float = ANGLE_F_HI,
) -> list[tuple[StimTarget, float, InducedResponse]]:
    """Model-level batch draw used by the calibrators: frequencies
    uniform on [f_lo, f_hi], one noisy response per trial."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(noise.correlation())
    sig = np.asarray(noise.sigma)
    out = []
    for target in targets:
        fs = rng.uniform(f_lo, f_hi, n_per_target)
        eps = (rng.standard_normal((n_per_target, len(CHANNELS)))
               @ chol.T) * sig
        for f, e in zip(fs, eps):
            base = steady_response(target, float(f), table)
            vals = np.asarray(base.as_tuple()) + e
            out.append((target, float(f), InducedResponse(*map(float, vals))))
    return out


def batch_spearman(
    batch: Iterable[tuple[StimTarget, float, InducedResponse]],
    x_channel: str,
    y_channel: str,
    targets: Sequence[StimTarget],
) -> float:
    """Spearman rho between two per-trial quantities over a target
    subset. Channel name 'freq' selects the stimulation frequency;
    mirrored channels are put in the contralateral-positive frame."""
    xs, ys = [], []
    for target, f, resp in batch:
        if target not in targets:
            continue
        for vals, ch in ((xs, x_channel), (ys, y_channel)):
            if ch == "freq":
                vals.append(f)
            else:
                vals.append(contralateral_value(target, ch, resp[ch]))
    return spearman(xs, ys).rho


# Batch definition of each calibration statistic: (x, y, target subset).
SINGLE = (StimTarget.LEFT, StimTarget.RIGHT)
ALL_TARGETS = (StimTarget.LEFT, StimTarget.RIGHT, StimTarget.BOTH)
CALIBRATION_STATS: dict[str, tuple[str, str, tuple[StimTarget, ...]]] = {
    "freq_pitch": ("freq", "d_pitch", ALL_TARGETS),
    "freq_yaw": ("freq", "d_yaw", SINGLE),
    "freq_roll": ("freq", "d_roll", SINGLE),
    "freq_ah_both": ("freq", "d_ah", (StimTarget.BOTH,)),
    "yaw_roll": ("d_yaw", "d_roll", SINGLE),
    "pitch_av": ("d_pitch", "d_av", ALL_TARGETS),
}

# Measured values the calibration targets.
CALIBRATION_TARGETS = {
    "freq_pitch": 0.23,
    "freq_yaw": 0.26,
    "freq_roll": 0.19,
    "freq_ah_both": -0.10,
    "yaw_roll": -0.41,
    "pitch_av": 0.49,
}


def _mean_rho(stat: str, noise: DoseNoise, table: DoseAnchorTable,
              n_trials: int, n_seeds: int) -> float:
    x_ch, y_ch, targets = CALIBRATION_STATS[stat]
    rhos = []
    for s in range(n_seeds):
        batch = simulate_response_batch(table, noise, targets,
                                        n_trials, seed=1000 + s)
        rhos.append(batch_spearman(batch, x_ch, y_ch, targets))
    return float(np.mean(rhos))


def calibrate_noise(stat: str, target_rho: float, table: DoseAnchorTable,
                    n_trials: int = 500, n_seeds: int = 20,
                    base: DoseNoise | None = None) -> float:
    """Find the channel sigma that lands a batch Spearman statistic on
    target_rho (Monte-Carlo bisection; rho is monotone decreasing in
    sigma). Returns the calibrated sigma for the stat's y channel.

    Raises DoseError when the target exceeds the noise-free rho."""
    if not -1.0 < target_rho < 1.0:
        raise DoseError("target rho must be inside (-1, 1)")
    base = base or NO_NOISE
    _, y_ch, _ = CALIBRATION_STATS[stat]
    idx = CHANNELS.index(y_ch)

    def with_sigma(s: float) -> DoseNoise:
        sig = list(base.sigma)
        sig[idx] = s
        return replace(base, sigma=tuple(sig))

    rho0 = _mean_rho(stat, with_sigma(0.0), table, n_trials, n_seeds)
    if target_rho * rho0 < 0.0 or abs(target_rho) > abs(rho0):
        raise DoseError(
            f"target rho {target_rho} unattainable (noise-free rho "
            f"{rho0:.3f})")
    if abs(target_rho) == abs(rho0):
        return 0.0

    lo, hi = 0.0, 1.0
    while abs(_mean_rho(stat, with_sigma(hi), table, n_trials,
                        n_seeds)) > abs(target_rho):
        hi *= 2.0
        if hi > 1e4:
            raise DoseError("sigma bisection bracket failed")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if abs(_mean_rho(stat, with_sigma(mid), table, n_trials,
                         n_seeds)) > abs(target_rho):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_coupling(stat: str, target_rho: float,
                       table: DoseAnchorTable, noise: DoseNoise,
                       n_trials: int = 500, n_seeds: int = 20) -> float:
    """Find the noise coupling (pitch<->vertical or yaw<->roll) that
    lands the cross-channel batch Spearman on target_rho."""
    if stat == "pitch_av":
        param = "rho_pitch_av"
    elif stat == "yaw_roll":
        param = "rho_yaw_roll"
    else:
        raise DoseError(f"no coupling parameter for stat {stat!r}")

    def with_rho(r: float) -> DoseNoise:
        return replace(noise, **{param: r})

    lo, hi = -0.999, 0.999
    rho_lo = _mean_rho(stat, with_rho(lo), table, n_trials, n_seeds)
    rho_hi = _mean_rho(stat, with_rho(hi), table, n_trials, n_seeds)
    if not rho_lo <= target_rho <= rho_hi:
        raise DoseError(
            f"target rho {target_rho} outside attainable "
            f"[{rho_lo:.3f}, {rho_hi:.3f}]")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if _mean_rho(stat, with_rho(mid), table, n_trials,
                     n_seeds) < target_rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
