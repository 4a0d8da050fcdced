"""IMU and motion-capture emulation from ground-truth state.

The IMU reports body-frame specific force (gravity reaction included,
like the real part), body rates, and the fused orientation quaternion
at a fixed 100 Hz grid. Sensor fusion itself is not modeled: the
hardware does it on-chip, so the emulated orientation is truth plus a
small random rotation. Accelerometer/gyro noise is AR(1) with
coefficient 0.5 at 100 Hz; mocap noise is iid Gaussian.

Streams are deterministic given the NoiseConfig seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import GRAVITY, UnitQuat, Vec3, quat_multiply, world_to_body
from .records import ImuSeries, MocapSeries, TruthSeries

IMU_RATE_HZ = 100.0
DEFAULT_MOCAP_RATE_HZ = 200.0


class SensorError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor noise levels. Defaults keep the single-trial extraction
    error well below the induced-response effect sizes."""

    accel_sigma: float = 0.2          # m/s^2 per axis
    gyro_sigma: float = 0.5           # deg/s per axis
    orientation_sigma_deg: float = 1.0
    mocap_sigma_m: float = 0.001
    ar1_coeff: float = 0.5            # at 100 Hz
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("accel_sigma", "gyro_sigma", "orientation_sigma_deg",
                     "mocap_sigma_m"):
            if getattr(self, name) < 0.0:
                raise SensorError(f"{name} must be non-negative")
        if not 0.0 <= self.ar1_coeff < 1.0:
            raise SensorError("AR(1) coefficient must be in [0, 1)")

    def silenced(self) -> "NoiseConfig":
        return replace(self, accel_sigma=0.0, gyro_sigma=0.0,
                       orientation_sigma_deg=0.0, mocap_sigma_m=0.0)


ZERO_NOISE = NoiseConfig(accel_sigma=0.0, gyro_sigma=0.0,
                         orientation_sigma_deg=0.0, mocap_sigma_m=0.0)


def _ar1_noise(rng: np.random.Generator, shape: tuple[int, int],
               sigma: float, coeff: float) -> np.ndarray:
    """Stationary AR(1) noise with marginal standard deviation sigma."""
    if sigma == 0.0:
        return np.zeros(shape)
    n, ch = shape
    out = np.empty(shape)
    out[0] = rng.normal(0.0, sigma, ch)
    drive = sigma * math.sqrt(1.0 - coeff * coeff)
    for i in range(1, n):
        out[i] = coeff * out[i - 1] + rng.normal(0.0, drive, ch)
    return out


def _small_rotation(rng: np.random.Generator, sigma_deg: float) -> UnitQuat:
    """Random rotation of magnitude ~sigma_deg about a uniform axis."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.normal(0.0, sigma_deg))
    h = 0.5 * angle
    s = math.sin(h)
    return UnitQuat(math.cos(h), s * axis[0], s * axis[1], s * axis[2])


def sample_imu(truth: TruthSeries, noise: NoiseConfig,
               rate_hz: float = IMU_RATE_HZ) -> ImuSeries:
    """Decimate the 1 kHz truth to the IMU grid and add sensor noise."""
    truth_rate = truth.rate_hz
    if rate_hz > truth_rate + 1e-9:
        raise SensorError(
            f"IMU rate {rate_hz} Hz above truth rate {truth_rate} Hz")
    step = int(round(truth_rate / rate_hz))
    idx = np.arange(0, len(truth), step)
    rng = np.random.default_rng(noise.seed)

    n = len(idx)
    accel = np.empty((n, 3))
    gyro = np.empty((n, 3))
    quats = np.empty((n, 4))
    accel_noise = _ar1_noise(rng, (n, 3), noise.accel_sigma,
                             noise.ar1_coeff)
    gyro_noise = _ar1_noise(rng, (n, 3), noise.gyro_sigma, noise.ar1_coeff)
    for k, i in enumerate(idx):
        q = UnitQuat(*truth.quat[i])
        a = truth.accel_world[i]
        specific = Vec3(a[0], a[1], a[2] + GRAVITY)
        f_body = world_to_body(q, specific)
        accel[k] = (f_body.x, f_body.y, f_body.z)
        gyro[k] = truth.body_rates[i]
        if noise.orientation_sigma_deg > 0.0:
            q = quat_multiply(q, _small_rotation(
                rng, noise.orientation_sigma_deg))
        quats[k] = q
    accel += accel_noise
    gyro += gyro_noise
    return ImuSeries(t_ms=truth.t_ms[idx].astype(float), accel_body=accel,
                     gyro=gyro, quat=quats)


def sample_mocap(truth: TruthSeries, noise: NoiseConfig,
                 rate_hz: float = DEFAULT_MOCAP_RATE_HZ) -> MocapSeries:
    """Decimated world positions plus iid Gaussian noise."""
    truth_rate = truth.rate_hz
    if rate_hz > truth_rate + 1e-9:
        raise SensorError(
            f"mocap rate {rate_hz} Hz above truth rate {truth_rate} Hz")
    step = int(round(truth_rate / rate_hz))
    idx = np.arange(0, len(truth), step)
    # dedicated stream so IMU and mocap noise never interleave
    rng = np.random.default_rng((noise.seed, 0x6D6F6361))
    pos = truth.position[idx].astype(float).copy()
    if noise.mocap_sigma_m > 0.0:
        pos += rng.normal(0.0, noise.mocap_sigma_m, pos.shape)
    return MocapSeries(t_ms=truth.t_ms[idx].astype(float), position=pos)
