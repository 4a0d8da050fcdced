"""Telemetry analysis chain: trial smoothing, filtering, acceleration
decomposition, induced-response extraction, and exclusion rules.

Mocap route: the flight path over the whole trial window is smoothed by
a single degree-5 least-squares polynomial per axis (time centered and
scaled to [-1, 1] for conditioning); velocity and acceleration are its
analytic derivatives. Accelerations decompose along the horizontal
flight direction: a_h forward, a_lat leftward-positive, a_v = z.
Trials whose path-heading angular rate exceeds 500 deg/s anywhere are
excluded (saccades).

IMU route: body-frame specific force is rotated to the world with the
sample's own orientation, gravity subtracted, decomposed along the
body-yaw heading, and low-pass filtered (5th-order Butterworth, 20 Hz
cutoff, bilinear transform with frequency pre-warping, run as two
biquads plus a first-order section). Body angles come straight from the
orientation quaternions.

The induced amount of a channel is the signed excursion at the sample
of largest |x(t) - x(onset)| within the first 300 ms of stimulation.

All operations are pure; trials can be processed in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .dose import InducedResponse
from .geometry import GRAVITY, UnitQuat, Vec3, body_to_world, quat_to_euler, \
    unwrap_deg
from .records import MocapSeries, TrialRecord

POLY_DEGREE = 5
MIN_FIT_SAMPLES = 12
SACCADE_LIMIT_DPS = 500.0
INDUCED_WINDOW_MS = 300.0
BUTTER_ORDER = 5
BUTTER_FC_HZ = 20.0
MIN_HORIZONTAL_SPEED = 0.05  # m/s


class PipelineError(ValueError):
    pass


class WindowError(PipelineError):
    """Series does not cover the required analysis window."""


class DirectionUndefinedError(PipelineError):
    """Horizontal speed too small to define the flight direction."""


class RankDeficientError(PipelineError):
    """Polynomial design matrix is rank-deficient."""


class TrialExcludedError(PipelineError):
    """Trial rejected by the saccade rule."""


@dataclass(frozen=True)
class PolyPath:
    """Degree-5 fit per axis over [t0, t1] ms on the scaled time
    s = (2t - t0 - t1)/(t1 - t0); derivatives are analytic."""

    coeffs: np.ndarray          # (3, POLY_DEGREE+1), ascending powers of s
    t0_ms: float
    t1_ms: float
    residual_rms: tuple[float, float, float]

    def _scale(self) -> float:
        return 2.0 / (self.t1_ms - self.t0_ms)

    def _s(self, t_ms):
        return (2.0 * np.asarray(t_ms, dtype=float) - self.t0_ms
                - self.t1_ms) / (self.t1_ms - self.t0_ms)

    def position(self, t_ms) -> np.ndarray:
        s = self._s(t_ms)
        return np.stack([np.polynomial.polynomial.polyval(s, c)
                         for c in self.coeffs], axis=-1)

    def velocity(self, t_ms) -> np.ndarray:
        """m/s (time is in ms; the 1000 factor converts)."""
        s = self._s(t_ms)
        k = self._scale() * 1000.0
        return np.stack([
            np.polynomial.polynomial.polyval(
                s, np.polynomial.polynomial.polyder(c)) * k
            for c in self.coeffs], axis=-1)

    def acceleration(self, t_ms) -> np.ndarray:
        """m/s^2."""
        s = self._s(t_ms)
        k = (self._scale() * 1000.0) ** 2
        return np.stack([
            np.polynomial.polynomial.polyval(
                s, np.polynomial.polynomial.polyder(c, 2)) * k
            for c in self.coeffs], axis=-1)


def fit_poly_path(mocap: MocapSeries, degree: int = POLY_DEGREE) -> PolyPath:
    """Least-squares degree-5 fit per axis of the mocap positions."""
    t = np.asarray(mocap.t_ms, dtype=float)
    pos = np.asarray(mocap.position, dtype=float)
    if len(t) < MIN_FIT_SAMPLES:
        raise PipelineError(
            f"need >= {MIN_FIT_SAMPLES} samples, got {len(t)}")
    t0, t1 = float(t[0]), float(t[-1])
    if t1 <= t0:
        raise PipelineError("degenerate time span")
    s = (2.0 * t - t0 - t1) / (t1 - t0)
    design = np.vander(s, degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, pos, rcond=None)
    if rank < degree + 1:
        raise RankDeficientError(
            "rank-deficient fit (duplicate timestamps?)")
    resid = pos - design @ coeffs
    rms = tuple(float(v) for v in np.sqrt(np.mean(resid ** 2, axis=0)))
    return PolyPath(coeffs=coeffs.T.copy(), t0_ms=t0, t1_ms=t1,
                    residual_rms=rms)


def decompose_accel(path: PolyPath, t_ms: float,
                    min_speed: float = MIN_HORIZONTAL_SPEED,
                    ) -> tuple[float, float, float]:
    """(a_h, a_lat, a_v) at one instant: a_h along the horizontal flight
    direction, a_lat 90 deg to its left, a_v vertical."""
    v = path.velocity(t_ms)
    a = path.acceleration(t_ms)
    return _decompose(v, a, min_speed)


def _decompose(v: np.ndarray, a: np.ndarray,
               min_speed: float) -> tuple[float, float, float]:
    speed_h = math.hypot(v[0], v[1])
    if speed_h < min_speed:
        raise DirectionUndefinedError(
            f"horizontal speed {speed_h:.3f} m/s below {min_speed}")
    hx, hy = v[0] / speed_h, v[1] / speed_h
    a_h = a[0] * hx + a[1] * hy
    a_lat = -a[0] * hy + a[1] * hx
    return float(a_h), float(a_lat), float(a[2])


def path_frame_accel_series(path: PolyPath, grid_ms: float = 1.0,
                            min_speed: float = MIN_HORIZONTAL_SPEED,
                            ) -> tuple[np.ndarray, np.ndarray]:
    """(t, [a_h, a_lat, a_v]) on a uniform grid across the fit window."""
    ts = np.arange(path.t0_ms, path.t1_ms + 1e-9, grid_ms)
    v = path.velocity(ts)
    a = path.acceleration(ts)
    out = np.empty((len(ts), 3))
    for i in range(len(ts)):
        out[i] = _decompose(v[i], a[i], min_speed)
    return ts, out


def induced_amount(t_ms: Sequence[float], values: Sequence[float],
                   onset_ms: float,
                   window_ms: float = INDUCED_WINDOW_MS) -> float:
    """Signed peak excursion from the onset value within the first
    window_ms of stimulation (window endpoints inclusive)."""
    t = np.asarray(t_ms, dtype=float)
    x = np.asarray(values, dtype=float)
    if t[0] > onset_ms + 1e-9 or t[-1] < onset_ms + window_ms - 1e-9:
        raise WindowError(
            f"series [{t[0]}, {t[-1]}] ms does not cover "
            f"[{onset_ms}, {onset_ms + window_ms}] ms")
    x0 = float(np.interp(onset_ms, t, x))
    mask = (t >= onset_ms - 1e-9) & (t <= onset_ms + window_ms + 1e-9)
    deltas = x[mask] - x0
    return float(deltas[np.argmax(np.abs(deltas))])


def heading_rate_series(path: PolyPath, grid_ms: float = 1.0,
                        min_speed: float = MIN_HORIZONTAL_SPEED,
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Angular rate of the horizontal flight direction, deg/s, on a
    uniform grid (near-hover samples are NaN)."""
    ts = np.arange(path.t0_ms, path.t1_ms + 1e-9, grid_ms)
    v = path.velocity(ts)
    a = path.acceleration(ts)
    sq = v[:, 0] ** 2 + v[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.degrees((v[:, 0] * a[:, 1] - v[:, 1] * a[:, 0]) / sq)
    omega[np.sqrt(sq) < min_speed] = np.nan
    return ts, omega


def saccade_excluded(path: PolyPath,
                     limit_dps: float = SACCADE_LIMIT_DPS) -> bool:
    """True when the smoothed path heading turns faster than the limit
    anywhere in the window (evaluated on a 1 ms grid)."""
    _, omega = heading_rate_series(path)
    finite = omega[np.isfinite(omega)]
    return bool(len(finite) and np.max(np.abs(finite)) > limit_dps)


# ---------------------------------------------------------------------------
# Butterworth low-pass (bilinear transform with frequency pre-warping)

def design_butterworth_sos(fc_hz: float, fs_hz: float,
                           order: int = BUTTER_ORDER) -> list[tuple]:
    """Cascaded sections [(b0,b1,b2),(1,a1,a2)] of the discretized
    Butterworth low-pass. Odd orders end with a first-order section."""
    if fc_hz <= 0.0 or fs_hz <= 0.0:
        raise PipelineError("frequencies must be positive")
    if fc_hz >= 0.5 * fs_hz:
        raise PipelineError(
            f"cutoff {fc_hz} Hz must be below Nyquist {0.5 * fs_hz} Hz")
    wc = 2.0 * fs_hz * math.tan(math.pi * fc_hz / fs_hz)  # pre-warped rad/s
    big_k = 2.0 * fs_hz
    sections = []
    for k in range(1, order // 2 + 1):
        theta = 0.5 * math.pi + (2 * k - 1) * math.pi / (2 * order)
        a1s = -2.0 * wc * math.cos(theta)   # = 2*zeta*w0 > 0
        a0s = wc * wc
        d0 = big_k * big_k + a1s * big_k + a0s
        b = (a0s / d0, 2.0 * a0s / d0, a0s / d0)
        a = (1.0, (2.0 * a0s - 2.0 * big_k * big_k) / d0,
             (big_k * big_k - a1s * big_k + a0s) / d0)
        sections.append((b, a))
    if order % 2 == 1:
        d0 = big_k + wc
        sections.append(((wc / d0, wc / d0, 0.0),
                         (1.0, (wc - big_k) / d0, 0.0)))
    return sections


def sos_filter(sections: Sequence[tuple], x: Sequence[float]) -> np.ndarray:
    """Causal single-pass cascade (direct form II transposed, zero
    initial state)."""
    y = np.asarray(x, dtype=float).copy()
    for (b0, b1, b2), (_, a1, a2) in sections:
        z1 = z2 = 0.0
        for i in range(len(y)):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return y


def sos_frequency_response(sections: Sequence[tuple], f_hz: float,
                           fs_hz: float) -> complex:
    z = complex(math.cos(2 * math.pi * f_hz / fs_hz),
                math.sin(2 * math.pi * f_hz / fs_hz))
    zi = 1.0 / z
    h = complex(1.0, 0.0)
    for (b0, b1, b2), (_, a1, a2) in sections:
        h *= (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)
    return h


def butterworth_lowpass(values: Sequence[float], fs_hz: float = 100.0,
                        fc_hz: float = BUTTER_FC_HZ,
                        order: int = BUTTER_ORDER,
                        zero_phase: bool = False) -> np.ndarray:
    """5th-order Butterworth low-pass; causal by default, forward-
    backward (zero-phase) on request."""
    sections = design_butterworth_sos(fc_hz, fs_hz, order)
    y = sos_filter(sections, values)
    if zero_phase:
        y = sos_filter(sections, y[::-1])[::-1]
    return y


# ---------------------------------------------------------------------------
# Induced-response extraction

def imu_world_accel(record: TrialRecord) -> np.ndarray:
    """Gravity-removed world acceleration from the IMU stream, using
    each sample's own orientation."""
    imu = record.imu
    out = np.empty((len(imu), 3))
    for i in range(len(imu)):
        q = UnitQuat(*imu.quat[i])
        f = Vec3(*imu.accel_body[i])
        w = body_to_world(q, f)
        out[i] = (w.x, w.y, w.z - GRAVITY)
    return out


def extract_induced(record: TrialRecord, source: str = "imu",
                    zero_phase: bool = False) -> InducedResponse:
    """Per-trial scalar response deltas.

    source 'imu': angles from the orientation quaternions, acceleration
    channels Butterworth-filtered and decomposed along the body-yaw
    heading. source 'mocap': quintic path fit, path-frame decomposition
    (angle channels are NaN); saccade trials raise TrialExcludedError.
    """
    onset = record.meta.stim_onset_ms
    if source == "imu":
        if record.imu is None:
            raise PipelineError("record has no IMU stream")
        imu = record.imu
        t = np.asarray(imu.t_ms, dtype=float)
        eulers = [quat_to_euler(UnitQuat(*q)) for q in imu.quat]
        yaw = unwrap_deg([e.yaw for e in eulers])
        pitch = [e.pitch for e in eulers]
        roll = unwrap_deg([e.roll for e in eulers])

        a_world = imu_world_accel(record)
        yaw_rad = np.radians(yaw)
        hx, hy = np.sin(yaw_rad), np.cos(yaw_rad)
        a_h = a_world[:, 0] * hx + a_world[:, 1] * hy
        a_lat = -a_world[:, 0] * hy + a_world[:, 1] * hx
        a_v = a_world[:, 2]
        fs = 1000.0 / float(t[1] - t[0])
        a_h = butterworth_lowpass(a_h, fs, zero_phase=zero_phase)
        a_lat = butterworth_lowpass(a_lat, fs, zero_phase=zero_phase)
        a_v = butterworth_lowpass(a_v, fs, zero_phase=zero_phase)
        return InducedResponse(
            d_pitch=induced_amount(t, pitch, onset),
            d_yaw=induced_amount(t, yaw, onset),
            d_roll=induced_amount(t, roll, onset),
            d_ah=induced_amount(t, a_h, onset),
            d_alat=induced_amount(t, a_lat, onset),
            d_av=induced_amount(t, a_v, onset),
        )

    if source == "mocap":
        if record.mocap is None:
            raise PipelineError("record has no mocap stream")
        path = fit_poly_path(record.mocap)
        if saccade_excluded(path):
            raise TrialExcludedError(
                "path heading rate above 500 deg/s")
        ts, acc = path_frame_accel_series(path)
        return InducedResponse(
            d_pitch=float("nan"), d_yaw=float("nan"), d_roll=float("nan"),
            d_ah=induced_amount(ts, acc[:, 0], onset),
            d_alat=induced_amount(ts, acc[:, 1], onset),
            d_av=induced_amount(ts, acc[:, 2], onset),
        )

    raise PipelineError(f"unknown extraction source {source!r}")


INDUCED_CSV_HEADER = ("beetle_id,trial_id,target,freq_hz,d_pitch,d_yaw,"
                      "d_roll,d_ah,d_alat,d_av,excluded")


def write_induced_csv(out: TextIO, rows: Sequence[dict]) -> None:
    """Induced-response table; one row per trial, excluded trials keep
    their metadata with empty channel values."""
    out.write(INDUCED_CSV_HEADER + "\n")
    for r in rows:
        target = r["target"].name if r["target"] else "NONE"
        vals = []
        for ch in ("d_pitch", "d_yaw", "d_roll", "d_ah", "d_alat", "d_av"):
            v = r.get(ch)
            vals.append("" if v is None or (isinstance(v, float)
                                            and math.isnan(v)) else repr(v))
        out.write(",".join([
            str(r["beetle_id"]), str(r["trial_id"]), target,
            repr(float(r["freq_hz"])), *vals, str(int(r["excluded"])),
        ]) + "\n")
