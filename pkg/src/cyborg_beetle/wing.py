"""Wing Euler-angle math: marker reconstruction, wingbeat-cycle
normalization, and baseline/stimulated trace synthesis.

The stroke-plane frame (X', Y', Z') is derived from the body axis
tilted 60 deg, with Z' normal to the mean stroke plane. Wing pose
angles, all in degrees:

    phi    elevation - sweep of the leading edge within the stroke
           plane, about Z', zero along X'
    theta  deviation - out-of-plane angle of the leading edge,
           asin(l . Z'), in [-90, 90]
    alpha  rotation - signed angle of the wing chord out of the plane
           spanned by the leading edge and Y'; positive alpha depresses
           the trailing edge (raises the angle of attack)

Markers m1, m2 lie on the leading edge (root -> tip); m3 sits off-edge
toward the trailing edge and fixes the chord plane.

Cycle normalization cuts the angle series at successive maxima of phi
(dorsal stroke reversal) and resamples every cycle onto a 360-point
phase grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, TextIO

import numpy as np

from .geometry import Vec3

PHASE_GRID_POINTS = 360


class WingGeometryError(ValueError):
    """Degenerate marker geometry (collinear markers, singular pose)."""


class InsufficientCyclesError(ValueError):
    """Fewer than two stroke reversals found in the series."""


class WingPose(NamedTuple):
    phi: float
    theta: float
    alpha: float


@dataclass(frozen=True)
class StrokeFrame:
    """Orthonormal right-handed stroke-plane frame in world coordinates."""

    origin: Vec3
    x_axis: Vec3
    y_axis: Vec3
    z_axis: Vec3

    def __post_init__(self) -> None:
        axes = (self.x_axis, self.y_axis, self.z_axis)
        for a in axes:
            if abs(a.norm() - 1.0) > 1e-9:
                raise WingGeometryError("stroke frame axes must be unit")
        if (abs(self.x_axis.dot(self.y_axis)) > 1e-9
                or abs(self.x_axis.dot(self.z_axis)) > 1e-9
                or abs(self.y_axis.dot(self.z_axis)) > 1e-9):
            raise WingGeometryError("stroke frame axes must be orthogonal")
        h = self.x_axis.cross(self.y_axis)
        if (h - self.z_axis).norm() > 1e-9:
            raise WingGeometryError("stroke frame must be right-handed")

    @classmethod
    def identity(cls) -> "StrokeFrame":
        return cls(Vec3(0.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0),
                   Vec3(0.0, 1.0, 0.0), Vec3(0.0, 0.0, 1.0))

    @classmethod
    def from_body_axis(cls, body_axis: Vec3, origin: Vec3,
                       tilt_deg: float = 60.0) -> "StrokeFrame":
        """Stroke frame for a beetle whose forward body axis is given in
        world coordinates: X' is the body axis pitched down by tilt_deg
        about the lateral axis, Y' is lateral (left), Z' completes."""
        b = body_axis.normalized()
        up = Vec3(0.0, 0.0, 1.0)
        lat = up.cross(b)
        if lat.norm() < 1e-9:
            raise WingGeometryError("body axis parallel to world vertical")
        lat = lat.normalized()
        t = math.radians(tilt_deg)
        # rotate b about lat by -tilt (Rodrigues; lat is unit)
        xp = b.scaled(math.cos(-t)) + lat.cross(b).scaled(math.sin(-t))
        xp = xp + lat.scaled(lat.dot(b) * (1.0 - math.cos(-t)))
        xp = xp.normalized()
        zp = xp.cross(lat)
        return cls(origin, xp, lat, zp.normalized())

    def to_frame(self, p: Vec3) -> Vec3:
        d = p - self.origin
        return Vec3(d.dot(self.x_axis), d.dot(self.y_axis),
                    d.dot(self.z_axis))

    def to_world(self, v: Vec3) -> Vec3:
        return (self.x_axis.scaled(v.x) + self.y_axis.scaled(v.y)
                + self.z_axis.scaled(v.z))


def _rotate_about(v: Vec3, axis: Vec3, angle_rad: float) -> Vec3:
    """Rodrigues rotation of v about a unit axis."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return (v.scaled(c) + axis.cross(v).scaled(s)
            + axis.scaled(axis.dot(v) * (1.0 - c)))


def _chord_reference(l: Vec3) -> Vec3:
    """Unit vector perpendicular to the leading edge, inside the plane
    spanned by the leading edge and Y'."""
    yp = Vec3(0.0, 1.0, 0.0)
    c = yp - l.scaled(l.dot(yp))
    if c.norm() < 1e-9:
        raise WingGeometryError(
            "leading edge parallel to Y': wing rotation angle undefined")
    return c.normalized()


def wing_pose_from_markers(m1: Vec3, m2: Vec3, m3: Vec3,
                           frame: StrokeFrame) -> WingPose:
    """Reconstruct (phi, theta, alpha) from the three wing markers.

    m1, m2 span the leading edge; m3 defines the chord plane. Raises
    WingGeometryError for collinear markers.
    """
    p1 = frame.to_frame(m1)
    p2 = frame.to_frame(m2)
    p3 = frame.to_frame(m3)
    edge = p2 - p1
    off = p3 - p1
    en = edge.norm()
    on = off.norm()
    if en < 1e-12 or on < 1e-12 or \
            edge.cross(off).norm() < 1e-9 * en * on:
        raise WingGeometryError("markers are collinear")
    l = edge.scaled(1.0 / en)
    theta = math.degrees(math.asin(max(-1.0, min(1.0, l.z))))
    phi = math.degrees(math.atan2(l.y, l.x))
    chord = off - l.scaled(off.dot(l))
    c = chord.normalized()
    c_ref = _chord_reference(l)
    alpha = math.degrees(math.atan2(c.cross(c_ref).dot(l), c.dot(c_ref)))
    return WingPose(phi, theta, alpha)


def markers_from_pose(pose: WingPose, frame: StrokeFrame,
                      span: float = 1.0, chord: float = 0.3,
                      ) -> tuple[Vec3, Vec3, Vec3]:
    """Forward construction: marker triple realizing a wing pose.

    Inverse of wing_pose_from_markers (up to marker spacing)."""
    phi = math.radians(pose.phi)
    theta = math.radians(pose.theta)
    ct = math.cos(theta)
    l = Vec3(ct * math.cos(phi), ct * math.sin(phi), math.sin(theta))
    c = _rotate_about(_chord_reference(l), l, -math.radians(pose.alpha))
    m1 = frame.origin
    m2 = frame.origin + frame.to_world(l.scaled(span))
    m3 = (frame.origin + frame.to_world(l.scaled(0.5 * span))
          + frame.to_world(c.scaled(chord)))
    return m1, m2, m3


@dataclass(frozen=True)
class CycleTrace:
    """One wingbeat cycle on the uniform 0..360 deg phase grid."""

    phase_deg: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    period_ms: float = float("nan")

    def __post_init__(self) -> None:
        n = len(self.phase_deg)
        if any(len(a) != n for a in (self.phi, self.theta, self.alpha)):
            raise ValueError("trace channels must share the phase grid")


def phase_grid(n: int = PHASE_GRID_POINTS) -> np.ndarray:
    return np.arange(n) * (360.0 / n)


def _refined_maxima(t: np.ndarray, y: np.ndarray) -> list[float]:
    """Strict local maxima with sub-sample parabolic refinement."""
    peaks = []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1] and y[i] > y[i - 1]:
            denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
            delta = 0.0
            if denom < -1e-300:
                delta = 0.5 * (y[i - 1] - y[i + 1]) / denom
                delta = max(-0.5, min(0.5, delta))
            dt = t[i + 1] - t[i] if delta >= 0.0 else t[i] - t[i - 1]
            peaks.append(float(t[i] + delta * dt))
    return peaks


def normalize_cycles(pose_series: Sequence[WingPose],
                     timestamps_ms: Sequence[float],
                     grid_points: int = PHASE_GRID_POINTS,
                     ) -> list[CycleTrace]:
    """Cut the series at successive elevation maxima and resample each
    cycle onto a uniform phase grid by linear interpolation."""
    if len(pose_series) != len(timestamps_ms):
        raise ValueError("pose series and timestamps must align")
    t = np.asarray(timestamps_ms, dtype=float)
    phi = np.array([p.phi for p in pose_series])
    theta = np.array([p.theta for p in pose_series])
    alpha = np.array([p.alpha for p in pose_series])
    peaks = _refined_maxima(t, phi)
    if len(peaks) < 2:
        raise InsufficientCyclesError(
            f"need >= 2 elevation maxima, found {len(peaks)}")
    grid = phase_grid(grid_points)
    traces = []
    for t0, t1 in zip(peaks, peaks[1:]):
        ts = t0 + (grid / 360.0) * (t1 - t0)
        traces.append(CycleTrace(
            phase_deg=grid,
            phi=np.interp(ts, t, phi),
            theta=np.interp(ts, t, theta),
            alpha=np.interp(ts, t, alpha),
            period_ms=float(t1 - t0),
        ))
    return traces


def average_trace(traces: Sequence[CycleTrace]) -> CycleTrace:
    if not traces:
        raise InsufficientCyclesError("no cycles to average")
    return CycleTrace(
        phase_deg=traces[0].phase_deg,
        phi=np.mean([tr.phi for tr in traces], axis=0),
        theta=np.mean([tr.theta for tr in traces], axis=0),
        alpha=np.mean([tr.alpha for tr in traces], axis=0),
        period_ms=float(np.mean([tr.period_ms for tr in traces])),
    )


@dataclass(frozen=True)
class TraceParams:
    """Baseline templates and stimulation modulation of the synthesized
    wingbeat. Defaults reproduce the measured modulation: +10 deg wing
    rotation over phases 80-180 and 220-300, -10 deg elevation over
    80-180, deviation unchanged."""

    phi_amplitude: float = 60.0
    theta_amplitude: float = 5.0
    alpha_amplitude: float = 45.0
    alpha_transition_deg: float = 30.0
    rotation_windows: tuple[tuple[float, float], ...] = ((80.0, 180.0),
                                                         (220.0, 300.0))
    rotation_boost: float = 10.0
    elevation_window: tuple[float, float] = (80.0, 180.0)
    elevation_shift: float = -10.0
    taper_deg: float = 10.0


def _window_weight(phase: np.ndarray, lo: float, hi: float,
                   taper: float) -> np.ndarray:
    """1 inside [lo, hi], raised-cosine shoulders of width `taper`
    outside the window, 0 elsewhere."""
    w = np.zeros_like(phase)
    w[(phase >= lo) & (phase <= hi)] = 1.0
    rise = (phase >= lo - taper) & (phase < lo)
    w[rise] = 0.5 * (1.0 + np.cos(np.pi * (lo - phase[rise]) / taper))
    fall = (phase > hi) & (phase <= hi + taper)
    w[fall] = 0.5 * (1.0 + np.cos(np.pi * (phase[fall] - hi) / taper))
    return w


def _half_stroke_profile(phase: np.ndarray, amplitude: float,
                         transition: float) -> np.ndarray:
    """+amplitude over the downstroke half, -amplitude over the
    upstroke, smooth raised-cosine flips centered at 0 and 180 deg."""
    out = np.empty_like(phase)
    half = 0.5 * transition
    for i, ph in enumerate(phase):
        p = ph % 360.0
        if p < half:  # finishing the flip up at stroke start
            out[i] = amplitude * math.sin(math.pi * p / transition)
        elif p < 180.0 - half:
            out[i] = amplitude
        elif p < 180.0 + half:
            out[i] = amplitude * math.sin(
                math.pi * (180.0 - p) / transition)
        elif p < 360.0 - half:
            out[i] = -amplitude
        else:
            out[i] = -amplitude * math.sin(math.pi * (360.0 - p)
                                           / transition)
    return out


def synthesize_trace(condition: str,
                     params: TraceParams = TraceParams(),
                     grid_points: int = PHASE_GRID_POINTS) -> CycleTrace:
    """Synthetic single-cycle wing trace, condition 'baseline' or
    'stimulated'."""
    if condition not in ("baseline", "stimulated"):
        raise ValueError(f"unknown condition {condition!r}")
    ph = phase_grid(grid_points)
    rad = np.radians(ph)
    phi = params.phi_amplitude * np.cos(rad)
    theta = params.theta_amplitude * np.sin(2.0 * rad)
    alpha = _half_stroke_profile(ph, params.alpha_amplitude,
                                 params.alpha_transition_deg)
    if condition == "stimulated":
        for lo, hi in params.rotation_windows:
            alpha = alpha + params.rotation_boost * _window_weight(
                ph, lo, hi, params.taper_deg)
        lo, hi = params.elevation_window
        phi = phi + params.elevation_shift * _window_weight(
            ph, lo, hi, params.taper_deg)
    return CycleTrace(phase_deg=ph, phi=phi, theta=theta, alpha=alpha)


def write_trace_csv(out: TextIO, trace: CycleTrace) -> None:
    out.write("phase_deg,phi,theta,alpha\n")
    for p, f, t, a in zip(trace.phase_deg, trace.phi, trace.theta,
                          trace.alpha):
        out.write(f"{p:.9g},{f:.9g},{t:.9g},{a:.9g}\n")


def read_marker_csv(lines) -> tuple[list[float],
                                    list[tuple[Vec3, Vec3, Vec3]]]:
    """Parse a marker CSV: t_ms, m1x, m1y, m1z, m2x, ..., m3z."""
    it = iter(lines)
    header = next(it).strip().split(",")
    if header[0] != "t_ms" or len(header) != 10:
        raise ValueError("marker CSV must have columns t_ms, m1x..m3z")
    times: list[float] = []
    markers: list[tuple[Vec3, Vec3, Vec3]] = []
    for line in it:
        if not line.strip():
            continue
        vals = [float(v) for v in line.strip().split(",")]
        times.append(vals[0])
        markers.append((Vec3(*vals[1:4]), Vec3(*vals[4:7]),
                        Vec3(*vals[7:10])))
    return times, markers
