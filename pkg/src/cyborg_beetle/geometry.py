"""Frames, quaternions and angle conventions shared by every module.

Conventions (fixed for the whole project):

- World frame: ENU, right-handed. X east, Y north, Z up.
  Flight arena bounds: 12 x 8 x 4 m.
- Body frame: X forward (head), Y right, Z down.
- Euler angles (degrees), intrinsic Z-Y-X: yaw = 0 means facing north,
  positive yaw is nose-right (toward east); positive pitch is nose-up;
  positive roll is right-wing-down.
- Attitude quaternion q = [w, x, y, z] is the rotation from the level,
  north-facing reference pose to the current pose (the standard
  aerospace attitude quaternion). The identity quaternion therefore
  decomposes to (0, 0, 0). Body <-> ENU world vector transforms fold in
  the fixed axis bridge internally; see body_to_world / world_to_body.
- Angles are degrees everywhere at module boundaries; radians are
  internal only.

All functions are pure; values are immutable tuples.
"""

from __future__ import annotations

import math
from typing import NamedTuple

ARENA_SIZE = (12.0, 8.0, 4.0)   # m, world X x Y x Z
GRAVITY = 9.80665               # m/s^2, along world -Z

# Half-pitch band (deg) around +-90 treated as gimbal-degenerate.
GIMBAL_BAND_DEG = 0.1

_DEG = math.pi / 180.0


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n < 1e-15:
            raise ValueError("cannot normalize near-zero vector")
        return self.scaled(1.0 / n)


class UnitQuat(NamedTuple):
    w: float
    x: float
    y: float
    z: float


class EulerBody(NamedTuple):
    """Body attitude in degrees: yaw in (-180, 180], pitch in [-90, 90],
    roll in (-180, 180]."""

    yaw: float
    pitch: float
    roll: float


IDENTITY_QUAT = UnitQuat(1.0, 0.0, 0.0, 0.0)


def quat_normalize(q: UnitQuat) -> UnitQuat:
    n = math.sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z)
    if n < 1e-15:
        raise ValueError("cannot normalize near-zero quaternion")
    return UnitQuat(q.w / n, q.x / n, q.y / n, q.z / n)


def quat_conjugate(q: UnitQuat) -> UnitQuat:
    return UnitQuat(q.w, -q.x, -q.y, -q.z)


def quat_multiply(a: UnitQuat, b: UnitQuat) -> UnitQuat:
    """Hamilton product; R(a*b) = R(a) R(b)."""
    return UnitQuat(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def rotate_vec(q: UnitQuat, v: Vec3) -> Vec3:
    """Apply the raw quaternion rotation: reference-axes vector of v."""
    w, x, y, z = q
    # v + 2*w*(u x v) + 2*(u x (u x v)) with u = (x, y, z)
    ux = y * v.z - z * v.y
    uy = z * v.x - x * v.z
    uz = x * v.y - y * v.x
    uux = y * uz - z * uy
    uuy = z * ux - x * uz
    uuz = x * uy - y * ux
    return Vec3(
        v.x + 2.0 * (w * ux + uux),
        v.y + 2.0 * (w * uy + uuy),
        v.z + 2.0 * (w * uz + uuz),
    )


def body_to_world(q: UnitQuat, v: Vec3) -> Vec3:
    """Rotate a body-frame (X fwd, Y right, Z down) vector into ENU world."""
    r = rotate_vec(q, v)  # reference axes: x north, y east, z down
    return Vec3(r.y, r.x, -r.z)


def world_to_body(q: UnitQuat, v: Vec3) -> Vec3:
    """Rotate an ENU world vector into the body frame."""
    return rotate_vec(quat_conjugate(q), Vec3(v.y, v.x, -v.z))


def quat_to_matrix(q: UnitQuat):
    """3x3 row-major rotation matrix of the raw quaternion, nested tuples."""
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def wrap_deg(angle: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


def euler_to_quat(e: EulerBody) -> UnitQuat:
    """Attitude quaternion from yaw/pitch/roll degrees (intrinsic Z-Y-X)."""
    if not all(map(math.isfinite, e)):
        raise ValueError("euler angles must be finite")
    hy = 0.5 * e.yaw * _DEG
    hp = 0.5 * e.pitch * _DEG
    hr = 0.5 * e.roll * _DEG
    cy, sy = math.cos(hy), math.sin(hy)
    cp, sp = math.cos(hp), math.sin(hp)
    cr, sr = math.cos(hr), math.sin(hr)
    return quat_normalize(UnitQuat(
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    ))


def gimbal_degenerate(q: UnitQuat) -> bool:
    """True when pitch is within GIMBAL_BAND_DEG of +-90 deg."""
    w, x, y, z = q
    s = max(-1.0, min(1.0, 2.0 * (w * y - x * z)))
    return abs(math.degrees(math.asin(s))) >= 90.0 - GIMBAL_BAND_DEG


def quat_to_euler(q: UnitQuat) -> EulerBody:
    """Yaw/pitch/roll degrees from an attitude quaternion.

    Inverse of euler_to_quat away from gimbal lock. Within
    GIMBAL_BAND_DEG of pitch = +-90 the yaw/roll split is not
    observable; the convention here is roll := 0 with yaw carrying the
    full Z rotation.
    """
    w, x, y, z = q
    s = max(-1.0, min(1.0, 2.0 * (w * y - x * z)))
    pitch = math.degrees(math.asin(s))
    if abs(pitch) >= 90.0 - GIMBAL_BAND_DEG:
        yaw = math.degrees(math.atan2(2.0 * (w * z - x * y),
                                      1.0 - 2.0 * (x * x + z * z)))
        return EulerBody(wrap_deg(yaw), pitch, 0.0)
    yaw = math.degrees(math.atan2(2.0 * (w * z + x * y),
                                  1.0 - 2.0 * (y * y + z * z)))
    roll = math.degrees(math.atan2(2.0 * (w * x + y * z),
                                   1.0 - 2.0 * (x * x + y * y)))
    return EulerBody(wrap_deg(yaw), pitch, wrap_deg(roll))


def heading_direction(yaw_deg: float) -> tuple[float, float]:
    """Unit horizontal direction (world x, y) of the nose for a yaw angle."""
    r = yaw_deg * _DEG
    return (math.sin(r), math.cos(r))


def body_rates_from_quats(q0: UnitQuat, q1: UnitQuat, dt_s: float) -> Vec3:
    """Mean body angular rate (deg/s) taking q0 to q1 over dt_s seconds."""
    if dt_s <= 0.0:
        raise ValueError("dt must be positive")
    dq = quat_multiply(quat_conjugate(q0), q1)
    w = max(-1.0, min(1.0, dq.w))
    angle = 2.0 * math.acos(abs(w))
    vn = math.sqrt(dq.x * dq.x + dq.y * dq.y + dq.z * dq.z)
    if vn < 1e-15 or angle < 1e-12:
        return Vec3(0.0, 0.0, 0.0)
    sign = 1.0 if w >= 0.0 else -1.0
    k = sign * math.degrees(angle) / (vn * dt_s)
    return Vec3(dq.x * k, dq.y * k, dq.z * k)


def unwrap_deg(values) -> list[float]:
    """Unwrap a degree series so consecutive samples never jump by >180."""
    out: list[float] = []
    offset = 0.0
    prev = None
    for v in values:
        if prev is not None:
            d = (v + offset) - prev
            if d > 180.0:
                offset -= 360.0
            elif d < -180.0:
                offset += 360.0
        cur = v + offset
        out.append(cur)
        prev = cur
    return out
