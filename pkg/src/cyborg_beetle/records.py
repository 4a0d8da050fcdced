"""Trial records and their on-disk formats.

One stimulation trial spans a 150 ms pre window, the 500 ms train and a
post window. A record holds the ground-truth state series (1 kHz), the
emulated IMU stream (100 Hz) and the motion-capture stream, plus the
stimulus annotation.

Files per trial (all deterministic byte-for-byte given the seed):
    <stem>.meta.json   trial metadata, trim/protocol/seed
    <stem>.truth.csv   t_ms, px..pz, vx..vz, qw..qz, act_L, act_R, stim_on
    <stem>.imu.csv     t_ms, ax, ay, az, gx, gy, gz, qw, qx, qy, qz
    <stem>.mocap.csv   t_ms, px, py, pz
Floats are written with repr (shortest round-trip form), so reloading
reproduces the exact values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from .stimulus import StimTarget

TRUTH_HEADER = ("t_ms,px,py,pz,vx,vy,vz,qw,qx,qy,qz,act_L,act_R,stim_on")
IMU_HEADER = "t_ms,ax,ay,az,gx,gy,gz,qw,qx,qy,qz"
MOCAP_HEADER = "t_ms,px,py,pz"


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class TrialMeta:
    beetle_id: int
    trial_id: int
    target: StimTarget | None
    frequency_hz: float
    seed: int
    pre_ms: float = 150.0
    stim_ms: float = 500.0
    post_ms: float = 350.0
    truncated: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def stim_onset_ms(self) -> float:
        return self.pre_ms

    @property
    def duration_ms(self) -> float:
        return self.pre_ms + self.stim_ms + self.post_ms

    def to_json(self) -> str:
        doc = asdict(self)
        doc["target"] = self.target.name if self.target else None
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrialMeta":
        doc = json.loads(text)
        target = doc.pop("target")
        doc["target"] = StimTarget[target] if target else None
        return cls(**doc)


@dataclass
class TruthSeries:
    """Ground-truth state at 1 kHz: world positions/velocities (m, m/s),
    attitude quaternions, body rates (deg/s), world acceleration
    (m/s^2), activation levels, and the stimulation flag."""

    t_ms: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    quat: np.ndarray
    body_rates: np.ndarray
    accel_world: np.ndarray
    act_left: np.ndarray
    act_right: np.ndarray
    stim_on: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)

    @property
    def rate_hz(self) -> float:
        if len(self.t_ms) < 2:
            raise ValueError("truth series too short")
        return 1000.0 / float(self.t_ms[1] - self.t_ms[0])


@dataclass
class ImuSeries:
    """100 Hz IMU stream: body-frame specific force (m/s^2, includes the
    gravity reaction), body rates (deg/s) and the orientation."""

    t_ms: np.ndarray
    accel_body: np.ndarray
    gyro: np.ndarray
    quat: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass
class MocapSeries:
    t_ms: np.ndarray
    position: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass
class TrialRecord:
    meta: TrialMeta
    truth: TruthSeries | None = None
    imu: ImuSeries | None = None
    mocap: MocapSeries | None = None


def write_truth_csv(out: TextIO, s: TruthSeries) -> None:
    out.write(TRUTH_HEADER + "\n")
    for i in range(len(s)):
        row = [
            _fmt(s.t_ms[i]),
            *(_fmt(v) for v in s.position[i]),
            *(_fmt(v) for v in s.velocity[i]),
            *(_fmt(v) for v in s.quat[i]),
            _fmt(s.act_left[i]),
            _fmt(s.act_right[i]),
            str(int(s.stim_on[i])),
        ]
        out.write(",".join(row) + "\n")


def write_imu_csv(out: TextIO, s: ImuSeries) -> None:
    out.write(IMU_HEADER + "\n")
    for i in range(len(s)):
        row = [
            _fmt(s.t_ms[i]),
            *(_fmt(v) for v in s.accel_body[i]),
            *(_fmt(v) for v in s.gyro[i]),
            *(_fmt(v) for v in s.quat[i]),
        ]
        out.write(",".join(row) + "\n")


def read_imu_csv(lines) -> ImuSeries:
    rows = _read_csv(lines, IMU_HEADER)
    return ImuSeries(
        t_ms=rows[:, 0],
        accel_body=rows[:, 1:4],
        gyro=rows[:, 4:7],
        quat=rows[:, 7:11],
    )


def write_mocap_csv(out: TextIO, s: MocapSeries) -> None:
    out.write(MOCAP_HEADER + "\n")
    for i in range(len(s)):
        row = [_fmt(s.t_ms[i]), *(_fmt(v) for v in s.position[i])]
        out.write(",".join(row) + "\n")


def read_mocap_csv(lines) -> MocapSeries:
    rows = _read_csv(lines, MOCAP_HEADER)
    return MocapSeries(t_ms=rows[:, 0], position=rows[:, 1:4])


def _read_csv(lines, expected_header: str) -> np.ndarray:
    it = iter(lines)
    header = next(it).strip()
    if header != expected_header:
        raise ValueError(f"unexpected CSV header {header!r}")
    data = [[float(v) for v in line.strip().split(",")]
            for line in it if line.strip()]
    if not data:
        raise ValueError("empty CSV")
    return np.asarray(data)


def save_trial(record: TrialRecord, directory: Path | str, stem: str,
               include_truth: bool = False) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{stem}.meta.json").write_text(record.meta.to_json() + "\n")
    if record.imu is not None:
        with open(d / f"{stem}.imu.csv", "w") as f:
            write_imu_csv(f, record.imu)
    if record.mocap is not None:
        with open(d / f"{stem}.mocap.csv", "w") as f:
            write_mocap_csv(f, record.mocap)
    if include_truth and record.truth is not None:
        with open(d / f"{stem}.truth.csv", "w") as f:
            write_truth_csv(f, record.truth)


def load_trial(directory: Path | str, stem: str) -> TrialRecord:
    d = Path(directory)
    meta = TrialMeta.from_json((d / f"{stem}.meta.json").read_text())
    imu = mocap = None
    imu_path = d / f"{stem}.imu.csv"
    if imu_path.exists():
        with open(imu_path) as f:
            imu = read_imu_csv(f)
    mocap_path = d / f"{stem}.mocap.csv"
    if mocap_path.exists():
        with open(mocap_path) as f:
            mocap = read_mocap_csv(f)
    return TrialRecord(meta=meta, imu=imu, mocap=mocap)


def trial_stems(directory: Path | str) -> list[str]:
    """Sorted stems of every trial saved in a directory."""
    d = Path(directory)
    return sorted(p.name[:-len(".meta.json")]
                  for p in d.glob("*.meta.json"))
