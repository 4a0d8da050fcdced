"""Bit-exact binary wire protocol between base station and backpack.

Frame layout (little-endian multi-byte fields):

    magic  u8   = 0xB7
    type   u8   message type code
    seq    u16  sender sequence number
    length u16  payload byte count (<= 256)
    payload     length bytes
    crc    u16  CRC-16/CCITT-FALSE over type..payload

Messages:

    0x01 StimRequest   target u8, freq_hz u16, duration_ms u16,
                       amplitude_mv u16, pulse_width_us u16
    0x02 StimAck       seq u16, start_timestamp_us u64
    0x03 ImuTelemetry  t_us u64, accel i16*3 (mg), gyro i16*3 (0.1 dps),
                       quat i16*4 (Q15)
    0x04 StimMarker    t_us u64, on u8
    0x05 Heartbeat     t_us u64

The stream decoder accepts arbitrary bytes, never raises on input, and
resynchronizes on the next magic byte after any corruption; every
failure is categorized (bad magic, bad length, unknown type, bad CRC)
with its byte offset. Any chunking of a valid stream decodes to the
identical message sequence.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum

from .geometry import GRAVITY
from .stimulus import StimCommand, StimTarget

MAGIC = 0xB7
HEADER_LEN = 6          # magic, type, seq, length
CRC_LEN = 2
MAX_PAYLOAD = 256

TYPE_STIM_REQUEST = 0x01
TYPE_STIM_ACK = 0x02
TYPE_IMU_TELEMETRY = 0x03
TYPE_STIM_MARKER = 0x04
TYPE_HEARTBEAT = 0x05

ACCEL_LSB = GRAVITY / 1000.0    # 1 mg
GYRO_LSB = 0.1                  # deg/s
QUAT_LSB = 1.0 / 32767.0        # Q15


class ProtocolError(ValueError):
    pass


class EncodeError(ProtocolError):
    pass


class DecodeErrorCode(Enum):
    BAD_MAGIC = "bad_magic"
    BAD_LENGTH = "bad_length"
    UNKNOWN_TYPE = "unknown_type"
    BAD_CRC = "bad_crc"


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


def _check_range(name: str, value: int, lo: int, hi: int) -> int:
    if not isinstance(value, int) or not lo <= value <= hi:
        raise EncodeError(f"{name} = {value!r} outside [{lo}, {hi}]")
    return value


@dataclass(frozen=True)
class StimRequest:
    target: StimTarget
    freq_hz: int
    duration_ms: int
    amplitude_mv: int
    pulse_width_us: int

    TYPE = TYPE_STIM_REQUEST

    def payload(self) -> bytes:
        return struct.pack(
            "<BHHHH", self.target.value,
            _check_range("freq_hz", self.freq_hz, 0, 0xFFFF),
            _check_range("duration_ms", self.duration_ms, 0, 0xFFFF),
            _check_range("amplitude_mv", self.amplitude_mv, 0, 0xFFFF),
            _check_range("pulse_width_us", self.pulse_width_us, 0, 0xFFFF))

    @classmethod
    def parse(cls, payload: bytes) -> "StimRequest":
        target, f, d, a, w = struct.unpack("<BHHHH", payload)
        try:
            target = StimTarget(target)
        except ValueError as e:
            raise ProtocolError(f"unknown stimulation target {target}") from e
        return cls(target, f, d, a, w)

    def to_command(self) -> StimCommand:
        """SI-units command; invalid parameter combinations raise
        StimulusError."""
        return StimCommand(self.target, float(self.freq_hz),
                           float(self.duration_ms), float(self.amplitude_mv),
                           self.pulse_width_us / 1000.0)

    @classmethod
    def from_command(cls, cmd: StimCommand) -> "StimRequest":
        return cls(cmd.target, int(round(cmd.frequency_hz)),
                   int(round(cmd.duration_ms)),
                   int(round(cmd.amplitude_mv)),
                   int(round(cmd.pulse_width_ms * 1000.0)))


@dataclass(frozen=True)
class StimAck:
    seq: int
    start_timestamp_us: int

    TYPE = TYPE_STIM_ACK

    def payload(self) -> bytes:
        return struct.pack(
            "<HQ", _check_range("seq", self.seq, 0, 0xFFFF),
            _check_range("start_timestamp_us", self.start_timestamp_us, 0,
                          2 ** 64 - 1))

    @classmethod
    def parse(cls, payload: bytes) -> "StimAck":
        return cls(*struct.unpack("<HQ", payload))


@dataclass(frozen=True)
class ImuTelemetry:
    t_us: int
    accel: tuple[int, int, int]     # mg
    gyro: tuple[int, int, int]      # 0.1 deg/s
    quat: tuple[int, int, int, int]  # Q15

    TYPE = TYPE_IMU_TELEMETRY

    def payload(self) -> bytes:
        for name, vals in (("accel", self.accel), ("gyro", self.gyro),
                           ("quat", self.quat)):
            for v in vals:
                _check_range(name, v, -32768, 32767)
        return struct.pack(
            "<Q3h3h4h",
            _check_range("t_us", self.t_us, 0, 2 ** 64 - 1),
            *self.accel, *self.gyro, *self.quat)

    @classmethod
    def parse(cls, payload: bytes) -> "ImuTelemetry":
        vals = struct.unpack("<Q3h3h4h", payload)
        return cls(vals[0], tuple(vals[1:4]), tuple(vals[4:7]),
                   tuple(vals[7:11]))

    @classmethod
    def from_si(cls, t_us: int, accel_mps2, gyro_dps, quat) -> "ImuTelemetry":
        """Quantize SI values onto the wire scales (saturating)."""
        def q(v, lsb):
            return max(-32768, min(32767, int(round(v / lsb))))

        return cls(
            t_us=t_us,
            accel=tuple(q(v, ACCEL_LSB) for v in accel_mps2),
            gyro=tuple(q(v, GYRO_LSB) for v in gyro_dps),
            quat=tuple(q(v, QUAT_LSB) for v in quat),
        )

    def accel_si(self) -> tuple[float, float, float]:
        return tuple(v * ACCEL_LSB for v in self.accel)

    def gyro_si(self) -> tuple[float, float, float]:
        return tuple(v * GYRO_LSB for v in self.gyro)

    def quat_si(self) -> tuple[float, float, float, float]:
        return tuple(v * QUAT_LSB for v in self.quat)


@dataclass(frozen=True)
class StimMarker:
    t_us: int
    on: bool

    TYPE = TYPE_STIM_MARKER

    def payload(self) -> bytes:
        return struct.pack(
            "<QB", _check_range("t_us", self.t_us, 0, 2 ** 64 - 1),
            int(bool(self.on)))

    @classmethod
    def parse(cls, payload: bytes) -> "StimMarker":
        t_us, on = struct.unpack("<QB", payload)
        return cls(t_us, bool(on))


@dataclass(frozen=True)
class Heartbeat:
    t_us: int

    TYPE = TYPE_HEARTBEAT

    def payload(self) -> bytes:
        return struct.pack(
            "<Q", _check_range("t_us", self.t_us, 0, 2 ** 64 - 1))

    @classmethod
    def parse(cls, payload: bytes) -> "Heartbeat":
        return cls(*struct.unpack("<Q", payload))


Message = StimRequest | StimAck | ImuTelemetry | StimMarker | Heartbeat

_PARSERS = {
    TYPE_STIM_REQUEST: (StimRequest.parse, 9),
    TYPE_STIM_ACK: (StimAck.parse, 10),
    TYPE_IMU_TELEMETRY: (ImuTelemetry.parse, 28),
    TYPE_STIM_MARKER: (StimMarker.parse, 9),
    TYPE_HEARTBEAT: (Heartbeat.parse, 8),
}


def encode(msg: Message, seq: int) -> bytes:
    """Frame one message; deterministic bytes."""
    _check_range("seq", seq, 0, 0xFFFF)
    payload = msg.payload()
    body = struct.pack("<BBHH", MAGIC, msg.TYPE, seq, len(payload)) + payload
    crc = crc16_ccitt_false(body[1:])
    return body + struct.pack("<H", crc)


@dataclass(frozen=True)
class DecodedFrame:
    message: Message
    seq: int
    offset: int        # byte offset of the frame's magic in the stream


@dataclass(frozen=True)
class DecodeFailure:
    code: DecodeErrorCode
    offset: int
    detail: str = ""


def decode(frame: bytes) -> Message:
    """Decode exactly one well-formed frame; raises ProtocolError with
    the failure category otherwise."""
    dec = StreamDecoder()
    frames, errors = dec.feed(frame)
    if errors:
        raise ProtocolError(
            f"{errors[0].code.value} at offset {errors[0].offset}")
    if not frames:
        raise ProtocolError("incomplete frame")
    return frames[0].message


class StreamDecoder:
    """Incremental decoder over an arbitrarily chunked byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()
        self._base = 0  # stream offset of _buf[0]

    def feed(self, data: bytes) -> tuple[list[DecodedFrame],
                                         list[DecodeFailure]]:
        """Consume bytes; returns frames decoded so far plus categorized
        failures. Never raises on any input."""
        self._buf.extend(data)
        frames: list[DecodedFrame] = []
        errors: list[DecodeFailure] = []
        pos = 0
        buf = self._buf
        while True:
            idx = buf.find(MAGIC, pos)
            if idx < 0:
                if len(buf) > pos:
                    errors.append(DecodeFailure(
                        DecodeErrorCode.BAD_MAGIC, self._base + pos,
                        f"{len(buf) - pos} byte(s) skipped"))
                pos = len(buf)
                break
            if idx > pos:
                errors.append(DecodeFailure(
                    DecodeErrorCode.BAD_MAGIC, self._base + pos,
                    f"{idx - pos} byte(s) skipped"))
                pos = idx
            if len(buf) - pos < HEADER_LEN:
                break  # incomplete header: wait for more bytes
            mtype = buf[pos + 1]
            seq, length = struct.unpack_from("<HH", buf, pos + 2)
            if length > MAX_PAYLOAD:
                errors.append(DecodeFailure(
                    DecodeErrorCode.BAD_LENGTH, self._base + pos,
                    f"length {length} > {MAX_PAYLOAD}"))
                pos += 1
                continue
            if mtype not in _PARSERS:
                errors.append(DecodeFailure(
                    DecodeErrorCode.UNKNOWN_TYPE, self._base + pos,
                    f"type 0x{mtype:02x}"))
                pos += 1
                continue
            parser, expected_len = _PARSERS[mtype]
            if length != expected_len:
                errors.append(DecodeFailure(
                    DecodeErrorCode.BAD_LENGTH, self._base + pos,
                    f"type 0x{mtype:02x} expects {expected_len}, "
                    f"got {length}"))
                pos += 1
                continue
            total = HEADER_LEN + length + CRC_LEN
            if len(buf) - pos < total:
                break  # incomplete frame: wait for more bytes
            crc_got = struct.unpack_from("<H", buf, pos + HEADER_LEN
                                         + length)[0]
            crc_want = crc16_ccitt_false(
                bytes(buf[pos + 1:pos + HEADER_LEN + length]))
            if crc_got != crc_want:
                errors.append(DecodeFailure(
                    DecodeErrorCode.BAD_CRC, self._base + pos,
                    f"got 0x{crc_got:04x}, want 0x{crc_want:04x}"))
                pos += 1
                continue
            try:
                msg = parser(bytes(buf[pos + HEADER_LEN:
                                       pos + HEADER_LEN + length]))
            except (ProtocolError, struct.error) as e:
                errors.append(DecodeFailure(
                    DecodeErrorCode.UNKNOWN_TYPE, self._base + pos, str(e)))
                pos += 1
                continue
            frames.append(DecodedFrame(msg, seq, self._base + pos))
            pos += total
        if pos:
            del self._buf[:pos]
            self._base += pos
        return frames, errors


def link_simulate(
    frames: list[tuple[float, bytes]],
    loss_prob: float,
    latency_ms: float,
    jitter_ms: float,
    seed: int,
) -> list[tuple[float, bytes]]:
    """Lossy FIFO link: iid loss, base latency plus uniform jitter,
    arrival order preserved for survivors."""
    if not 0.0 <= loss_prob <= 1.0:
        raise ProtocolError("loss probability must be in [0, 1]")
    import numpy as np

    rng = np.random.default_rng(seed)
    delivered = []
    last_arrival = -math.inf
    for t_send, frame in frames:
        if rng.random() < loss_prob:
            continue
        arrival = t_send + latency_ms + float(rng.uniform(0.0, jitter_ms))
        arrival = max(arrival, last_arrival)  # single FIFO link
        last_arrival = arrival
        delivered.append((arrival, frame))
    return delivered
