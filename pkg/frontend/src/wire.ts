/**
 * Wire codec for the base-station/backpack protocol.
 *
 * Frame: magic 0xB7 | type u8 | seq u16 LE | length u16 LE | payload |
 * crc16 LE (CRC-16/CCITT-FALSE over type..payload). The decoder accepts
 * arbitrary chunking, never throws on input bytes, and resynchronizes
 * on the next magic byte after corruption, categorizing every failure.
 * Layout and golden bytes match the simulator's codec bit for bit.
 */

export const MAGIC = 0xb7;
export const HEADER_LEN = 6;
export const CRC_LEN = 2;
export const MAX_PAYLOAD = 256;

export const GRAVITY = 9.80665;
export const ACCEL_LSB = GRAVITY / 1000.0; // 1 mg
export const GYRO_LSB = 0.1; // deg/s
export const QUAT_LSB = 1.0 / 32767.0; // Q15

export enum StimTarget {
  Left = 1,
  Right = 2,
  Both = 3,
}

export interface StimRequest {
  kind: "stim_request";
  target: StimTarget;
  freqHz: number;
  durationMs: number;
  amplitudeMv: number;
  pulseWidthUs: number;
}

export interface StimAck {
  kind: "stim_ack";
  seq: number;
  startTimestampUs: number;
}

export interface ImuTelemetry {
  kind: "imu";
  tUs: number;
  accel: [number, number, number]; // mg
  gyro: [number, number, number]; // 0.1 dps
  quat: [number, number, number, number]; // Q15
}

export interface StimMarker {
  kind: "marker";
  tUs: number;
  on: boolean;
}

export interface Heartbeat {
  kind: "heartbeat";
  tUs: number;
}

export type Message =
  | StimRequest
  | StimAck
  | ImuTelemetry
  | StimMarker
  | Heartbeat;

export type DecodeErrorCode =
  | "bad_magic"
  | "bad_length"
  | "unknown_type"
  | "bad_crc";

export interface DecodedFrame {
  message: Message;
  seq: number;
  offset: number;
}

export interface DecodeFailure {
  code: DecodeErrorCode;
  offset: number;
}

const TYPE_STIM_REQUEST = 0x01;
const TYPE_STIM_ACK = 0x02;
const TYPE_IMU = 0x03;
const TYPE_MARKER = 0x04;
const TYPE_HEARTBEAT = 0x05;

const EXPECTED_LEN: Record<number, number> = {
  [TYPE_STIM_REQUEST]: 9,
  [TYPE_STIM_ACK]: 10,
  [TYPE_IMU]: 28,
  [TYPE_MARKER]: 9,
  [TYPE_HEARTBEAT]: 8,
};

export function crc16CcittFalse(data: Uint8Array): number {
  let crc = 0xffff;
  for (const byte of data) {
    crc ^= byte << 8;
    for (let i = 0; i < 8; i++) {
      crc = crc & 0x8000 ? ((crc << 1) ^ 0x1021) & 0xffff : (crc << 1) & 0xffff;
    }
  }
  return crc;
}

function payloadOf(msg: Message): Buffer {
  switch (msg.kind) {
    case "stim_request": {
      const b = Buffer.alloc(9);
      b.writeUInt8(msg.target, 0);
      b.writeUInt16LE(msg.freqHz, 1);
      b.writeUInt16LE(msg.durationMs, 3);
      b.writeUInt16LE(msg.amplitudeMv, 5);
      b.writeUInt16LE(msg.pulseWidthUs, 7);
      return b;
    }
    case "stim_ack": {
      const b = Buffer.alloc(10);
      b.writeUInt16LE(msg.seq, 0);
      b.writeBigUInt64LE(BigInt(msg.startTimestampUs), 2);
      return b;
    }
    case "imu": {
      const b = Buffer.alloc(28);
      b.writeBigUInt64LE(BigInt(msg.tUs), 0);
      for (let i = 0; i < 3; i++) b.writeInt16LE(msg.accel[i], 8 + 2 * i);
      for (let i = 0; i < 3; i++) b.writeInt16LE(msg.gyro[i], 14 + 2 * i);
      for (let i = 0; i < 4; i++) b.writeInt16LE(msg.quat[i], 20 + 2 * i);
      return b;
    }
    case "marker": {
      const b = Buffer.alloc(9);
      b.writeBigUInt64LE(BigInt(msg.tUs), 0);
      b.writeUInt8(msg.on ? 1 : 0, 8);
      return b;
    }
    case "heartbeat": {
      const b = Buffer.alloc(8);
      b.writeBigUInt64LE(BigInt(msg.tUs), 0);
      return b;
    }
  }
}

function typeOf(msg: Message): number {
  switch (msg.kind) {
    case "stim_request":
      return TYPE_STIM_REQUEST;
    case "stim_ack":
      return TYPE_STIM_ACK;
    case "imu":
      return TYPE_IMU;
    case "marker":
      return TYPE_MARKER;
    case "heartbeat":
      return TYPE_HEARTBEAT;
  }
}

export function encode(msg: Message, seq: number): Buffer {
  if (seq < 0 || seq > 0xffff) throw new Error(`seq ${seq} out of range`);
  const payload = payloadOf(msg);
  const frame = Buffer.alloc(HEADER_LEN + payload.length + CRC_LEN);
  frame.writeUInt8(MAGIC, 0);
  frame.writeUInt8(typeOf(msg), 1);
  frame.writeUInt16LE(seq, 2);
  frame.writeUInt16LE(payload.length, 4);
  payload.copy(frame, HEADER_LEN);
  const crc = crc16CcittFalse(frame.subarray(1, HEADER_LEN + payload.length));
  frame.writeUInt16LE(crc, HEADER_LEN + payload.length);
  return frame;
}

function parsePayload(type: number, p: Buffer): Message | null {
  switch (type) {
    case TYPE_STIM_REQUEST: {
      const target = p.readUInt8(0);
      if (target < 1 || target > 3) return null;
      return {
        kind: "stim_request",
        target,
        freqHz: p.readUInt16LE(1),
        durationMs: p.readUInt16LE(3),
        amplitudeMv: p.readUInt16LE(5),
        pulseWidthUs: p.readUInt16LE(7),
      };
    }
    case TYPE_STIM_ACK:
      return {
        kind: "stim_ack",
        seq: p.readUInt16LE(0),
        startTimestampUs: Number(p.readBigUInt64LE(2)),
      };
    case TYPE_IMU:
      return {
        kind: "imu",
        tUs: Number(p.readBigUInt64LE(0)),
        accel: [p.readInt16LE(8), p.readInt16LE(10), p.readInt16LE(12)],
        gyro: [p.readInt16LE(14), p.readInt16LE(16), p.readInt16LE(18)],
        quat: [
          p.readInt16LE(20),
          p.readInt16LE(22),
          p.readInt16LE(24),
          p.readInt16LE(26),
        ],
      };
    case TYPE_MARKER:
      return {
        kind: "marker",
        tUs: Number(p.readBigUInt64LE(0)),
        on: p.readUInt8(8) !== 0,
      };
    case TYPE_HEARTBEAT:
      return { kind: "heartbeat", tUs: Number(p.readBigUInt64LE(0)) };
    default:
      return null;
  }
}

/** Incremental decoder over an arbitrarily chunked byte stream. */
export class StreamDecoder {
  private buf = Buffer.alloc(0);
  private base = 0;

  feed(data: Buffer): { frames: DecodedFrame[]; errors: DecodeFailure[] } {
    this.buf = Buffer.concat([this.buf, data]);
    const frames: DecodedFrame[] = [];
    const errors: DecodeFailure[] = [];
    let pos = 0;
    for (;;) {
      const idx = this.buf.indexOf(MAGIC, pos);
      if (idx < 0) {
        if (this.buf.length > pos) {
          errors.push({ code: "bad_magic", offset: this.base + pos });
        }
        pos = this.buf.length;
        break;
      }
      if (idx > pos) {
        errors.push({ code: "bad_magic", offset: this.base + pos });
        pos = idx;
      }
      if (this.buf.length - pos < HEADER_LEN) break;
      const type = this.buf.readUInt8(pos + 1);
      const seq = this.buf.readUInt16LE(pos + 2);
      const length = this.buf.readUInt16LE(pos + 4);
      if (length > MAX_PAYLOAD) {
        errors.push({ code: "bad_length", offset: this.base + pos });
        pos += 1;
        continue;
      }
      const expected = EXPECTED_LEN[type];
      if (expected === undefined) {
        errors.push({ code: "unknown_type", offset: this.base + pos });
        pos += 1;
        continue;
      }
      if (length !== expected) {
        errors.push({ code: "bad_length", offset: this.base + pos });
        pos += 1;
        continue;
      }
      const total = HEADER_LEN + length + CRC_LEN;
      if (this.buf.length - pos < total) break;
      const crcGot = this.buf.readUInt16LE(pos + HEADER_LEN + length);
      const crcWant = crc16CcittFalse(
        this.buf.subarray(pos + 1, pos + HEADER_LEN + length),
      );
      if (crcGot !== crcWant) {
        errors.push({ code: "bad_crc", offset: this.base + pos });
        pos += 1;
        continue;
      }
      const msg = parsePayload(
        type,
        this.buf.subarray(pos + HEADER_LEN, pos + HEADER_LEN + length),
      );
      if (msg === null) {
        errors.push({ code: "unknown_type", offset: this.base + pos });
        pos += 1;
        continue;
      }
      frames.push({ message: msg, seq, offset: this.base + pos });
      pos += total;
    }
    if (pos > 0) {
      this.buf = this.buf.subarray(pos);
      this.base += pos;
    }
    return { frames, errors };
  }
}
