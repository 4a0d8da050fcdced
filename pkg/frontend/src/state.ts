/**
 * Console state store: ingests decoded frames into immutable-ish
 * snapshots for the renderer, tracks fired commands through their
 * pending -> acked/lost lifecycle, and keeps a short dead-reckoned
 * top-down trail (heading from the attitude, speed integrated from the
 * forward acceleration; the wire carries no position).
 */

import {
  ACCEL_LSB,
  DecodedFrame,
  GRAVITY,
  GYRO_LSB,
  Message,
  QUAT_LSB,
  StimTarget,
  encode,
} from "./wire";

export const FREQ_MIN = 40;
export const FREQ_MAX = 100;
export const ACK_TIMEOUT_MS = 1000;
export const TRAIL_CAP = 400;
export const CHART_CAP = 120;

export interface Attitude {
  yaw: number;
  pitch: number;
  roll: number;
}

export interface EventEntry {
  wallMs: number;
  text: string;
  status: "pending" | "acked" | "lost" | "info";
  seq?: number;
}

export interface TrailPoint {
  x: number;
  y: number;
  stim: boolean;
}

/** Intrinsic Z-Y-X Euler angles (deg) from a [w,x,y,z] quaternion. */
export function quatToEuler(q: [number, number, number, number]): Attitude {
  const [w, x, y, z] = q;
  const s = Math.max(-1, Math.min(1, 2 * (w * y - x * z)));
  const pitch = (Math.asin(s) * 180) / Math.PI;
  const yaw =
    (Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)) * 180) / Math.PI;
  const roll =
    (Math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y)) * 180) / Math.PI;
  return { yaw, pitch, roll };
}

/** Rotate a body vector into the ENU world (reference axes are
 * north/east/down; ENU = (ref.y, ref.x, -ref.z)). */
export function bodyToWorld(
  q: [number, number, number, number],
  v: [number, number, number],
): [number, number, number] {
  const [w, x, y, z] = q;
  const [vx, vy, vz] = v;
  const ux = y * vz - z * vy;
  const uy = z * vx - x * vz;
  const uz = x * vy - y * vx;
  const uux = y * uz - z * uy;
  const uuy = z * ux - x * uz;
  const uuz = x * uy - y * ux;
  const rx = vx + 2 * (w * ux + uux);
  const ry = vy + 2 * (w * uy + uuy);
  const rz = vz + 2 * (w * uz + uuz);
  return [ry, rx, -rz];
}

export class ConsoleState {
  connection: "connecting" | "connected" | "disconnected" = "disconnected";
  attitude: Attitude = { yaw: 0, pitch: 0, roll: 0 };
  accel = { ah: 0, alat: 0, av: 0 };
  stimActive = false;
  frequencyHz = 80;
  lastTelemetryUs: number | null = null;
  frameCount = 0;
  malformedCount = 0;
  events: EventEntry[] = [];
  trail: TrailPoint[] = [];
  chartAh: number[] = [];
  chartAlat: number[] = [];
  chartAv: number[] = [];
  pitchHistory: number[] = [];

  private pending = new Map<number, EventEntry>();
  private nextSeq = 1;
  private trailX = 0;
  private trailY = 0;
  private trailSpeed = 2.0;
  private now: () => number;

  constructor(now: () => number = () => Date.now()) {
    this.now = now;
  }

  adjustFrequency(delta: number): void {
    this.frequencyHz = Math.max(
      FREQ_MIN,
      Math.min(FREQ_MAX, this.frequencyHz + delta),
    );
  }

  /** Build a stimulation request frame, or null when disconnected. */
  fire(target: StimTarget): Buffer | null {
    if (this.connection !== "connected") return null;
    const seq = this.nextSeq;
    this.nextSeq = (this.nextSeq + 1) & 0xffff;
    const frame = encode(
      {
        kind: "stim_request",
        target,
        freqHz: Math.round(this.frequencyHz),
        durationMs: 500,
        amplitudeMv: 3000,
        pulseWidthUs: 3000,
      },
      seq,
    );
    const entry: EventEntry = {
      wallMs: this.now(),
      text: `fire ${StimTarget[target]} @ ${Math.round(this.frequencyHz)} Hz`,
      status: "pending",
      seq,
    };
    this.events.push(entry);
    this.pending.set(seq, entry);
    return frame;
  }

  commandCounts(): { fired: number; acked: number; lost: number } {
    let fired = 0;
    let acked = 0;
    let lost = 0;
    for (const e of this.events) {
      if (e.seq === undefined) continue;
      fired++;
      if (e.status === "acked") acked++;
      if (e.status === "lost") lost++;
    }
    return { fired, acked, lost };
  }

  ingest(frame: DecodedFrame): void {
    this.frameCount++;
    const msg: Message = frame.message;
    switch (msg.kind) {
      case "imu": {
        const quat: [number, number, number, number] = [
          msg.quat[0] * QUAT_LSB,
          msg.quat[1] * QUAT_LSB,
          msg.quat[2] * QUAT_LSB,
          msg.quat[3] * QUAT_LSB,
        ];
        const n = Math.hypot(...quat) || 1;
        const q: [number, number, number, number] = [
          quat[0] / n,
          quat[1] / n,
          quat[2] / n,
          quat[3] / n,
        ];
        this.attitude = quatToEuler(q);
        const f: [number, number, number] = [
          msg.accel[0] * ACCEL_LSB,
          msg.accel[1] * ACCEL_LSB,
          msg.accel[2] * ACCEL_LSB,
        ];
        const world = bodyToWorld(q, f);
        const a: [number, number, number] = [
          world[0],
          world[1],
          world[2] - GRAVITY,
        ];
        const yawRad = (this.attitude.yaw * Math.PI) / 180;
        const hx = Math.sin(yawRad);
        const hy = Math.cos(yawRad);
        this.accel = {
          ah: a[0] * hx + a[1] * hy,
          alat: -a[0] * hy + a[1] * hx,
          av: a[2],
        };
        this.pushChart(this.accel);
        this.pitchHistory.push(this.attitude.pitch);
        if (this.pitchHistory.length > 12000) this.pitchHistory.shift();
        this.advanceTrail(msg.tUs, hx, hy);
        this.lastTelemetryUs = msg.tUs;
        break;
      }
      case "marker":
        this.stimActive = msg.on;
        this.events.push({
          wallMs: this.now(),
          text: `stimulation ${msg.on ? "ON" : "OFF"}`,
          status: "info",
        });
        break;
      case "stim_ack": {
        const entry = this.pending.get(msg.seq);
        if (entry && entry.status === "pending") {
          entry.status = "acked";
          this.pending.delete(msg.seq);
        }
        break;
      }
      case "heartbeat":
        break;
      case "stim_request":
        break; // echoes are not expected on this side
    }
    if (this.events.length > 200) {
      this.events.splice(0, this.events.length - 200);
    }
  }

  noteMalformed(count: number): void {
    this.malformedCount += count;
  }

  /** Mark pending commands older than the timeout as lost. */
  sweepPending(): void {
    const now = this.now();
    for (const [seq, entry] of this.pending) {
      if (now - entry.wallMs > ACK_TIMEOUT_MS) {
        entry.status = "lost";
        this.pending.delete(seq);
      }
    }
  }

  private pushChart(a: { ah: number; alat: number; av: number }): void {
    this.chartAh.push(a.ah);
    this.chartAlat.push(a.alat);
    this.chartAv.push(a.av);
    for (const c of [this.chartAh, this.chartAlat, this.chartAv]) {
      if (c.length > CHART_CAP) c.shift();
    }
  }

  private advanceTrail(tUs: number, hx: number, hy: number): void {
    const dt =
      this.lastTelemetryUs === null
        ? 0.01
        : Math.max(0, (tUs - this.lastTelemetryUs) / 1e6);
    this.trailSpeed = Math.max(
      0,
      Math.min(4, this.trailSpeed + this.accel.ah * dt),
    );
    this.trailX += this.trailSpeed * hx * dt;
    this.trailY += this.trailSpeed * hy * dt;
    this.trail.push({ x: this.trailX, y: this.trailY, stim: this.stimActive });
    if (this.trail.length > TRAIL_CAP) this.trail.shift();
  }
}
