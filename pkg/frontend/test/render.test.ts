import { describe, expect, it } from "vitest";

import { horizon, render, sparkline, trailMap } from "../src/render";
import { ConsoleState } from "../src/state";
import { DecodedFrame, Message } from "../src/wire";

function frame(message: Message): DecodedFrame {
  return { message, seq: 0, offset: 0 };
}

describe("sparkline", () => {
  it("maps the range onto block characters", () => {
    const s = sparkline([-2, 0, 2], 3, -2, 2);
    expect(s[0]).toBe("▁");
    expect(s[2]).toBe("█");
  });

  it("pads to the requested width", () => {
    expect(sparkline([1], 10, 0, 2)).toHaveLength(10);
  });
});

describe("horizon", () => {
  it("level flight puts the line in the middle row", () => {
    const rows = horizon(0, 0);
    const mid = Math.floor(rows.length / 2);
    expect(rows[mid]).toContain("-");
  });

  it("pitch up moves the horizon down the panel", () => {
    const up = horizon(25, 0);
    const groundRows = up.filter((r) => r.includes(".")).length;
    const level = horizon(0, 0).filter((r) => r.includes(".")).length;
    expect(groundRows).toBeLessThan(level);
  });
});

describe("trailMap", () => {
  it("renders an empty map before any motion", () => {
    const s = new ConsoleState(() => 0);
    const rows = trailMap(s);
    expect(rows).toHaveLength(11);
    expect(rows.join("")).not.toContain("@");
  });

  it("marks stimulated segments differently", () => {
    const s = new ConsoleState(() => 0);
    s.trail.push({ x: 0, y: 0, stim: false });
    s.trail.push({ x: 1, y: 0, stim: false });
    s.trail.push({ x: 2, y: 0, stim: true });
    s.trail.push({ x: 3, y: 0, stim: false }); // head moves past the burst
    const joined = trailMap(s).join("");
    expect(joined).toContain("*");
    expect(joined).toContain("o"); // stimulated marker (colored)
    expect(joined).toContain("@"); // current position
  });
});

describe("render", () => {
  it("renders a clean initial frame", () => {
    const s = new ConsoleState(() => 0);
    const out = render(s);
    expect(out).toContain("DISCONNECTED");
    expect(out).toContain("freq");
    expect(out).toContain("a_h");
  });

  it("reflects telemetry and stim state", () => {
    const s = new ConsoleState(() => 0);
    s.connection = "connected";
    s.ingest(frame({ kind: "marker", tUs: 0, on: true }));
    s.ingest(
      frame({
        kind: "imu",
        tUs: 10_000,
        accel: [0, 0, -1000],
        gyro: [0, 0, 0],
        quat: [32767, 0, 0, 0],
      }),
    );
    const out = render(s);
    expect(out).toContain("CONNECTED");
    expect(out).toContain("STIM");
    expect(out).toContain("stimulation ON");
  });

  it("shows the event lifecycle tags", () => {
    let now = 0;
    const s = new ConsoleState(() => now);
    s.connection = "connected";
    s.fire(1);
    now = 5000;
    s.sweepPending();
    const out = render(s);
    expect(out).toContain("lost");
    expect(out).toContain("fire Left");
  });
});
