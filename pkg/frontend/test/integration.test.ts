/**
 * Live integration against `cyborg sim serve`: sustained display rate
 * while consuming a full minute of 100 Hz telemetry, command bookkeeping
 * consistent with the server's frame log, and the pitch-up-then-recover
 * response on the attitude readout after firing both muscles at 100 Hz.
 *
 * Skips when the simulator CLI is not installed.
 */

import { spawn, spawnSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { PilotConsole } from "../src/console";
import { StimTarget, StreamDecoder } from "../src/wire";

const TIME_SCALE = 8; // 60 sim-seconds in 7.5 wall seconds
const RUN_WALL_S = 8.5;

const hasCli =
  spawnSync("cyborg", ["--help"], { timeout: 10_000 }).status === 0;

const d = hasCli ? describe : describe.skip;

d("pilot console against the live simulator", () => {
  let proc: ReturnType<typeof spawn>;
  let outDir: string;
  let port = 0;

  beforeAll(async () => {
    outDir = fs.mkdtempSync(path.join(os.tmpdir(), "console-it-"));
    proc = spawn(
      "cyborg",
      [
        "sim",
        "serve",
        "--port",
        "0",
        "--time-scale",
        String(TIME_SCALE),
        "--out",
        outDir,
        "--duration",
        "30",
        "--json",
      ],
      { stdio: ["ignore", "pipe", "inherit"] },
    );
    port = await new Promise<number>((resolve, reject) => {
      let buf = "";
      const timer = setTimeout(
        () => reject(new Error("server did not report a port")),
        15_000,
      );
      proc.stdout!.on("data", (data: Buffer) => {
        buf += data.toString("utf8");
        const line = buf.split("\n").find((l) => l.includes('"port"'));
        if (line) {
          clearTimeout(timer);
          resolve(JSON.parse(line).port as number);
        }
      });
    });
  }, 30_000);

  afterAll(() => {
    proc?.kill("SIGINT");
  });

  it(
    "sustains >= 20 Hz display over a minute of telemetry and keeps " +
      "command logs consistent",
    async () => {
      const consoleUi = new PilotConsole({
        host: "127.0.0.1",
        port,
        renderHz: 30,
        sink: () => undefined,
        reconnect: true,
      });
      const t0 = Date.now();
      consoleUi.start();

      // wait for the connection
      await waitFor(() => consoleUi.state.connection === "connected", 5000);

      // fire both muscles at 100 Hz early so recovery fits the window
      consoleUi.state.frequencyHz = 100;
      await sleep(300);
      expect(consoleUi.fire(StimTarget.Both)).toBe(true);
      // a second command later in the run, left muscle
      setTimeout(() => consoleUi.fire(StimTarget.Left), 2500);

      await sleep(RUN_WALL_S * 1000);
      consoleUi.stop();
      const elapsedS = (Date.now() - t0) / 1000;

      // display rate: sustained at >= 20 Hz across the whole run
      expect(consoleUi.renderCount / elapsedS).toBeGreaterThanOrEqual(20);

      // a full simulated minute of 100 Hz telemetry was consumed
      const telem = consoleUi.state.frameCount;
      expect(telem).toBeGreaterThan(5000);
      const simSpanS = (consoleUi.state.lastTelemetryUs ?? 0) / 1e6;
      expect(simSpanS).toBeGreaterThanOrEqual(60);

      // every fired command shows up acked in the event log
      const counts = consoleUi.state.commandCounts();
      expect(counts.fired).toBe(2);
      expect(counts.acked).toBe(2);
      expect(counts.lost).toBe(0);

      // pitch-up-then-recover on the attitude readout
      const pitch = consoleUi.state.pitchHistory;
      const peak = Math.max(...pitch);
      expect(peak).toBeGreaterThan(12);
      const tail = pitch.slice(-50);
      expect(Math.max(...tail)).toBeLessThan(peak - 8);

      // server frame log agrees on the command count
      proc.kill("SIGINT");
      await sleep(700);
      const log = fs.readFileSync(path.join(outDir, "frames.bin"));
      const { frames } = new StreamDecoder().feed(log);
      const requests = frames.filter(
        (f) => f.message.kind === "stim_request",
      );
      expect(requests.length).toBe(counts.fired);
      const acks = frames.filter((f) => f.message.kind === "stim_ack");
      expect(acks.length).toBe(counts.fired);
    },
    60_000,
  );
});

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

async function waitFor(cond: () => boolean, timeoutMs: number): Promise<void> {
  const end = Date.now() + timeoutMs;
  while (Date.now() < end) {
    if (cond()) return;
    await sleep(20);
  }
  throw new Error("condition not met in time");
}
