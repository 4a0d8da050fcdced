/**
 * Pilot console: TCP link to the live simulator, keyboard firing,
 * >= 20 Hz render loop. Network ingestion happens on socket events and
 * only mutates the state store; the render timer reads snapshots, so a
 * stalled terminal never blocks telemetry. Reconnects with backoff.
 */

import * as net from "net";

import { render } from "./render";
import { ConsoleState } from "./state";
import { StimTarget, StreamDecoder } from "./wire";

export interface ConsoleOptions {
  host: string;
  port: number;
  renderHz?: number;
  /** headless: render into a counter instead of stdout (for tests) */
  sink?: (frame: string) => void;
  reconnect?: boolean;
}

export class PilotConsole {
  readonly state: ConsoleState;
  private decoder = new StreamDecoder();
  private socket: net.Socket | null = null;
  private renderTimer: NodeJS.Timeout | null = null;
  private sweepTimer: NodeJS.Timeout | null = null;
  private reconnectTimer: NodeJS.Timeout | null = null;
  private backoffMs = 250;
  private stopped = false;
  renderCount = 0;

  constructor(private opts: ConsoleOptions) {
    this.state = new ConsoleState();
  }

  start(): void {
    this.connect();
    const period = 1000 / (this.opts.renderHz ?? 30);
    this.renderTimer = setInterval(() => this.draw(), period);
    this.sweepTimer = setInterval(() => this.state.sweepPending(), 200);
  }

  stop(): void {
    this.stopped = true;
    if (this.renderTimer) clearInterval(this.renderTimer);
    if (this.sweepTimer) clearInterval(this.sweepTimer);
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.socket?.destroy();
    this.socket = null;
  }

  connect(): void {
    if (this.stopped) return;
    this.state.connection = "connecting";
    this.decoder = new StreamDecoder();
    const sock = net.createConnection(
      { host: this.opts.host, port: this.opts.port },
      () => {
        this.state.connection = "connected";
        this.backoffMs = 250;
      },
    );
    sock.on("data", (data: Buffer) => {
      const { frames, errors } = this.decoder.feed(data);
      if (errors.length) this.state.noteMalformed(errors.length);
      for (const f of frames) this.state.ingest(f);
    });
    const onGone = () => {
      if (this.state.connection !== "disconnected") {
        this.state.connection = "disconnected";
        this.state.events.push({
          wallMs: Date.now(),
          text: "connection lost",
          status: "info",
        });
      }
      this.scheduleReconnect();
    };
    sock.on("error", onGone);
    sock.on("close", onGone);
    this.socket = sock;
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.opts.reconnect === false) return;
    if (this.reconnectTimer) return;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.backoffMs = Math.min(this.backoffMs * 2, 5000);
      this.connect();
    }, this.backoffMs);
  }

  fire(target: StimTarget): boolean {
    const frame = this.state.fire(target);
    if (frame === null || this.socket === null) return false;
    this.socket.write(frame);
    return true;
  }

  handleKey(key: string): void {
    switch (key) {
      case "\x1b[D": // left arrow
        this.fire(StimTarget.Left);
        break;
      case "\x1b[C": // right arrow
        this.fire(StimTarget.Right);
        break;
      case "\x1b[B": // down arrow
        this.fire(StimTarget.Both);
        break;
      case "+":
      case "=":
      case "\x1b[A": // up arrow
        this.state.adjustFrequency(+1);
        break;
      case "-":
      case "_":
        this.state.adjustFrequency(-1);
        break;
    }
  }

  private draw(): void {
    this.renderCount++;
    const frame = render(this.state);
    if (this.opts.sink) {
      this.opts.sink(frame);
    } else {
      process.stdout.write("\x1b[2J\x1b[H" + frame + "\n");
    }
  }
}
