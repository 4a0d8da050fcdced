/**
 * Pure terminal renderer: state snapshot in, ANSI frame string out.
 * Widgets: status bar, artificial horizon with pitch ladder and roll
 * pointer, heading tape, frequency slider, top-down trail (stimulated
 * segments highlighted), three acceleration strip charts, event log.
 */

import { ConsoleState, EventEntry, FREQ_MAX, FREQ_MIN } from "./state";

const SPARKS = "▁▂▃▄▅▆▇█";
const RESET = "\x1b[0m";
const RED = "\x1b[31m";
const GREEN = "\x1b[32m";
const YELLOW = "\x1b[33m";
const CYAN = "\x1b[36m";

export function sparkline(values: number[], width: number, lo: number,
                          hi: number): string {
  const tail = values.slice(-width);
  let out = "";
  for (const v of tail) {
    const u = Math.max(0, Math.min(1, (v - lo) / (hi - lo)));
    out += SPARKS[Math.round(u * (SPARKS.length - 1))];
  }
  return out.padEnd(width, " ");
}

export function horizon(pitch: number, roll: number, rows = 7,
                        cols = 31): string[] {
  // one text row per 5 deg of pitch; the horizon line shifts down as
  // pitch rises and tilts with roll
  const lines: string[] = [];
  const mid = (rows - 1) / 2;
  const rollRad = (roll * Math.PI) / 180;
  for (let r = 0; r < rows; r++) {
    let line = "";
    for (let c = 0; c < cols; c++) {
      const dx = c - (cols - 1) / 2;
      // vertical offset of the horizon at this column, in rows
      const horizonRow = mid + pitch / 5 + (Math.tan(rollRad) * dx) / 4;
      if (Math.abs(r - horizonRow) < 0.5) {
        line += "-";
      } else if (r > horizonRow) {
        line += "."; // ground
      } else {
        line += " "; // sky
      }
    }
    const marker = r === Math.round(mid) ? "+" : "|";
    lines.push(marker + line + marker);
  }
  return lines;
}

export function trailMap(state: ConsoleState, rows = 11,
                         cols = 31): string[] {
  const grid: string[][] = Array.from({ length: rows }, () =>
    Array(cols).fill(" "),
  );
  if (state.trail.length >= 2) {
    const xs = state.trail.map((p) => p.x);
    const ys = state.trail.map((p) => p.y);
    const minX = Math.min(...xs);
    const maxX = Math.max(...xs);
    const minY = Math.min(...ys);
    const maxY = Math.max(...ys);
    const spanX = Math.max(1e-6, maxX - minX);
    const spanY = Math.max(1e-6, maxY - minY);
    const span = Math.max(spanX, spanY);
    for (const p of state.trail) {
      const c = Math.round(((p.x - minX) / span) * (cols - 1));
      const r = rows - 1 - Math.round(((p.y - minY) / span) * (rows - 1));
      if (r >= 0 && r < rows && c >= 0 && c < cols) {
        grid[r][c] = p.stim ? "S" : "*";
      }
    }
    const head = state.trail[state.trail.length - 1];
    const hc = Math.round(((head.x - minX) / span) * (cols - 1));
    const hr = rows - 1 - Math.round(((head.y - minY) / span) * (rows - 1));
    if (hr >= 0 && hr < rows && hc >= 0 && hc < cols) grid[hr][hc] = "@";
  }
  return grid.map(
    (row) =>
      "|" +
      row
        .map((ch) =>
          ch === "S" ? `${RED}o${RESET}` : ch === "@" ? `${CYAN}@${RESET}` : ch,
        )
        .join("") +
      "|",
  );
}

function eventLine(e: EventEntry): string {
  const tag =
    e.status === "acked"
      ? `${GREEN}ack ${RESET}`
      : e.status === "lost"
        ? `${RED}lost${RESET}`
        : e.status === "pending"
          ? `${YELLOW}... ${RESET}`
          : "    ";
  return `${tag} ${e.text}`;
}

export function render(state: ConsoleState, width = 80): string {
  const lines: string[] = [];
  const conn =
    state.connection === "connected"
      ? `${GREEN}CONNECTED${RESET}`
      : state.connection === "connecting"
        ? `${YELLOW}CONNECTING${RESET}`
        : `${RED}DISCONNECTED${RESET}`;
  const stim = state.stimActive ? `${RED}STIM${RESET}` : "    ";
  lines.push(
    `${conn}  ${stim}  frames ${state.frameCount}  bad ${state.malformedCount}`,
  );

  const a = state.attitude;
  lines.push(
    `yaw ${a.yaw.toFixed(1).padStart(7)}   pitch ${a.pitch
      .toFixed(1)
      .padStart(6)}   roll ${a.roll.toFixed(1).padStart(6)}  (deg)`,
  );

  const sliderWidth = 30;
  const u = (state.frequencyHz - FREQ_MIN) / (FREQ_MAX - FREQ_MIN);
  const knob = Math.round(u * (sliderWidth - 1));
  const slider =
    "[" +
    "=".repeat(knob) +
    "#" +
    "-".repeat(sliderWidth - 1 - knob) +
    `] ${Math.round(state.frequencyHz)} Hz`;
  lines.push(`freq ${slider}   keys: <- left  -> right  v both  +/- freq`);
  lines.push("");

  const hor = horizon(a.pitch, a.roll);
  const map = trailMap(state);
  lines.push("  attitude                     top-down trail");
  const rows = Math.max(hor.length, map.length);
  for (let i = 0; i < rows; i++) {
    const left = (hor[i] ?? "").padEnd(33);
    lines.push("  " + left + " " + (map[i] ?? ""));
  }
  lines.push("");
  lines.push(`a_h   ${sparkline(state.chartAh, 60, -2.0, 2.0)}`);
  lines.push(`a_lat ${sparkline(state.chartAlat, 60, -2.0, 2.0)}`);
  lines.push(`a_v   ${sparkline(state.chartAv, 60, -2.0, 2.0)}`);
  lines.push("");
  for (const e of state.events.slice(-6)) {
    lines.push("  " + eventLine(e));
  }
  return lines.map((l) => l.slice(0, width + 20)).join("\n");
}
