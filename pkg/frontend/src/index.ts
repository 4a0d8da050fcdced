/** Entry point: `node dist/index.js --port 9700 [--host H] [--headless]`. */

import { PilotConsole } from "./console";

function arg(name: string, fallback: string): string {
  const i = process.argv.indexOf(`--${name}`);
  return i >= 0 && i + 1 < process.argv.length
    ? process.argv[i + 1]
    : fallback;
}

function main(): void {
  const port = parseInt(arg("port", "9700"), 10);
  const host = arg("host", "127.0.0.1");
  const headless = process.argv.includes("--headless");
  const durationS = parseFloat(arg("duration", "0"));

  let renders = 0;
  const console_ = new PilotConsole({
    host,
    port,
    sink: headless ? () => renders++ : undefined,
  });
  console_.start();

  if (process.stdin.isTTY && !headless) {
    process.stdin.setRawMode(true);
    process.stdin.resume();
    process.stdin.on("data", (data: Buffer) => {
      const key = data.toString("utf8");
      if (key === "\x03" || key === "q") {
        console_.stop();
        process.exit(0);
      }
      console_.handleKey(key);
    });
  }

  if (durationS > 0) {
    setTimeout(() => {
      console_.stop();
      if (headless) {
        process.stdout.write(
          JSON.stringify({
            renders,
            frames: console_.state.frameCount,
            commands: console_.state.commandCounts(),
          }) + "\n",
        );
      }
      process.exit(0);
    }, durationS * 1000);
  }
}

main();
