"""`cyborg sim` command line: batch runs, analysis, live serving, replay.

Exit codes: 0 success, 1 validation error, 2 environment error. With
--json a single machine-readable object goes to stdout; progress and
warnings go to stderr.

Experiment layout (one directory per experiment):
    plan.json        the executed plan
    trials/          per-trial meta/imu/mocap (and optional truth) files
    frames.bin       live-mode wire log (serve)
    report_imu.json  pooled statistics (analyze)
    induced_imu.csv  per-trial induced-response table
    figures/         per-channel frequency panels with 95% CI
"""

from __future__ import annotations

import json
import signal
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .analysis import analyze_trials, write_analysis
from .controller import ControlGoal
from .dose import DEFAULT_NOISE, NO_NOISE
from .dynamics import TrialProtocol, TrimConfig, run_trial
from .records import load_trial, save_trial, trial_stems
from .replay import rebuild_trials
from .sensors import NoiseConfig, ZERO_NOISE
from .server import Scenario, SimServer
from .stimulus import StimCommand, StimTarget, StimulusError

EXIT_VALIDATION = 1
EXIT_ENVIRONMENT = 2


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    """Batch experiment: beetles x trials over target/frequency
    conditions, fully seeded."""

    beetles: int = 10
    trials_per_condition: int = 510
    targets: tuple[StimTarget, ...] = (StimTarget.LEFT, StimTarget.RIGHT,
                                       StimTarget.BOTH)
    freq_kind: str = "uniform"           # uniform | grid
    freq_lo: float = 63.0
    freq_hi: float = 100.0
    freq_values: tuple[float, ...] = ()
    seed: int = 0
    dose_noise: str = "default"          # default | off
    sensor_noise: str = "default"        # default | off
    save_truth: bool = False

    def __post_init__(self) -> None:
        if self.beetles < 1:
            raise PlanError("need at least one beetle")
        if self.trials_per_condition < 1:
            raise PlanError("need at least one trial per condition")
        if self.freq_kind not in ("uniform", "grid"):
            raise PlanError(f"unknown frequency sampling {self.freq_kind!r}")
        if self.freq_kind == "grid" and not self.freq_values:
            raise PlanError("grid sampling needs freq_values")
        for f in (self.freq_lo, self.freq_hi, *self.freq_values):
            if not 40.0 <= f <= 100.0:
                raise PlanError(
                    f"frequency {f} Hz outside the validated 40-100 range")
        if self.dose_noise not in ("default", "off"):
            raise PlanError("dose_noise must be 'default' or 'off'")
        if self.sensor_noise not in ("default", "off"):
            raise PlanError("sensor_noise must be 'default' or 'off'")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        doc = json.loads(text)
        if "targets" in doc:
            doc["targets"] = tuple(StimTarget[t.upper()]
                                   for t in doc["targets"])
        freq = doc.pop("frequency", None)
        if freq:
            doc["freq_kind"] = freq.get("kind", "uniform")
            doc["freq_lo"] = freq.get("lo", 63.0)
            doc["freq_hi"] = freq.get("hi", 100.0)
            doc["freq_values"] = tuple(freq.get("values", ()))
        return cls(**doc)

    def to_json(self) -> str:
        doc = {
            "beetles": self.beetles,
            "trials_per_condition": self.trials_per_condition,
            "targets": [t.name.lower() for t in self.targets],
            "frequency": ({"kind": "grid",
                           "values": list(self.freq_values)}
                          if self.freq_kind == "grid" else
                          {"kind": "uniform", "lo": self.freq_lo,
                           "hi": self.freq_hi}),
            "seed": self.seed,
            "dose_noise": self.dose_noise,
            "sensor_noise": self.sensor_noise,
            "save_truth": self.save_truth,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def run_plan(plan: ExperimentPlan, out_dir: Path,
             progress=None) -> dict:
    """Execute every trial of a plan; returns summary counts."""
    trials_dir = out_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "plan.json").write_text(plan.to_json() + "\n")

    dose_noise = DEFAULT_NOISE if plan.dose_noise == "default" else NO_NOISE
    sensor_noise = (NoiseConfig() if plan.sensor_noise == "default"
                    else ZERO_NOISE)
    trim = TrimConfig()
    total = len(plan.targets) * plan.trials_per_condition
    done = 0
    truncated = 0
    for t_idx, target in enumerate(plan.targets):
        freq_rng = np.random.default_rng((plan.seed, 0xF7E9, t_idx))
        for i in range(plan.trials_per_condition):
            if plan.freq_kind == "uniform":
                freq = float(freq_rng.uniform(plan.freq_lo, plan.freq_hi))
            else:
                freq = plan.freq_values[i % len(plan.freq_values)]
            trial_seed = int(np.random.SeedSequence(
                (plan.seed, t_idx, i)).generate_state(1)[0])
            cmd = StimCommand(target, freq)
            proto = TrialProtocol(command=cmd, seed=trial_seed)
            rec = run_trial(trim, proto, dose_noise=dose_noise,
                            sensor_noise=sensor_noise,
                            beetle_id=i % plan.beetles, trial_id=i,
                            keep_truth=plan.save_truth)
            save_trial(rec, trials_dir,
                       stem=f"{target.name.lower()}_{i:05d}",
                       include_truth=plan.save_truth)
            truncated += int(rec.meta.truncated)
            done += 1
            if progress and done % 100 == 0:
                progress(done, total)
    return {"trials": done, "truncated": truncated,
            "trials_dir": str(trials_dir)}


@click.group()
def main() -> None:
    """Cyborg-beetle flight experiments."""


@main.group()
def sim() -> None:
    """Simulation: run batches, analyze logs, serve live, replay."""


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@sim.command("run")
@click.option("--plan", "plan_path", type=click.Path(exists=True,
                                                     dir_okay=False),
              help="Experiment plan JSON; omitted = default batch.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--seed", type=int, default=None,
              help="Override the plan seed.")
@click.option("--json", "json_out", is_flag=True)
def cmd_run(plan_path, out_dir, seed, json_out) -> None:
    """Run a batch of stimulation trials to trial logs."""
    try:
        plan = (ExperimentPlan.from_json(Path(plan_path).read_text())
                if plan_path else ExperimentPlan())
        if seed is not None:
            plan = ExperimentPlan.from_json(json.dumps(
                {**json.loads(plan.to_json()), "seed": seed}))
    except (PlanError, StimulusError, ValueError, KeyError) as e:
        _fail(EXIT_VALIDATION, f"invalid plan: {e}")
        return
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        _fail(EXIT_ENVIRONMENT, f"output directory not writable: {e}")
        return

    def progress(done, total):
        click.echo(f"  {done}/{total} trials", err=True)

    t0 = time.time()
    try:
        summary = run_plan(plan, out, progress=progress)
    except StimulusError as e:
        _fail(EXIT_VALIDATION, str(e))
        return
    summary["elapsed_s"] = round(time.time() - t0, 2)
    if json_out:
        click.echo(json.dumps(summary, sort_keys=True))
    else:
        click.echo(f"ran {summary['trials']} trials "
                   f"({summary['truncated']} truncated) in "
                   f"{summary['elapsed_s']}s -> {summary['trials_dir']}")


@sim.command("analyze")
@click.argument("log_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default=None, help="Defaults to LOG_DIR.")
@click.option("--source", type=click.Choice(["imu", "mocap", "both"]),
              default="imu")
@click.option("--json", "json_out", is_flag=True)
def cmd_analyze(log_dir, out_dir, source, json_out) -> None:
    """Analyze trial logs: induced responses, statistics, figure CSVs."""
    log = Path(log_dir)
    out = Path(out_dir) if out_dir else log
    trials_dir = log / "trials" if (log / "trials").is_dir() else log
    stems = trial_stems(trials_dir)
    if not stems:
        _fail(EXIT_VALIDATION, f"no trials found under {trials_dir}")
        return
    records = []
    load_warnings = 0
    for stem in stems:
        try:
            records.append(load_trial(trials_dir, stem))
        except (OSError, ValueError) as e:
            load_warnings += 1
            click.echo(f"warning: skipping {stem}: {e}", err=True)
    sources = ["imu", "mocap"] if source == "both" else [source]
    outputs = {}
    for src in sources:
        result = analyze_trials(records, source=src)
        result.report["n_warnings"] += load_warnings
        for w in result.warnings:
            click.echo(f"warning: {w}", err=True)
        outputs[src] = write_analysis(out, result, suffix=src)
        outputs[src]["report_data"] = result.report
    if json_out:
        click.echo(json.dumps(outputs, sort_keys=True))
    else:
        for src, paths in outputs.items():
            rep = paths["report_data"]
            click.echo(f"[{src}] {rep['n_trials']} trials, "
                       f"{rep['n_excluded']} excluded, "
                       f"{rep['n_warnings']} warnings")
            for stat, v in rep.get("spearman", {}).items():
                click.echo(f"    {stat}: rho={v['rho']:+.3f} "
                           f"p={v['p']:.2e} n={v['n']}")
            click.echo(f"    report: {paths['report']}")


@sim.command("serve")
@click.option("--port", type=int, default=0,
              help="TCP port (0 = ephemeral).")
@click.option("--time-scale", type=float, default=1.0)
@click.option("--scenario", "scenario_path",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default=".", help="Where frames.bin is written.")
@click.option("--duration", type=float, default=None,
              help="Stop after this many wall seconds (default: run "
                   "until interrupted).")
@click.option("--json", "json_out", is_flag=True)
def cmd_serve(port, time_scale, scenario_path, out_dir, duration,
              json_out) -> None:
    """Serve the live simulator over the wire protocol."""
    scenario = Scenario()
    if scenario_path:
        try:
            scenario = _scenario_from_json(Path(scenario_path).read_text())
        except (ValueError, KeyError) as e:
            _fail(EXIT_VALIDATION, f"invalid scenario: {e}")
            return
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        server = SimServer(port=port, scenario=scenario,
                           time_scale=time_scale,
                           frame_log=out / "frames.bin")
    except OSError as e:
        _fail(EXIT_ENVIRONMENT, f"cannot bind port {port}: {e}")
        return
    server.start()
    info = {"port": server.port, "frames": str(out / "frames.bin"),
            "time_scale": time_scale}
    if json_out:
        click.echo(json.dumps(info, sort_keys=True), nl=True)
    else:
        click.echo(f"serving on 127.0.0.1:{server.port} "
                   f"(time scale {time_scale}x), frames -> "
                   f"{out / 'frames.bin'}")
    sys.stdout.flush()
    try:
        if duration is not None:
            time.sleep(duration)
        else:
            signal.pause()
    except KeyboardInterrupt:
        pass
    finally:
        # a second interrupt during teardown should not abort cleanup
        signal.signal(signal.SIGINT, signal.SIG_IGN)
        server.stop()


def _scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    kwargs = {}
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "start_heading_deg" in doc:
        kwargs["start_heading_deg"] = doc["start_heading_deg"]
    if doc.get("dose_noise", "off") == "default":
        kwargs["dose_noise"] = DEFAULT_NOISE
    if "trim" in doc:
        kwargs["trim"] = TrimConfig(**doc["trim"])
    if doc.get("goal"):
        kwargs["goal"] = ControlGoal(**doc["goal"])
    if "enforce_arena" in doc:
        kwargs["enforce_arena"] = bool(doc["enforce_arena"])
    return Scenario(**kwargs)


@sim.command("replay")
@click.argument("frame_log", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              required=True)
@click.option("--json", "json_out", is_flag=True)
def cmd_replay(frame_log, out_dir, json_out) -> None:
    """Rebuild trials from a wire log and analyze them."""
    data = Path(frame_log).read_bytes()
    result = rebuild_trials(data)
    for e in result.errors:
        click.echo(f"warning: {e.code.value} at byte offset {e.offset}"
                   + (f" ({e.detail})" if e.detail else ""), err=True)
    for w in result.warnings:
        click.echo(f"warning: {w}", err=True)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        _fail(EXIT_ENVIRONMENT, f"output directory not writable: {e}")
        return
    analysis = analyze_trials(result.trials, source="imu")
    analysis.report["n_warnings"] += len(result.warnings)
    analysis.report["decode_errors"] = [
        {"code": e.code.value, "offset": e.offset} for e in result.errors]
    paths = write_analysis(out, analysis, suffix="imu")
    summary = {
        "frames": result.frame_count,
        "trials": len(result.trials),
        "decode_errors": len(result.errors),
        "warnings": len(result.warnings),
        **paths,
    }
    if json_out:
        click.echo(json.dumps(summary, sort_keys=True))
    else:
        click.echo(f"replayed {summary['frames']} frames -> "
                   f"{summary['trials']} trials "
                   f"({summary['decode_errors']} decode errors) -> "
                   f"{paths['report']}")


if __name__ == "__main__":
    main()
