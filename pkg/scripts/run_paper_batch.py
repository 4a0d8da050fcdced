#!/usr/bin/env python3
"""Run the desk-scale default experiment and print the pooled report.

Equivalent to:
    cyborg sim run --out <dir>
    cyborg sim analyze <dir> --source both

but callable as a single script with timing, for quick checks that the
calibrated batch still lands on the published rank correlations.
"""

import argparse
import json
import time
from pathlib import Path

from cyborg_beetle.analysis import analyze_trials, write_analysis
from cyborg_beetle.cli import ExperimentPlan, run_plan
from cyborg_beetle.dose import CALIBRATION_TARGETS
from cyborg_beetle.records import load_trial, trial_stems


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="paper_batch")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=510,
                    help="trials per condition")
    args = ap.parse_args()

    out = Path(args.out)
    plan = ExperimentPlan(seed=args.seed,
                          trials_per_condition=args.trials)
    t0 = time.time()
    summary = run_plan(plan, out,
                       progress=lambda d, t: print(f"  {d}/{t}", end="\r"))
    print(f"\nran {summary['trials']} trials in {time.time() - t0:.0f}s")

    records = [load_trial(out / "trials", s)
               for s in trial_stems(out / "trials")]
    for source in ("imu", "mocap"):
        result = analyze_trials(records, source=source)
        paths = write_analysis(out, result, suffix=source)
        print(f"[{source}] report -> {paths['report']}")
        for stat, vals in result.report["spearman"].items():
            target = CALIBRATION_TARGETS.get(stat)
            mark = ""
            if source == "imu" and target is not None:
                mark = ("  (target {:+.2f}, {})".format(
                    target,
                    "ok" if abs(vals["rho"] - target) <= 0.1 else "OFF"))
            print(f"    {stat:14s} rho={vals['rho']:+.3f} "
                  f"p={vals['p']:.2e} n={vals['n']}{mark}")


if __name__ == "__main__":
    main()
