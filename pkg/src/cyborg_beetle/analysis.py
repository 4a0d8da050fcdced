"""Batch analysis over saved trials: induced-response tables, rank
statistics, significance tests, and figure-ready CSV panels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dose import CALIBRATION_STATS, CHANNELS, contralateral_value
from .pipeline import PipelineError, TrialExcludedError, extract_induced, \
    write_induced_csv
from .records import TrialRecord
from .stats import StatsError, mean_ci95, one_sample_t, spearman
from .stimulus import StimTarget


@dataclass
class AnalysisResult:
    rows: list[dict]
    report: dict
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.report, indent=2, sort_keys=True)


def analyze_trials(records: Iterable[TrialRecord],
                   source: str = "imu") -> AnalysisResult:
    """Extract induced responses from every trial and pool the
    statistics the experiment reports: frequency/response and
    cross-channel Spearman correlations plus per-channel one-sample
    t-tests against zero."""
    rows: list[dict] = []
    warnings: list[str] = []
    for rec in records:
        meta = rec.meta
        row = dict(beetle_id=meta.beetle_id, trial_id=meta.trial_id,
                   target=meta.target, freq_hz=meta.frequency_hz,
                   excluded=False)
        if meta.truncated:
            row["excluded"] = True
            warnings.append(
                f"trial {meta.trial_id}: truncated (arena exit)")
            rows.append(row)
            continue
        try:
            resp = extract_induced(rec, source=source)
        except TrialExcludedError:
            row["excluded"] = True
            rows.append(row)
            continue
        except PipelineError as e:
            row["excluded"] = True
            warnings.append(f"trial {meta.trial_id}: {e}")
            rows.append(row)
            continue
        for ch in CHANNELS:
            row[ch] = resp[ch]
        rows.append(row)

    report = {
        "source": source,
        "n_trials": len(rows),
        "n_excluded": sum(1 for r in rows if r["excluded"]),
        "n_warnings": len(warnings),
        "spearman": spearman_stats(rows),
        "t_tests": t_test_stats(rows),
    }
    return AnalysisResult(rows=rows, report=report, warnings=warnings)


def _isnan(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _value(row: dict, channel: str):
    """Channel value in the contralateral-positive frame, or None when
    the source did not measure it."""
    if channel == "freq":
        return row["freq_hz"]
    v = row.get(channel)
    if _isnan(v):
        return None
    return contralateral_value(row["target"], channel, v)


def _included(rows: Sequence[dict]) -> list[dict]:
    return [r for r in rows if not r["excluded"] and r["target"] is not None]


def spearman_stats(rows: Sequence[dict]) -> dict:
    """The pooled rank-correlation battery (contralateral frame for
    mirrored channels); statistics whose channels the source does not
    measure are omitted."""
    usable = _included(rows)
    out = {}
    for stat, (x_ch, y_ch, targets) in CALIBRATION_STATS.items():
        xs, ys = [], []
        for row in usable:
            if row["target"] not in targets:
                continue
            x, y = _value(row, x_ch), _value(row, y_ch)
            if x is None or y is None:
                continue
            xs.append(x)
            ys.append(y)
        if len(xs) < 3:
            continue
        try:
            r = spearman(xs, ys)
        except StatsError:
            continue
        out[stat] = {"rho": r.rho, "p": r.p_value, "n": r.n}
    return out


def t_test_stats(rows: Sequence[dict]) -> dict:
    """One-sample t-test of each channel against zero, per target
    (mirrored channels in the contralateral frame)."""
    usable = _included(rows)
    out = {}
    for target in (StimTarget.LEFT, StimTarget.RIGHT, StimTarget.BOTH):
        sub = [r for r in usable if r["target"] is target]
        block = {}
        for ch in CHANNELS:
            vals = [v for v in (_value(r, ch) for r in sub)
                    if v is not None]
            if len(vals) < 2:
                continue
            try:
                res = one_sample_t(vals, 0.0)
            except StatsError:
                continue
            block[ch] = {"mean": float(np.mean(vals)), "t": res.statistic,
                         "p": res.p_value, "n": res.n}
        if block:
            out[target.name] = block
    return out


def figure_tables(rows: Sequence[dict], bin_hz: float = 5.0) -> dict:
    """Per-channel frequency-binned mean with 95% CI per target: the
    figure panels (induced value vs stimulation frequency)."""
    usable = _included(rows)
    panels: dict[str, list[dict]] = {ch: [] for ch in CHANNELS}
    for target in (StimTarget.LEFT, StimTarget.RIGHT, StimTarget.BOTH):
        sub = [r for r in usable if r["target"] is target]
        if not sub:
            continue
        for ch in CHANNELS:
            pairs = [(r["freq_hz"], r[ch]) for r in sub
                     if not _isnan(r.get(ch))]
            if not pairs:
                continue
            freqs = np.array([p[0] for p in pairs])
            vals = np.array([p[1] for p in pairs])
            lo = math.floor(freqs.min() / bin_hz) * bin_hz
            hi = math.ceil(freqs.max() / bin_hz) * bin_hz
            for e0 in np.arange(lo, hi, bin_hz):
                mask = (freqs >= e0) & (freqs < e0 + bin_hz)
                n = int(mask.sum())
                if n < 2:
                    continue
                mean, lo_band, hi_band = mean_ci95(
                    [[v] for v in vals[mask]])
                panels[ch].append({
                    "target": target.name,
                    "freq_bin_center": float(e0 + 0.5 * bin_hz),
                    "mean": mean[0],
                    "ci_lo": lo_band[0],
                    "ci_hi": hi_band[0],
                    "n": n,
                })
    return panels


def write_figure_csvs(directory: Path, panels: dict) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for ch, rows in panels.items():
        path = directory / f"panel_{ch}_vs_freq.csv"
        with open(path, "w") as f:
            f.write("target,freq_bin_center,mean,ci_lo,ci_hi,n\n")
            for r in rows:
                f.write(f"{r['target']},{r['freq_bin_center']:.9g},"
                        f"{r['mean']:.9g},{r['ci_lo']:.9g},"
                        f"{r['ci_hi']:.9g},{r['n']}\n")
        written.append(path)
    return written


def write_analysis(out_dir: Path | str, result: AnalysisResult,
                   suffix: str = "imu") -> dict[str, str]:
    """Write induced table + report + figure panels; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    induced_path = out / f"induced_{suffix}.csv"
    with open(induced_path, "w") as f:
        write_induced_csv(f, result.rows)
    report_path = out / f"report_{suffix}.json"
    report_path.write_text(result.to_json() + "\n")
    fig_dir = out / "figures"
    write_figure_csvs(fig_dir, figure_tables(result.rows))
    return {"induced": str(induced_path), "report": str(report_path),
            "figures": str(fig_dir)}
