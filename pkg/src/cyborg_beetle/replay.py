"""Rebuild stimulation trials from a mirrored frame log.

The live server concatenates every frame verbatim into frames.bin. This
module decodes the log, pairs each stimulation marker interval with the
request that caused it, slices the telemetry stream into pre/stim/post
windows, and hands back trial records that feed the standard analysis.
CRC failures and other corruptions are reported with byte offsets;
trials whose windows are not fully covered come back as warnings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .protocol import DecodedFrame, DecodeFailure, ImuTelemetry, \
    StimMarker, StimRequest, StreamDecoder
from .records import ImuSeries, TrialMeta, TrialRecord


@dataclass
class ReplayResult:
    trials: list[TrialRecord]
    errors: list[DecodeFailure]
    warnings: list[str] = field(default_factory=list)
    frame_count: int = 0


def decode_frame_log(data: bytes) -> tuple[list[DecodedFrame],
                                           list[DecodeFailure]]:
    return StreamDecoder().feed(data)


def rebuild_trials(data: bytes, pre_ms: float = 150.0,
                   post_ms: float = 350.0) -> ReplayResult:
    """Reconstruct one trial per marker-on interval.

    The trial's stimulation parameters come from the last StimRequest
    decoded before the marker; telemetry is resliced onto a window with
    the onset at pre_ms (matching the batch trial layout)."""
    frames, errors = decode_frame_log(data)
    warnings: list[str] = []

    telemetry: list[ImuTelemetry] = [
        f.message for f in frames if isinstance(f.message, ImuTelemetry)]
    t_all = np.array([m.t_us / 1000.0 for m in telemetry])

    # marker intervals paired with the most recent request
    intervals: list[tuple[float, float, StimRequest | None]] = []
    last_request: StimRequest | None = None
    open_at: float | None = None
    open_req: StimRequest | None = None
    for f in frames:
        m = f.message
        if isinstance(m, StimRequest):
            last_request = m
        elif isinstance(m, StimMarker):
            if m.on and open_at is None:
                open_at = m.t_us / 1000.0
                open_req = last_request
            elif not m.on and open_at is not None:
                intervals.append((open_at, m.t_us / 1000.0, open_req))
                open_at = None
    if open_at is not None:
        warnings.append(
            f"marker interval opened at {open_at:.1f} ms never closed")

    trials: list[TrialRecord] = []
    for idx, (t_on, t_off, req) in enumerate(intervals):
        if req is None:
            warnings.append(
                f"marker at {t_on:.1f} ms has no preceding request")
            continue
        stim_ms = t_off - t_on
        w0 = t_on - pre_ms
        w1 = t_on + stim_ms + post_ms
        mask = (t_all >= w0 - 1e-6) & (t_all <= w1 + 1e-6)
        if not mask.any() or t_all[mask][0] > w0 + 20.0 or \
                t_all[mask][-1] < w1 - 20.0:
            warnings.append(
                f"trial {idx}: telemetry does not cover "
                f"[{w0:.0f}, {w1:.0f}] ms; skipped")
            continue
        chosen = [telemetry[i] for i in np.flatnonzero(mask)]
        imu = ImuSeries(
            t_ms=t_all[mask] - w0,
            accel_body=np.array([m.accel_si() for m in chosen]),
            gyro=np.array([m.gyro_si() for m in chosen]),
            quat=np.array([m.quat_si() for m in chosen]),
        )
        meta = TrialMeta(
            beetle_id=0,
            trial_id=idx,
            target=req.target,
            frequency_hz=float(req.freq_hz),
            seed=0,
            pre_ms=pre_ms,
            stim_ms=stim_ms,
            post_ms=post_ms,
        )
        trials.append(TrialRecord(meta=meta, imu=imu))

    return ReplayResult(trials=trials, errors=errors, warnings=warnings,
                        frame_count=len(frames))
