"""Run metrics recomputed purely from a run log and its trace.

A frame is *selective* when its candidate history (live frames minus the
anchor) is larger than ``budget - 1``, i.e. the policy actually had to choose.
Recall and segment coverage are averaged over selective frames only; both are
1.0 for a run without any.

CSV columns (frozen, in this order)::

    strategy, scoring, budget, trace_hash, frames, selective_frames,
    recall_at_n, segment_coverage, mean_context, max_context,
    final_live, mean_live, peak_live, peak_bytes,
    compression_events, tombstoned_total, compression_deltas

``compression_deltas`` lists frames tombstoned per event, ``;``-separated.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..errors import TraceError
from ..trace import Trace
from .runlog import RunLog
from .synth import oracle_matrix, oracle_params_of

__all__ = [
    "MetricsSummary",
    "COLUMNS",
    "frame_coverage",
    "compute_metrics",
    "metrics_csv",
    "live_timeline",
    "compare",
    "region_histogram",
    "timeline_csv",
]


@dataclass(frozen=True)
class MetricsSummary:
    strategy: str
    scoring: str
    budget: int
    trace_hash: str
    frames: int
    selective_frames: int
    recall_at_n: float
    segment_coverage: float
    mean_context: float
    max_context: int
    final_live: int
    mean_live: float
    peak_live: int
    peak_bytes: int
    compression_events: int
    tombstoned_total: int
    compression_deltas: str


COLUMNS = tuple(f.name for f in fields(MetricsSummary))


def frame_coverage(record: dict) -> float | None:
    """Fraction of detected segments holding at least one selected frame."""
    sel = record["selection"]
    spans = sel["segments"]
    if not spans:
        return None
    ids = np.asarray(sel["selected_ids"], dtype=np.int64)
    hit = sum(bool(((ids >= a) & (ids <= b)).any()) for a, b in spans)
    return hit / len(spans)


def live_timeline(log: RunLog) -> list[int]:
    return [int(r["live_after"]) for r in log.frames]


def compute_metrics(log: RunLog, trace: Trace) -> MetricsSummary:
    if log.trace_hash != trace.header.trace_hash:
        raise TraceError("run log and trace disagree on trace_hash")
    params = oracle_params_of(trace)
    pos, dirs = trace.positions, trace.directions
    row_of = {f.frame_id: i for i, f in enumerate(trace.frames)}
    sizes = {f.frame_id: sum(f.payload_sizes) for f in trace.frames}
    n_sel = log.config.selection.budget_n - 1

    live: list[int] = []
    dead: set[int] = set()
    recalls, coverages, contexts = [], [], []
    peak_live = peak_bytes = tombstoned_total = 0
    deltas: list[int] = []

    for rec in log.frames:
        fid = rec["frame_id"]
        sel = rec["selection"]
        anchor = sel["anchor_id"]
        cand = [f for f in live if f != anchor]
        chosen = sel["selected_ids"]
        contexts.append(len(chosen) + (anchor is not None))

        if len(cand) > n_sel and chosen:
            orc = oracle_matrix(pos, dirs, params, rows=[row_of[fid]])[0, [row_of[f] for f in cand]]
            # best n_sel by oracle, ties toward more recent frames
            order = np.lexsort((-np.asarray(cand), -orc))
            best = {cand[i] for i in order[: len(chosen)]}
            recalls.append(len(best.intersection(chosen)) / len(chosen))
            cov = frame_coverage(rec)
            if cov is not None:
                coverages.append(cov)

        live.append(fid)
        peak_live = max(peak_live, len(live))
        peak_bytes = max(peak_bytes, sum(sizes[f] for f in live))
        comp = rec.get("compression")
        if comp is not None:
            gone = comp["tombstoned_ids"]
            dead.update(gone)
            live = [f for f in live if f not in dead]
            deltas.append(len(gone))
            tombstoned_total += len(gone)

    timeline = live_timeline(log)
    cfg = log.config
    return MetricsSummary(
        strategy=cfg.strategy.value,
        scoring=cfg.scoring.value,
        budget=cfg.selection.budget_n,
        trace_hash=log.trace_hash,
        frames=len(log.frames),
        selective_frames=len(recalls),
        recall_at_n=float(np.mean(recalls)) if recalls else 1.0,
        segment_coverage=float(np.mean(coverages)) if coverages else 1.0,
        mean_context=float(np.mean(contexts)) if contexts else 0.0,
        max_context=max(contexts, default=0),
        final_live=timeline[-1] if timeline else 0,
        mean_live=float(np.mean(timeline)) if timeline else 0.0,
        peak_live=peak_live,
        peak_bytes=peak_bytes,
        compression_events=len(deltas),
        tombstoned_total=tombstoned_total,
        compression_deltas=";".join(str(d) for d in deltas),
    )


def metrics_csv(rows: list[MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
    return buf.getvalue()


def compare(logs: list[RunLog], trace: Trace) -> str:
    """One CSV row per run; every run must come from ``trace``."""
    for log in logs:
        if log.trace_hash != trace.header.trace_hash:
            raise TraceError(f"{log.strategy} run was produced from a different trace")
    return metrics_csv([compute_metrics(log, trace) for log in logs])


def region_histogram(log: RunLog) -> str:
    """CSV of live-frame counts per region key at the end of the run."""
    dead: set[int] = set()
    for rec in log.frames:
        if rec.get("compression"):
            dead.update(rec["compression"]["tombstoned_ids"])
    counts: dict[tuple, int] = {}
    for rec in log.frames:
        if rec["frame_id"] not in dead:
            key = tuple(rec["region"])
            counts[key] = counts.get(key, 0) + 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ix", "iy", "iz", "d_bin", "count"])
    for key in sorted(counts):
        w.writerow([*key, counts[key]])
    return buf.getvalue()


def timeline_csv(log: RunLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_id", "live_after", "bytes_after", "context", "segments_detected"])
    for rec in log.frames:
        sel = rec["selection"]
        ctx = len(sel["selected_ids"]) + (sel["anchor_id"] is not None)
        w.writerow([rec["frame_id"], rec["live_after"], rec["bytes_after"], ctx, sel["segments_detected"]])
    return buf.getvalue()
