"""JSON Lines run log: one ``run`` header, one ``frame`` record per frame, one ``summary``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import TraceError
from ..streaming import StreamConfig, StreamReport

RUNLOG_VERSION = 1


def _dump(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


@dataclass
class RunLog:
    config: StreamConfig
    trace_hash: str
    frames: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @classmethod
    def from_report(cls, report: StreamReport) -> "RunLog":
        return cls(
            config=report.config,
            trace_hash=report.trace_hash,
            frames=[log.to_record() for log in report.logs],
            summary={
                "type": "summary",
                "frames": len(report.logs),
                "peak_live": report.peak_live,
                "peak_bytes": report.peak_bytes,
                "final_live": report.live_timeline[-1] if report.live_timeline else 0,
            },
        )

    def lines(self) -> list[str]:
        head = {"type": "run", "version": RUNLOG_VERSION, "trace_hash": self.trace_hash, "config": self.config.to_record()}
        return [_dump(head), *(_dump(r) for r in self.frames), _dump(self.summary)]

    def serialize(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.serialize())

    @property
    def strategy(self) -> str:
        return self.config.strategy.value


def parse_runlog(text: str) -> RunLog:
    records = []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"invalid JSON in run log: {exc.msg}", no) from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise TraceError("run log record lacks a type", no)
        records.append((no, rec))
    if not records or records[0][1]["type"] != "run":
        raise TraceError("run log must start with a run record", 1)
    head = records[0][1]
    try:
        cfg = StreamConfig.from_record(head["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"bad run config: {exc}", records[0][0]) from None
    log = RunLog(cfg, head.get("trace_hash", ""))
    for no, rec in records[1:]:
        if rec["type"] == "frame":
            log.frames.append(rec)
        elif rec["type"] == "summary":
            log.summary = rec
        else:
            raise TraceError(f"unknown record type {rec['type']!r}", no)
    return log


def read_runlog(path) -> RunLog:
    return parse_runlog(Path(path).read_text())
