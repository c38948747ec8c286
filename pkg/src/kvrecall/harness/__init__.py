"""Synthetic traces, replay, metrics and the command-line harness."""

from ..errors import TraceError
from ..streaming import StreamConfig, run_stream
from ..trace import Trace
from .metrics import COLUMNS, MetricsSummary, compare, compute_metrics, frame_coverage, metrics_csv
from .runlog import RunLog, parse_runlog, read_runlog
from .synth import (
    OracleParams,
    TrajectoryConfig,
    TrajectoryKind,
    encode_poses,
    generate_trace,
    oracle_matrix,
    oracle_relevance,
    trajectory,
)


def replay(trace: Trace, cfg: StreamConfig) -> tuple[RunLog, MetricsSummary]:
    """Stream ``trace`` under ``cfg``; return the run log and its metrics."""
    if trace.header.layers != cfg.layers:
        raise TraceError(f"trace has L={trace.header.layers} layers, config expects {cfg.layers}")
    log = RunLog.from_report(run_stream(trace, cfg))
    return log, compute_metrics(log, trace)
