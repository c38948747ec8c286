"""``kvrecall`` command line: gen, replay, compare, stats.

Exit codes: 0 success, 1 usage error, 2 malformed input, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, InvariantError, StoreError, TraceError
from ..relevance import ScoringFunction
from ..selection import SelectionConfig, Strategy
from ..spatial_memory import MemoryConfig
from ..streaming import StreamConfig
from ..trace import read_trace
from . import replay
from .metrics import compare, metrics_csv, region_histogram, timeline_csv
from .runlog import read_runlog
from .synth import TrajectoryConfig, TrajectoryKind, generate_trace

log = logging.getLogger("kvrecall")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

SCORING_CHOICES = [f.value for f in ScoringFunction]
STRATEGY_CHOICES = [s.value for s in Strategy]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stream_flags(p: argparse.ArgumentParser) -> None:
    d_sel, d_mem = SelectionConfig(), MemoryConfig()
    p.add_argument("--budget", type=int, default=d_sel.budget_n, help="frame budget N incl. anchor")
    p.add_argument("--w-thre", type=float, default=d_sel.w_thre)
    p.add_argument("--merge-gap", type=int, default=d_sel.merge_gap_delta)
    p.add_argument("--compress-interval", type=int, default=d_mem.interval_delta, help="0 disables compression")
    p.add_argument("--deletion-ratio", type=float, default=d_mem.deletion_beta)
    p.add_argument("--grid-k", type=int, default=d_mem.grid_k)
    p.add_argument("--dir-bins", type=int, default=d_mem.dir_bins_d)
    p.add_argument("--scoring", choices=SCORING_CHOICES, default=ScoringFunction.RAW_DOT.value)
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, default=Strategy.SEGMENT.value)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kvrecall", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic trace")
    d = TrajectoryConfig()
    g.add_argument("--kind", choices=[k.value for k in TrajectoryKind], default=d.kind.value)
    g.add_argument("--frames", type=int, default=d.frame_count)
    g.add_argument("--extent", type=float, nargs=3, default=list(d.scene_extent), metavar=("X", "Y", "Z"))
    g.add_argument("--noise", type=float, default=d.noise_sigma)
    g.add_argument("--heads", type=int, default=d.heads)
    g.add_argument("--head-dim", type=int, default=d.head_dim)
    g.add_argument("--special", type=int, default=d.special_count)
    g.add_argument("--layers", type=int, default=d.layers)
    g.add_argument("--payload-bytes", type=int, default=d.payload_bytes_per_layer)
    g.add_argument("--visits", type=int, default=d.visits, help="revisits for --kind multipeak")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("replay", help="stream a trace under one policy")
    r.add_argument("--trace", required=True)
    _stream_flags(r)
    r.add_argument("--out", required=True, help="run log (JSON Lines)")
    r.add_argument("--metrics", help="optional metrics CSV")

    c = sub.add_parser("compare", help="tabulate several runs of one trace")
    c.add_argument("--trace", required=True)
    c.add_argument("runs", nargs="+", help="run logs")
    c.add_argument("--out", help="comparison CSV (default: stdout)")

    s = sub.add_parser("stats", help="summarize a trace or a run log")
    s.add_argument("--trace")
    s.add_argument("--log", dest="runlog")
    s.add_argument("--regions", help="write live-region occupancy CSV (needs --log)")
    s.add_argument("--timeline", help="write per-frame live/bytes CSV (needs --log)")
    s.add_argument("--out", help="JSON summary (default: stdout)")
    return parser


def _stream_config(args, layers: int) -> StreamConfig:
    enabled = args.compress_interval != 0
    return StreamConfig(
        selection=SelectionConfig(args.budget, args.w_thre, args.merge_gap, args.seed),
        memory=MemoryConfig(
            args.grid_k,
            args.dir_bins,
            args.compress_interval if enabled else MemoryConfig().interval_delta,
            args.deletion_ratio,
            enabled,
        ),
        scoring=args.scoring,
        strategy=args.strategy,
        layers=layers,
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    cfg = TrajectoryConfig(
        kind=args.kind,
        frame_count=args.frames,
        scene_extent=tuple(args.extent),
        noise_sigma=args.noise,
        rng_seed=args.seed,
        heads=args.heads,
        head_dim=args.head_dim,
        special_count=args.special,
        layers=args.layers,
        payload_bytes_per_layer=args.payload_bytes,
        visits=args.visits,
    )
    trace = generate_trace(cfg)
    digest = trace.write(args.out)
    log.info("wrote %d frames to %s (hash %s)", len(trace.frames), args.out, digest[:12])
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = read_trace(args.trace)
    cfg = _stream_config(args, trace.header.layers)
    runlog, summary = replay(trace, cfg)
    runlog.write(args.out)
    if args.metrics:
        Path(args.metrics).write_text(metrics_csv([summary]))
    log.info(
        "%s: %d frames, recall %.3f, coverage %.3f, peak live %d",
        summary.strategy,
        summary.frames,
        summary.recall_at_n,
        summary.segment_coverage,
        summary.peak_live,
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    trace = read_trace(args.trace)
    _emit(compare([read_runlog(p) for p in args.runs], trace), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    if not args.trace and not args.runlog:
        raise UsageError("stats needs --trace and/or --log")
    if (args.regions or args.timeline) and not args.runlog:
        raise UsageError("--regions/--timeline need --log")
    out: dict = {}
    if args.trace:
        t = read_trace(args.trace)
        h = t.header
        out["trace"] = {
            "frames": h.frame_count,
            "H": h.heads,
            "d_h": h.head_dim,
            "s": h.special_count,
            "L": h.layers,
            "payload_bytes": h.payload_bytes,
            "trace_hash": h.trace_hash,
            "meta": h.meta,
        }
    if args.runlog:
        rl = read_runlog(args.runlog)
        out["run"] = {"trace_hash": rl.trace_hash, "config": rl.config.to_record(), **rl.summary}
        out["run"].pop("type", None)
        if args.regions:
            Path(args.regions).write_text(region_histogram(rl))
        if args.timeline:
            Path(args.timeline).write_text(timeline_csv(rl))
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "replay": cmd_replay, "compare": cmd_compare, "stats": cmd_stats}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error already printed
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"kvrecall: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TraceError as exc:
        print(f"kvrecall: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantError, StoreError) as exc:
        print(f"kvrecall: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"kvrecall: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"kvrecall: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
