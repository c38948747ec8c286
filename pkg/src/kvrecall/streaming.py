"""Per-frame streaming pipeline.

For each incoming frame: pool its layer-0 descriptor, score it against the
live history, select a bounded context once, gather that context at every
layer, store the frame, file it in spatial memory, and thin the memory every
``interval_delta`` frames.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, InvariantError, TraceError
from .kv_store import KvEntry, KvStore
from .relevance import FrameDescriptor, RelevanceProfile, ScoringFunction, TokenBlock, pool_descriptor, score_batch
from .selection import SelectionConfig, SelectionResult, Strategy, select
from .spatial_memory import CompressionReport, MemoryConfig, PoseMeta, RegionKey, SpatialMemory, should_compress
from .trace import Trace

__all__ = [
    "StreamConfig",
    "FrameInput",
    "FrameLog",
    "StreamReport",
    "StreamEngine",
    "attention_replay",
    "synth_payload",
    "frame_inputs",
    "run_stream",
]


@dataclass(frozen=True)
class StreamConfig:
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    scoring: ScoringFunction = ScoringFunction.RAW_DOT
    strategy: Strategy = Strategy.SEGMENT
    layers: int = 4

    def __post_init__(self):
        object.__setattr__(self, "scoring", ScoringFunction(self.scoring))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.layers < 1:
            raise ValueError("layers must be >= 1")

    def to_record(self) -> dict:
        sel, mem = self.selection, self.memory
        return {
            "budget": sel.budget_n,
            "w_thre": sel.w_thre,
            "merge_gap": sel.merge_gap_delta,
            "seed": sel.rng_seed,
            "compress": mem.enabled,
            "compress_interval": mem.interval_delta,
            "deletion_ratio": mem.deletion_beta,
            "grid_k": mem.grid_k,
            "dir_bins": mem.dir_bins_d,
            "scoring": self.scoring.value,
            "strategy": self.strategy.value,
            "layers": self.layers,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "StreamConfig":
        return cls(
            selection=SelectionConfig(rec["budget"], rec["w_thre"], rec["merge_gap"], rec["seed"]),
            memory=MemoryConfig(
                rec["grid_k"], rec["dir_bins"], rec["compress_interval"], rec["deletion_ratio"], rec["compress"]
            ),
            scoring=rec["scoring"],
            strategy=rec["strategy"],
            layers=rec["layers"],
        )


@dataclass(eq=False)
class FrameInput:
    """One frame: either pooled ``descriptor`` or raw ``tokens`` (pooled on ingest)."""

    frame_id: int
    pose: PoseMeta
    payloads: list[bytes]
    descriptor: FrameDescriptor | None = None
    tokens: TokenBlock | None = None


@dataclass
class FrameLog:
    frame_id: int
    selection: SelectionResult
    min_score: float | None
    max_score: float | None
    region: RegionKey
    compression: CompressionReport | None
    live_after: int
    bytes_after: int
    context_digest: str

    def to_record(self) -> dict:
        return {
            "type": "frame",
            "frame_id": self.frame_id,
            "selection": self.selection.to_record(),
            "min_score": self.min_score,
            "max_score": self.max_score,
            "region": list(self.region),
            "compression": None if self.compression is None else self.compression.to_record(),
            "live_after": self.live_after,
            "bytes_after": self.bytes_after,
            "context_digest": self.context_digest,
        }


@dataclass
class StreamReport:
    config: StreamConfig
    logs: list[FrameLog] = field(default_factory=list)
    live_timeline: list[int] = field(default_factory=list)
    bytes_timeline: list[int] = field(default_factory=list)
    peak_live: int = 0  # includes counts just before a compression event
    peak_bytes: int = 0
    trace_hash: str = ""

    @property
    def strategy(self) -> Strategy:
        return self.config.strategy

    @property
    def compression_events(self) -> list[CompressionReport]:
        return [log.compression for log in self.logs if log.compression is not None]


def attention_replay(selected, query_payload: bytes, layer: int) -> str:
    """Deterministic stand-in for attending over a gathered context.

    ``selected`` is an iterable of ``(frame_id, payload)`` pairs in any order.
    Returns ``"<layer>:<id-set digest>:<payload digest>"``; the middle part
    depends only on the id set, so it agrees across layers.
    """
    pairs = sorted((int(fid), bytes(p)) for fid, p in selected)
    ids = hashlib.blake2b(digest_size=16)
    body = hashlib.blake2b(digest_size=16)
    body.update(layer.to_bytes(4, "little"))
    for fid, p in pairs:
        ids.update(fid.to_bytes(8, "little", signed=True))
        body.update(fid.to_bytes(8, "little", signed=True))
        body.update(len(p).to_bytes(8, "little"))
        body.update(p)
    body.update(b"q")
    body.update(query_payload)
    return f"{layer}:{ids.hexdigest()}:{body.hexdigest()}"


def synth_payload(frame_id: int, layer: int, size: int) -> bytes:
    """Deterministic opaque bytes standing in for one frame's KV at one layer."""
    if size == 0:
        return b""
    return hashlib.shake_128(f"kv/{frame_id}/{layer}".encode()).digest(size)


class StreamEngine:
    """Sequential frame-by-frame orchestrator over a KV store and spatial memory."""

    def __init__(self, cfg: StreamConfig, descriptor_shape: tuple[int, int] | None = None):
        self.cfg = cfg
        self.store = KvStore(cfg.layers)
        self.memory = SpatialMemory(cfg.memory)
        self.descriptor_shape = descriptor_shape
        self.frames_processed = 0
        self.peak_live = 0
        self._last_id = -1
        self._rows: dict[int, int] = {}
        self._keys = np.zeros((0, 0, 0))

    def _append_key(self, fid: int, k_bar: np.ndarray) -> None:
        n = len(self._rows)
        if n == self._keys.shape[0]:
            grown = np.zeros((max(16, 2 * n), *k_bar.shape))
            if n:
                grown[:n] = self._keys[:n]
            self._keys = grown
        self._keys[n] = k_bar
        self._rows[fid] = n

    def relevance(self, desc: FrameDescriptor) -> RelevanceProfile:
        live = self.store.live_ids()
        if not live:
            return RelevanceProfile(desc.frame_id, np.zeros(0, np.int64), np.zeros(0), self.cfg.scoring)
        keys = self._keys[[self._rows[f] for f in live]]
        return RelevanceProfile(desc.frame_id, live, score_batch(desc.q_bar, keys, self.cfg.scoring), self.cfg.scoring)

    def _descriptor(self, inp: FrameInput) -> FrameDescriptor:
        if inp.descriptor is not None:
            desc = inp.descriptor
        elif inp.tokens is not None:
            desc = pool_descriptor(inp.tokens)
        else:
            raise FrameError(f"frame {inp.frame_id} carries neither descriptor nor tokens")
        if desc.frame_id != inp.frame_id:
            raise FrameError(f"descriptor id {desc.frame_id} does not match frame {inp.frame_id}")
        if self.descriptor_shape is None:
            self.descriptor_shape = desc.shape
        elif desc.shape != tuple(self.descriptor_shape):
            raise FrameError(f"frame {inp.frame_id}: descriptor shape {desc.shape} != stream {self.descriptor_shape}")
        return desc

    def process_frame(self, inp: FrameInput) -> FrameLog:
        if inp.frame_id <= self._last_id:
            raise FrameError(f"frame id {inp.frame_id} arrives after {self._last_id}")
        if inp.pose.frame_id != inp.frame_id:
            raise FrameError(f"pose id {inp.pose.frame_id} does not match frame {inp.frame_id}")
        if len(inp.payloads) != self.cfg.layers:
            raise FrameError(f"frame {inp.frame_id}: expected {self.cfg.layers} payloads, got {len(inp.payloads)}")
        desc = self._descriptor(inp)

        prof = self.relevance(desc)
        sel = select(self.cfg.strategy, prof, self.cfg.selection)
        context = sel.context_ids
        if len(context) != min(self.cfg.selection.budget_n, len(prof)):
            raise InvariantError(f"frame {inp.frame_id}: context of {len(context)} breaks the budget")

        # one selection, reused at every layer
        digest = ""
        set_part = None
        for layer in range(self.cfg.layers):
            gathered = self.store.gather(context, layer)
            if len(gathered) != len(context):
                raise InvariantError(f"frame {inp.frame_id}: layer {layer} gathered {len(gathered)} payloads")
            digest = attention_replay(zip(context, gathered), inp.payloads[layer], layer)
            part = digest.split(":")[1]
            if set_part is not None and part != set_part:
                raise InvariantError(f"frame {inp.frame_id}: layer {layer} saw a different context")
            set_part = part

        self.store.insert(KvEntry(inp.frame_id, list(inp.payloads), desc.k_bar, inp.pose))
        self._append_key(inp.frame_id, desc.k_bar)
        region = self.memory.record(inp.pose)
        self._last_id = inp.frame_id
        self.frames_processed += 1
        self.peak_live = max(self.peak_live, len(self.store.live_ids()))

        report = None
        if should_compress(self.frames_processed, self.cfg.memory):
            report = self.memory.compress(self.store.live_ids(), self.store.anchor_id, inp.frame_id)
            self.store.tombstone(report.tombstoned_ids)

        stats = self.store.stats()
        return FrameLog(
            frame_id=inp.frame_id,
            selection=sel,
            min_score=float(prof.scores.min()) if len(prof) else None,
            max_score=float(prof.scores.max()) if len(prof) else None,
            region=region,
            compression=report,
            live_after=stats.live_count,
            bytes_after=stats.payload_bytes,
            context_digest=set_part or "",
        )


def frame_inputs(trace: Trace):
    """Yield :class:`FrameInput` objects for every frame of a parsed trace."""
    for fr in trace.frames:
        yield FrameInput(
            frame_id=fr.frame_id,
            pose=PoseMeta(fr.frame_id, fr.position, fr.direction),
            payloads=[synth_payload(fr.frame_id, layer, n) for layer, n in enumerate(fr.payload_sizes)],
            descriptor=FrameDescriptor(fr.frame_id, fr.q_bar, fr.k_bar),
        )


def run_stream(trace: Trace, cfg: StreamConfig) -> StreamReport:
    hdr = trace.header
    if hdr.layers != cfg.layers:
        raise TraceError(f"trace declares L={hdr.layers} but config expects {cfg.layers}")
    engine = StreamEngine(cfg, (hdr.heads, hdr.head_dim))
    report = StreamReport(cfg, trace_hash=hdr.trace_hash)
    for line_no, inp in enumerate(frame_inputs(trace), start=2):
        try:
            log = engine.process_frame(inp)
        except FrameError as exc:
            raise TraceError(str(exc), line_no) from None
        report.logs.append(log)
        report.live_timeline.append(log.live_after)
        report.bytes_timeline.append(log.bytes_after)
    report.peak_live = engine.peak_live
    report.peak_bytes = engine.store.stats().peak_payload_bytes
    return report
