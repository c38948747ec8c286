"""Bounded-memory, query-driven KV-cache retrieval for streaming 3D reconstruction."""

from .errors import ConfigError, FrameError, InvariantError, KvRecallError, StoreError, TraceError
from .kv_store import CacheStats, KvEntry, KvStore
from .relevance import FrameDescriptor, RelevanceProfile, ScoringFunction, TokenBlock, pool_descriptor, profile, score
from .selection import (
    Segment,
    SelectionConfig,
    SelectionResult,
    Strategy,
    adaptive_threshold,
    adjust_budget,
    allocate_quotas,
    baseline_select,
    identify_segments,
    sample_within_segment,
    segment_sampling,
    select,
)
from .spatial_memory import (
    BoundingBox,
    CompressionReport,
    MemoryConfig,
    PoseMeta,
    RegionKey,
    SpatialMemory,
    assign_region,
    compress,
    should_compress,
    update_bbox,
)
from .streaming import FrameInput, FrameLog, StreamConfig, StreamEngine, StreamReport, attention_replay, run_stream
from .trace import Trace, TraceFrame, TraceHeader, parse_trace, read_trace

__version__ = "0.1.0"
