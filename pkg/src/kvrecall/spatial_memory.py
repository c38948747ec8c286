"""Pose-indexed regions and periodic thinning of over-populated regions.

Frames are bucketed on a ``K x K x K`` grid over the grow-only bounding box
of all camera positions seen so far, crossed with ``D`` azimuth bins of the
optical axis. Region keys are frozen when a frame is inserted.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .selection import uniform_pick

__all__ = [
    "PoseMeta",
    "BoundingBox",
    "RegionKey",
    "MemoryConfig",
    "CompressionReport",
    "update_bbox",
    "assign_region",
    "should_compress",
    "compress",
    "SpatialMemory",
]


@dataclass(frozen=True, eq=False)
class PoseMeta:
    frame_id: int
    position: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(-1)
        d = np.asarray(self.direction, dtype=np.float64).reshape(-1)
        if p.shape != (3,) or d.shape != (3,):
            raise ValueError("position and direction must be 3-vectors")
        if not (np.isfinite(p).all() and np.isfinite(d).all()):
            raise ValueError("pose contains non-finite values")
        scale = float(np.abs(d).max())
        if scale == 0.0:
            raise ValueError(f"frame {self.frame_id}: zero direction vector")
        # pre-scale so subnormal inputs do not underflow the norm
        d = d / scale
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "direction", d / np.linalg.norm(d))


@dataclass(frozen=True, eq=False)
class BoundingBox:
    b_min: np.ndarray
    b_max: np.ndarray

    @classmethod
    def from_point(cls, p) -> "BoundingBox":
        p = np.asarray(p, dtype=np.float64)
        return cls(p.copy(), p.copy())

    def contains(self, other: "BoundingBox") -> bool:
        return bool((self.b_min <= other.b_min).all() and (self.b_max >= other.b_max).all())

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.b_max - self.b_min))


class RegionKey(NamedTuple):
    ix: int
    iy: int
    iz: int
    d_bin: int


@dataclass(frozen=True)
class MemoryConfig:
    grid_k: int = 3
    dir_bins_d: int = 4
    interval_delta: int = 200
    deletion_beta: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.grid_k < 1 or self.dir_bins_d < 1:
            raise ConfigError("grid_k and dir_bins_d must be >= 1")
        if self.interval_delta < 1:
            raise ConfigError("interval_delta must be >= 1")
        if not 0.0 <= self.deletion_beta < 1.0:
            raise ConfigError("deletion_beta must lie in [0, 1)")


@dataclass
class CompressionReport:
    trigger_frame: int
    mean_occupancy: float
    thinned_regions: list[tuple[RegionKey, int, int]] = field(default_factory=list)
    tombstoned_ids: list[int] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "trigger_frame": self.trigger_frame,
            "mean_occupancy": self.mean_occupancy,
            "thinned_regions": [[list(k), before, after] for k, before, after in self.thinned_regions],
            "tombstoned_ids": list(self.tombstoned_ids),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CompressionReport":
        return cls(
            trigger_frame=rec["trigger_frame"],
            mean_occupancy=rec["mean_occupancy"],
            thinned_regions=[(RegionKey(*k), b, a) for k, b, a in rec["thinned_regions"]],
            tombstoned_ids=list(rec["tombstoned_ids"]),
        )


def update_bbox(bbox: BoundingBox | None, p) -> BoundingBox:
    p = np.asarray(p, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError("position must be finite")
    if bbox is None:
        return BoundingBox.from_point(p)
    return BoundingBox(np.minimum(bbox.b_min, p), np.maximum(bbox.b_max, p))


def assign_region(pose: PoseMeta, bbox: BoundingBox, cfg: MemoryConfig) -> RegionKey:
    k = cfg.grid_k
    g = bbox.diameter / k
    if g > 0:
        cell = np.floor((pose.position - bbox.b_min) / g)
        ix, iy, iz = (int(min(max(c, 0), k - 1)) for c in cell)
    else:
        ix = iy = iz = 0
    d = pose.direction
    width = 2 * math.pi / cfg.dir_bins_d
    d_bin = math.floor((math.atan2(d[2], d[0]) + math.pi) / width)
    d_bin = min(max(d_bin, 0), cfg.dir_bins_d - 1)
    return RegionKey(ix, iy, iz, d_bin)


def should_compress(frames_processed: int, cfg: MemoryConfig) -> bool:
    if frames_processed < 0:
        raise ValueError("frames_processed must be non-negative")
    return cfg.enabled and frames_processed > 0 and frames_processed % cfg.interval_delta == 0


def compress(live_frames, anchor_id: int | None, cfg: MemoryConfig, trigger_frame: int = -1) -> CompressionReport:
    """Thin every region holding more than the mean number of compressible frames.

    ``live_frames`` is an iterable of ``(frame_id, RegionKey)``. Over-populated
    regions keep ``floor((1 - beta) * count)`` frames, evenly spaced in
    frame-id order; the anchor is never counted and never removed.
    """
    regions: dict[RegionKey, list[int]] = defaultdict(list)
    for fid, key in live_frames:
        if fid != anchor_id:
            regions[RegionKey(*key)].append(int(fid))
    if not regions:
        return CompressionReport(trigger_frame, 0.0)

    total = sum(len(v) for v in regions.values())
    n_regions = len(regions)
    report = CompressionReport(trigger_frame, total / n_regions)
    for key in sorted(regions):
        members = sorted(regions[key])
        before = len(members)
        # before > total / n_regions, kept in integers
        if before * n_regions <= total:
            continue
        after = math.floor((1.0 - cfg.deletion_beta) * before)
        keep = set(uniform_pick(members, after))
        report.thinned_regions.append((key, before, after))
        report.tombstoned_ids.extend(f for f in members if f not in keep)
    report.tombstoned_ids.sort()
    return report


class SpatialMemory:
    """Grow-only bounding box plus the frozen region key of every inserted frame."""

    def __init__(self, cfg: MemoryConfig):
        self.cfg = cfg
        self.bbox: BoundingBox | None = None
        self.regions: dict[int, RegionKey] = {}

    def record(self, pose: PoseMeta) -> RegionKey:
        if pose.frame_id in self.regions:
            raise ValueError(f"frame {pose.frame_id} already has a region")
        self.bbox = update_bbox(self.bbox, pose.position)
        key = assign_region(pose, self.bbox, self.cfg)
        self.regions[pose.frame_id] = key
        return key

    def occupancy(self, live_ids) -> dict[RegionKey, int]:
        counts: dict[RegionKey, int] = defaultdict(int)
        for fid in live_ids:
            counts[self.regions[fid]] += 1
        return dict(sorted(counts.items()))

    def compress(self, live_ids, anchor_id: int | None, trigger_frame: int) -> CompressionReport:
        return compress(((f, self.regions[f]) for f in live_ids), anchor_id, self.cfg, trigger_frame)
