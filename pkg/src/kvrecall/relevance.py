"""Frame descriptors and query/history relevance scoring.

Every reduction here is a strict left-to-right sum (heads outer, head
dimensions inner), implemented with ``np.cumsum`` so that a score computed for
one pair is bit-identical to the same pair scored inside a batch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScoringFunction",
    "TokenBlock",
    "FrameDescriptor",
    "RelevanceProfile",
    "pool_descriptor",
    "score",
    "score_batch",
    "profile",
]


class ScoringFunction(str, enum.Enum):
    RAW_DOT = "dot"
    COSINE = "cosine"
    NEG_L2 = "negl2"


@dataclass(frozen=True, eq=False)
class TokenBlock:
    """Per-frame query and key tokens of the first global attention block.

    ``queries`` and ``keys`` have shape ``(H, P, d_h)``; the first
    ``special_count`` token positions are camera/register tokens.
    """

    frame_id: int
    queries: np.ndarray
    keys: np.ndarray
    special_count: int = 0

    def __post_init__(self):
        q = np.asarray(self.queries, dtype=np.float64)
        k = np.asarray(self.keys, dtype=np.float64)
        if q.ndim != 3 or q.shape != k.shape:
            raise ValueError(f"queries/keys must share shape (H, P, d_h); got {q.shape} and {k.shape}")
        h, p, d = q.shape
        if h < 1 or d < 1:
            raise ValueError(f"need H >= 1 and d_h >= 1, got H={h}, d_h={d}")
        if self.special_count < 0:
            raise ValueError("special_count must be non-negative")
        if p <= self.special_count:
            raise ValueError(f"no patch tokens: P={p} <= special_count={self.special_count}")
        if not (np.isfinite(q).all() and np.isfinite(k).all()):
            raise ValueError("token block contains non-finite values")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "keys", k)


@dataclass(frozen=True, eq=False)
class FrameDescriptor:
    frame_id: int
    q_bar: np.ndarray  # (H, d_h)
    k_bar: np.ndarray  # (H, d_h)

    def __post_init__(self):
        q = np.asarray(self.q_bar, dtype=np.float64)
        k = np.asarray(self.k_bar, dtype=np.float64)
        if q.ndim != 2 or q.shape != k.shape:
            raise ValueError(f"descriptor shapes must agree as (H, d_h); got {q.shape} and {k.shape}")
        if not (np.isfinite(q).all() and np.isfinite(k).all()):
            raise ValueError("descriptor contains non-finite values")
        object.__setattr__(self, "q_bar", q)
        object.__setattr__(self, "k_bar", k)

    @property
    def shape(self) -> tuple[int, int]:
        return self.q_bar.shape


@dataclass(frozen=True, eq=False)
class RelevanceProfile:
    """Scores of one query frame against the live history, in frame-id order."""

    query_frame_id: int
    frame_ids: np.ndarray
    scores: np.ndarray
    scoring: ScoringFunction = ScoringFunction.RAW_DOT

    def __post_init__(self):
        ids = np.asarray(self.frame_ids, dtype=np.int64).reshape(-1)
        sc = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if ids.shape != sc.shape:
            raise ValueError("frame_ids and scores must have equal length")
        if ids.size > 1 and not (np.diff(ids) > 0).all():
            raise ValueError("history frame ids must be strictly increasing")
        if not np.isfinite(sc).all():
            raise ValueError("relevance scores must be finite")
        object.__setattr__(self, "frame_ids", ids)
        object.__setattr__(self, "scores", sc)

    def __len__(self) -> int:
        return int(self.frame_ids.size)

    def items(self) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.frame_ids, self.scores)]


def _seq_sum(x: np.ndarray) -> np.ndarray:
    """Sum over the last axis strictly in index order."""
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    return np.cumsum(x, axis=-1)[..., -1]


def _head_reduce(x: np.ndarray) -> np.ndarray:
    """(..., H, d_h) -> (...): dims summed inside each head, then heads summed."""
    return _seq_sum(_seq_sum(x))


def pool_descriptor(block: TokenBlock) -> FrameDescriptor:
    """Mean-pool patch tokens (positions ``s..P-1``) into per-head q/k descriptors."""
    s = block.special_count
    patch_q = block.queries[:, s:, :]
    patch_k = block.keys[:, s:, :]
    n = patch_q.shape[1]
    # sum over token positions in order, per head and dimension
    q_bar = np.cumsum(patch_q, axis=1)[:, -1, :] / n
    k_bar = np.cumsum(patch_k, axis=1)[:, -1, :] / n
    return FrameDescriptor(block.frame_id, q_bar, k_bar)


def score_batch(q_bar: np.ndarray, keys: np.ndarray, f: ScoringFunction) -> np.ndarray:
    """Score one query descriptor ``(H, d_h)`` against stacked keys ``(n, H, d_h)``."""
    q = np.asarray(q_bar, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if k.ndim == 2:
        k = k[None]
    if k.shape[1:] != q.shape:
        raise ValueError(f"descriptor shapes disagree: query {q.shape}, keys {k.shape[1:]}")
    n_heads = q.shape[0]
    f = ScoringFunction(f)

    if f is ScoringFunction.RAW_DOT:
        return _head_reduce(q * k) / n_heads

    if f is ScoringFunction.COSINE:
        num = _head_reduce(q * k)
        q_norm = np.sqrt(_head_reduce(q * q))
        k_norm = np.sqrt(_head_reduce(k * k))
        denom = q_norm * k_norm
        out = np.zeros_like(num)
        ok = denom > 0
        out[ok] = num[ok] / denom[ok]
        return out

    # NEG_L2: rescale by the largest |difference| so tiny differences never
    # underflow to an exact zero distance
    diff = q - k
    scale = np.abs(diff).reshape(diff.shape[0], -1).max(axis=1) if diff.size else np.zeros(k.shape[0])
    out = np.zeros(k.shape[0])
    nz = scale > 0
    if nz.any():
        scaled = diff[nz] / scale[nz, None, None]
        out[nz] = -scale[nz] * np.sqrt(_head_reduce(scaled * scaled) / n_heads)
    return out


def score(q_bar: np.ndarray, k_bar: np.ndarray, f: ScoringFunction = ScoringFunction.RAW_DOT) -> float:
    """Relevance of a single (query, key) descriptor pair."""
    q = np.asarray(q_bar, dtype=np.float64)
    k = np.asarray(k_bar, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 2:
        raise ValueError(f"descriptor shapes disagree: {q.shape} vs {k.shape}")
    return float(score_batch(q, k[None], f)[0])


def profile(
    query: FrameDescriptor,
    history: list[FrameDescriptor],
    f: ScoringFunction = ScoringFunction.RAW_DOT,
) -> RelevanceProfile:
    """Score ``query`` against every (live) history descriptor, preserving order."""
    if not history:
        return RelevanceProfile(query.frame_id, np.zeros(0, np.int64), np.zeros(0), ScoringFunction(f))
    ids = np.array([h.frame_id for h in history], dtype=np.int64)
    if ids.max() >= query.frame_id:
        raise ValueError("query frame id must exceed every history frame id")
    keys = np.stack([h.k_bar for h in history])
    return RelevanceProfile(query.frame_id, ids, score_batch(query.q_bar, keys, f), ScoringFunction(f))
