"""History frame selection under a fixed frame budget.

Segment Sampling works on positions ``0..n-1`` of the candidate history (the
live history with the anchor removed), in frame-id order:

1. adaptive threshold ``tau = mean + w_thre * std`` over the candidate scores;
2. segments = maximal runs with score > tau, runs whose gap is < delta merged;
3. per-segment quota proportional to the segment's peak score, clamped to
   ``[1, len(segment)]``;
4. peak frame plus evenly spaced members of each segment;
5. trim to the best ``n_sel`` by score, or top up with the best unselected.

Score ties are always broken toward the more recent frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .relevance import RelevanceProfile

__all__ = [
    "Strategy",
    "SelectionConfig",
    "Segment",
    "SelectionResult",
    "adaptive_threshold",
    "identify_segments",
    "allocate_quotas",
    "uniform_pick",
    "sample_within_segment",
    "top_n",
    "adjust_budget",
    "segment_sampling",
    "baseline_select",
    "select",
]


class Strategy(str, enum.Enum):
    SEGMENT = "segment"
    TOPK = "topk"
    RANDOM = "random"
    UNIFORM = "uniform"
    WINDOW = "window"
    PROB = "prob"


@dataclass(frozen=True)
class SelectionConfig:
    budget_n: int = 48
    w_thre: float = 0.3
    merge_gap_delta: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.budget_n < 1:
            raise ConfigError(f"budget_n must be >= 1, got {self.budget_n}")
        if self.merge_gap_delta < 0:
            raise ConfigError(f"merge_gap_delta must be >= 0, got {self.merge_gap_delta}")
        if not math.isfinite(self.w_thre):
            raise ConfigError("w_thre must be finite")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # inclusive
    peak_index: int
    peak_score: float

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, index: int) -> bool:
        return self.start <= index <= self.end


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of one selection.

    ``segments`` hold frame-id spans ``(first_id, last_id)`` of the detected
    segments; they are recorded for every strategy so coverage can be
    compared across policies on the same profile.
    """

    query_id: int
    anchor_id: int | None
    selected_ids: tuple[int, ...]
    strategy: Strategy
    segments_detected: int = 0
    tau: float | None = None
    segments: tuple[tuple[int, int], ...] = ()
    quotas: tuple[int, ...] = ()

    @property
    def context_ids(self) -> tuple[int, ...]:
        """Anchor plus selected ids, ascending: the frames attended to."""
        if self.anchor_id is None:
            return self.selected_ids
        return tuple(sorted((self.anchor_id, *self.selected_ids)))

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy.value,
            "anchor_id": self.anchor_id,
            "tau": self.tau,
            "segments_detected": self.segments_detected,
            "segments": [list(s) for s in self.segments],
            "quotas": list(self.quotas),
            "selected_ids": list(self.selected_ids),
        }


# ---------------------------------------------------------------------------
# pipeline steps
# ---------------------------------------------------------------------------


def adaptive_threshold(scores, w_thre: float) -> float:
    """``mean + w_thre * std`` with the population standard deviation."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot threshold an empty score list")
    return float(s.mean() + w_thre * s.std())


def identify_segments(scores, tau: float, delta: int) -> list[Segment]:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    s = np.asarray(scores, dtype=np.float64)
    above = s > tau
    if not above.any():
        return []

    # run boundaries from the padded edge signal
    edges = np.diff(np.concatenate(([0], above.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1

    spans: list[list[int]] = [[int(starts[0]), int(ends[0])]]
    for a, b in zip(starts[1:], ends[1:]):
        if a - spans[-1][1] - 1 < delta:
            spans[-1][1] = int(b)
        else:
            spans.append([int(a), int(b)])

    segments = []
    for a, b in spans:
        window = s[a : b + 1]
        # last occurrence of the max: ties go to the more recent frame
        peak = a + (window.size - 1 - int(np.argmax(window[::-1])))
        segments.append(Segment(a, b, peak, float(s[peak])))
    return segments


def allocate_quotas(segments: list[Segment], n_sel: int) -> list[int]:
    """Peak-proportional quotas, floored then clamped to ``[1, len(segment)]``.

    When the peak total is not positive the raw shares fall back to an even
    ``n_sel // M`` split (still clamped).
    """
    if n_sel < 1:
        raise ValueError("n_sel must be >= 1")
    if not segments:
        raise ValueError("need at least one segment")
    total = math.fsum(seg.peak_score for seg in segments)
    if total > 0:
        raw = [math.floor(n_sel * seg.peak_score / total) for seg in segments]
    else:
        raw = [n_sel // len(segments)] * len(segments)
    return [min(max(r, 1), len(seg)) for r, seg in zip(raw, segments)]


def uniform_pick(items, n: int) -> list:
    """``n`` evenly spaced elements of ``sorted(items)``.

    Picks positions ``round(j * (m - 1) / (n - 1))`` (halves round up) for
    ``j = 0..n-1``; a position already taken advances to the next free one.
    """
    ordered = sorted(items)
    m = len(ordered)
    if n <= 0 or m == 0:
        return []
    if n >= m:
        return ordered
    if n == 1:
        return [ordered[0]]
    taken: list[int] = []
    used = set()
    for j in range(n):
        pos = (2 * j * (m - 1) + (n - 1)) // (2 * (n - 1))
        while pos in used:
            pos += 1
        used.add(pos)
        taken.append(pos)
    return [ordered[p] for p in sorted(taken)]


def sample_within_segment(seg: Segment, scores, n_k: int) -> list[int]:
    """Peak index plus ``n_k - 1`` evenly spaced non-peak members, ascending."""
    if not 1 <= n_k <= len(seg):
        raise ValueError(f"n_k={n_k} outside [1, {len(seg)}]")
    rest = [i for i in range(seg.start, seg.end + 1) if i != seg.peak_index]
    return sorted([seg.peak_index, *uniform_pick(rest, n_k - 1)])


def top_n(indices, scores, n: int) -> list[int]:
    """The ``n`` best indices by score, ties to the larger index; ascending output."""
    idx = np.asarray(sorted(indices), dtype=np.int64)
    if n <= 0 or idx.size == 0:
        return []
    s = np.asarray(scores, dtype=np.float64)[idx]
    # lexsort: last key primary -> by score desc, then index desc
    order = np.lexsort((-idx, -s))
    return sorted(int(i) for i in idx[order[:n]])


def adjust_budget(f_seg, scores, n_sel: int, live) -> list[int]:
    """Trim ``f_seg`` to ``n_sel`` or fill it from the rest of ``live``."""
    chosen = sorted(set(f_seg))
    if len(chosen) > n_sel:
        return top_n(chosen, scores, n_sel)
    if len(chosen) < n_sel:
        taken = set(chosen)
        pool = [i for i in live if i not in taken]
        return sorted(chosen + top_n(pool, scores, n_sel - len(chosen)))
    return chosen


def _segment_candidates(scores: np.ndarray, segments: list[Segment], n_sel: int):
    """Quotas and the per-segment samples, before any budget adjustment."""
    quotas = allocate_quotas(segments, n_sel)
    samples = [sample_within_segment(seg, scores, q) for seg, q in zip(segments, quotas)]
    return quotas, samples


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------


def _split_anchor(prof: RelevanceProfile):
    """Anchor = earliest live frame; the rest are candidates."""
    if len(prof) == 0:
        return None, prof.frame_ids, prof.scores
    return int(prof.frame_ids[0]), prof.frame_ids[1:], prof.scores[1:]


def _diagnostics(cand_ids: np.ndarray, cand_scores: np.ndarray, cfg: SelectionConfig):
    if cand_scores.size == 0:
        return None, []
    tau = adaptive_threshold(cand_scores, cfg.w_thre)
    return tau, identify_segments(cand_scores, tau, cfg.merge_gap_delta)


def _result(prof, anchor, cand_ids, chosen_pos, strategy, tau, segments, quotas=()):
    return SelectionResult(
        query_id=int(prof.query_frame_id),
        anchor_id=anchor,
        selected_ids=tuple(int(cand_ids[i]) for i in sorted(chosen_pos)),
        strategy=strategy,
        segments_detected=len(segments),
        tau=tau,
        segments=tuple((int(cand_ids[s.start]), int(cand_ids[s.end])) for s in segments),
        quotas=tuple(quotas),
    )


def segment_sampling(prof: RelevanceProfile, cfg: SelectionConfig) -> SelectionResult:
    anchor, cand_ids, cand_scores = _split_anchor(prof)
    n_sel = cfg.budget_n - 1
    tau, segments = _diagnostics(cand_ids, cand_scores, cfg)
    n = cand_ids.size
    if n <= n_sel:
        return _result(prof, anchor, cand_ids, range(n), Strategy.SEGMENT, tau, segments)

    quotas: list[int] = []
    f_seg: list[int] = []
    if segments and n_sel > 0:
        quotas, samples = _segment_candidates(cand_scores, segments, n_sel)
        f_seg = sorted(set().union(*samples))
    chosen = adjust_budget(f_seg, cand_scores, n_sel, range(n))
    return _result(prof, anchor, cand_ids, chosen, Strategy.SEGMENT, tau, segments, quotas)


def _derived_rng(cfg: SelectionConfig, query_id: int, strategy: Strategy) -> np.random.Generator:
    # one independent stream per (seed, strategy, query frame)
    tag = list(Strategy).index(strategy)
    ss = np.random.SeedSequence(entropy=cfg.rng_seed, spawn_key=(tag, int(query_id)))
    return np.random.default_rng(ss)


PROB_EPS = 1e-9


def baseline_select(strategy: Strategy, prof: RelevanceProfile, cfg: SelectionConfig) -> SelectionResult:
    strategy = Strategy(strategy)
    if strategy is Strategy.SEGMENT:
        return segment_sampling(prof, cfg)
    anchor, cand_ids, cand_scores = _split_anchor(prof)
    n_sel = cfg.budget_n - 1
    tau, segments = _diagnostics(cand_ids, cand_scores, cfg)
    n = cand_ids.size

    if n <= n_sel:
        chosen = range(n)
    elif strategy is Strategy.TOPK:
        chosen = top_n(range(n), cand_scores, n_sel)
    elif strategy is Strategy.RANDOM:
        rng = _derived_rng(cfg, prof.query_frame_id, strategy)
        chosen = rng.choice(n, size=n_sel, replace=False).tolist()
    elif strategy is Strategy.UNIFORM:
        chosen = uniform_pick(range(n), n_sel)
    elif strategy is Strategy.WINDOW:
        chosen = range(n - n_sel, n)
    elif strategy is Strategy.PROB:
        rng = _derived_rng(cfg, prof.query_frame_id, strategy)
        spread = float(cand_scores.max() - cand_scores.min())
        w = cand_scores - cand_scores.min() + PROB_EPS * max(spread, 1.0)
        chosen = rng.choice(n, size=n_sel, replace=False, p=w / w.sum()).tolist()
    else:  # pragma: no cover
        raise ValueError(f"unknown strategy {strategy!r}")
    return _result(prof, anchor, cand_ids, chosen, strategy, tau, segments)


def select(strategy: Strategy, prof: RelevanceProfile, cfg: SelectionConfig) -> SelectionResult:
    """Dispatch to Segment Sampling or one of the baselines."""
    return baseline_select(strategy, prof, cfg)
