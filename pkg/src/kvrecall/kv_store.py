"""Append-only per-frame KV payload store with tombstoning."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import StoreError
from .spatial_memory import PoseMeta

__all__ = ["EntryState", "KvEntry", "CacheStats", "KvStore"]


class EntryState(str, enum.Enum):
    LIVE = "live"
    TOMBSTONED = "tombstoned"


@dataclass(eq=False)
class KvEntry:
    frame_id: int
    layers: list[bytes]
    key_descriptor: np.ndarray
    pose: PoseMeta | None = None
    state: EntryState = EntryState.LIVE

    @property
    def nbytes(self) -> int:
        return sum(len(p) for p in self.layers)


@dataclass(frozen=True)
class CacheStats:
    live_count: int = 0
    tombstoned_count: int = 0
    payload_bytes: int = 0
    peak_payload_bytes: int = 0


@dataclass
class KvStore:
    """Opaque KV payloads for every ingested frame, ``n_layers`` blobs each.

    Ids must arrive strictly increasing. The first inserted frame is the anchor
    and can never be tombstoned. Tombstoned entries keep their descriptor and
    pose but drop all payload bytes.
    """

    n_layers: int
    _entries: dict[int, KvEntry] = field(default_factory=dict, repr=False)
    _live: list[int] = field(default_factory=list, repr=False)
    _payload_bytes: int = 0
    _peak_bytes: int = 0
    _tombstoned: int = 0

    def __post_init__(self):
        if self.n_layers < 1:
            raise StoreError("n_layers must be >= 1")

    @property
    def anchor_id(self) -> int | None:
        return next(iter(self._entries), None)

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def insert(self, entry: KvEntry) -> None:
        if entry.state is not EntryState.LIVE:
            raise StoreError("only live entries can be inserted")
        if self._entries and entry.frame_id <= next(reversed(self._entries)):
            raise StoreError(f"frame id {entry.frame_id} is duplicate or out of order")
        if len(entry.layers) != self.n_layers:
            raise StoreError(f"expected {self.n_layers} layer payloads, got {len(entry.layers)}")
        self._entries[entry.frame_id] = entry
        self._live.append(entry.frame_id)
        self._payload_bytes += entry.nbytes
        self._peak_bytes = max(self._peak_bytes, self._payload_bytes)

    def entry(self, frame_id: int) -> KvEntry:
        try:
            return self._entries[frame_id]
        except KeyError:
            raise StoreError(f"unknown frame id {frame_id}") from None

    def is_live(self, frame_id: int) -> bool:
        e = self._entries.get(frame_id)
        return e is not None and e.state is EntryState.LIVE

    def gather(self, ids, layer: int) -> list[bytes]:
        """Layer-``layer`` payloads of ``ids`` in ascending id order."""
        if not 0 <= layer < self.n_layers:
            raise StoreError(f"layer {layer} outside [0, {self.n_layers})")
        out = []
        for fid in sorted(set(ids)):
            e = self._entries.get(fid)
            if e is None:
                raise StoreError(f"gather of unknown frame {fid}")
            if e.state is not EntryState.LIVE:
                raise StoreError(f"gather of tombstoned frame {fid}")
            out.append(e.layers[layer])
        return out

    def tombstone(self, ids) -> int:
        """Drop the payloads of ``ids``; returns the number of bytes freed.

        The call is all-or-nothing: any invalid id leaves the store untouched.
        """
        ids = sorted(set(ids))
        anchor = self.anchor_id
        for fid in ids:
            if fid == anchor:
                raise StoreError(f"frame {fid} is the anchor and cannot be tombstoned")
            if not self.is_live(fid):
                raise StoreError(f"frame {fid} is not live")
        freed = 0
        for fid in ids:
            e = self._entries[fid]
            freed += e.nbytes
            e.layers = [b""] * self.n_layers
            e.state = EntryState.TOMBSTONED
        if ids:
            dead = set(ids)
            self._live = [f for f in self._live if f not in dead]
        self._payload_bytes -= freed
        self._tombstoned += len(ids)
        return freed

    def live_ids(self) -> list[int]:
        return list(self._live)

    def stats(self) -> CacheStats:
        return CacheStats(
            live_count=len(self._live),
            tombstoned_count=self._tombstoned,
            payload_bytes=self._payload_bytes,
            peak_payload_bytes=self._peak_bytes,
        )
