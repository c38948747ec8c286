"""Line-delimited JSON trace format.

Line 1 is a header object; every following line is one frame::

    {"version": 1, "H": 4, "d_h": 32, "s": 5, "L": 4, "payload_bytes": 256,
     "frame_count": 500, "trace_hash": "...", "meta": {...}}
    {"frame_id": 0, "position": [x, y, z], "direction": [x, y, z],
     "q_bar": [...H*d_h...], "k_bar": [...], "payload_sizes": [...L...]}

``trace_hash`` is the SHA-256 of the canonical (compact) frame lines joined
by newlines. Floats are written with ``repr`` precision so parsing a
serialized trace reproduces it exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TraceError

__all__ = ["TRACE_VERSION", "TraceHeader", "TraceFrame", "Trace", "read_trace", "parse_trace"]

TRACE_VERSION = 1

_HEADER_KEYS = ("version", "H", "d_h", "s", "L", "payload_bytes", "frame_count", "trace_hash")
_FRAME_KEYS = ("frame_id", "position", "direction", "q_bar", "k_bar", "payload_sizes")


@dataclass
class TraceHeader:
    heads: int
    head_dim: int
    special_count: int
    layers: int
    payload_bytes: int
    frame_count: int = 0
    trace_hash: str = ""
    version: int = TRACE_VERSION
    meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "version": self.version,
            "H": self.heads,
            "d_h": self.head_dim,
            "s": self.special_count,
            "L": self.layers,
            "payload_bytes": self.payload_bytes,
            "frame_count": self.frame_count,
            "trace_hash": self.trace_hash,
            "meta": self.meta,
        }


@dataclass(eq=False)
class TraceFrame:
    frame_id: int
    position: np.ndarray
    direction: np.ndarray
    q_bar: np.ndarray  # (H, d_h)
    k_bar: np.ndarray  # (H, d_h)
    payload_sizes: list[int]

    def to_record(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "position": [float(v) for v in self.position],
            "direction": [float(v) for v in self.direction],
            "q_bar": [float(v) for v in np.ravel(self.q_bar)],
            "k_bar": [float(v) for v in np.ravel(self.k_bar)],
            "payload_sizes": [int(v) for v in self.payload_sizes],
        }


def _dump(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


@dataclass
class Trace:
    header: TraceHeader
    frames: list[TraceFrame]

    def frame_lines(self) -> list[str]:
        return [_dump(f.to_record()) for f in self.frames]

    def finalize(self) -> "Trace":
        """Fill ``frame_count`` and ``trace_hash`` from the frames."""
        self.header.frame_count = len(self.frames)
        self.header.trace_hash = _hash_lines(self.frame_lines())
        return self

    def serialize(self) -> str:
        lines = self.frame_lines()
        self.header.frame_count = len(lines)
        self.header.trace_hash = _hash_lines(lines)
        return "\n".join([_dump(self.header.to_record()), *lines]) + "\n"

    def write(self, path) -> str:
        text = self.serialize()
        Path(path).write_text(text)
        return self.header.trace_hash

    @property
    def positions(self) -> np.ndarray:
        return np.array([f.position for f in self.frames], dtype=np.float64).reshape(-1, 3)

    @property
    def directions(self) -> np.ndarray:
        d = np.array([f.direction for f in self.frames], dtype=np.float64).reshape(-1, 3)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


def _hash_lines(lines) -> str:
    h = hashlib.sha256()
    for i, line in enumerate(lines):
        if i:
            h.update(b"\n")
        h.update(line.encode())
    return h.hexdigest()


def _int(rec, key, line, minimum=0) -> int:
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise TraceError(f"field {key!r} must be an integer >= {minimum}, got {v!r}", line)
    return v


def _vector(rec, key, n, line) -> np.ndarray:
    v = rec.get(key)
    if not isinstance(v, list) or len(v) != n:
        raise TraceError(f"field {key!r} must be a list of {n} numbers", line)
    try:
        arr = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise TraceError(f"field {key!r} holds non-numeric values", line) from None
    if any(isinstance(x, bool) for x in v) or not np.isfinite(arr).all():
        raise TraceError(f"field {key!r} holds non-finite or non-numeric values", line)
    return arr


def _parse_header(text: str) -> TraceHeader:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceError(f"header is not valid JSON: {exc.msg}", 1) from None
    if not isinstance(rec, dict):
        raise TraceError("header must be a JSON object", 1)
    missing = [k for k in _HEADER_KEYS if k not in rec]
    if missing:
        raise TraceError(f"header missing fields {missing}", 1)
    if rec["version"] != TRACE_VERSION:
        raise TraceError(f"unsupported trace version {rec['version']!r}", 1)
    return TraceHeader(
        heads=_int(rec, "H", 1, 1),
        head_dim=_int(rec, "d_h", 1, 1),
        special_count=_int(rec, "s", 1),
        layers=_int(rec, "L", 1, 1),
        payload_bytes=_int(rec, "payload_bytes", 1),
        frame_count=_int(rec, "frame_count", 1),
        trace_hash=str(rec["trace_hash"]),
        meta=dict(rec.get("meta") or {}),
    )


def _parse_frame(text: str, hdr: TraceHeader, line: int) -> TraceFrame:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceError(f"invalid JSON: {exc.msg}", line) from None
    if not isinstance(rec, dict):
        raise TraceError("frame record must be a JSON object", line)
    missing = [k for k in _FRAME_KEYS if k not in rec]
    if missing:
        raise TraceError(f"frame missing fields {missing}", line)
    n = hdr.heads * hdr.head_dim
    direction = _vector(rec, "direction", 3, line)
    if not math.isfinite(float(np.linalg.norm(direction))) or not direction.any():
        raise TraceError("zero direction vector", line)
    sizes = rec["payload_sizes"]
    if (
        not isinstance(sizes, list)
        or len(sizes) != hdr.layers
        or any(isinstance(x, bool) or not isinstance(x, int) or x < 0 for x in sizes)
    ):
        raise TraceError(f"payload_sizes must list {hdr.layers} non-negative integers", line)
    return TraceFrame(
        frame_id=_int(rec, "frame_id", line),
        position=_vector(rec, "position", 3, line),
        direction=direction,
        q_bar=_vector(rec, "q_bar", n, line).reshape(hdr.heads, hdr.head_dim),
        k_bar=_vector(rec, "k_bar", n, line).reshape(hdr.heads, hdr.head_dim),
        payload_sizes=list(sizes),
    )


def parse_trace(text: str, verify_hash: bool = True) -> Trace:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise TraceError("empty trace", 1)
    hdr = _parse_header(lines[0])
    frames: list[TraceFrame] = []
    prev = -1
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fr = _parse_frame(line, hdr, no)
        if fr.frame_id <= prev:
            raise TraceError(f"frame id {fr.frame_id} not strictly increasing", no)
        prev = fr.frame_id
        frames.append(fr)
    if len(frames) != hdr.frame_count:
        raise TraceError(f"header declares {hdr.frame_count} frames, found {len(frames)}", 1)
    trace = Trace(hdr, frames)
    # hash the canonical form so whitespace/key order in the file do not matter
    if verify_hash and _hash_lines(trace.frame_lines()) != hdr.trace_hash:
        raise TraceError("trace_hash does not match frame records", 1)
    return trace


def read_trace(path, verify_hash: bool = True) -> Trace:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError:
        raise TraceError(f"{path} is not a text file") from None
    return parse_trace(text, verify_hash=verify_hash)
