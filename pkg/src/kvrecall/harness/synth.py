"""Synthetic camera trajectories with descriptors and a geometric oracle.

Descriptors come from a quadratic lift of the pose::

    query(p, d) = [p/s, -|p|^2/(2 s^2), 1,  sqrt(kappa) d, sqrt(c)]
    key(p, d)   = [p/s, 1, -|p|^2/(2 s^2),  sqrt(kappa) d, sqrt(c)]

so that ``<query_a, key_b> = c - |p_a - p_b|^2 / (2 s^2) + kappa * cos(angle)``.
The lifted vectors are zero-padded to ``H * d_h``, rotated by a fixed seeded
orthogonal matrix, scaled so that the head-averaged dot product reproduces
the inner product above, and perturbed by isotropic Gaussian noise. The
offset ``c`` keeps scores of in-box poses non-negative.

The oracle is ``exp(-|dp|^2 / (2 s^2)) * max(0, cos(angle))^kappa``, with the
cosine taken as ``1 - |d_a - d_b|^2 / 2`` on unit directions so it is exactly
symmetric and exactly 1 at identical poses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import ortho_group

from ..errors import ConfigError
from ..trace import Trace, TraceFrame, TraceHeader

__all__ = [
    "TrajectoryKind",
    "TrajectoryConfig",
    "OracleParams",
    "oracle_relevance",
    "oracle_matrix",
    "substream",
    "trajectory",
    "encode_poses",
    "generate_trace",
    "oracle_params_of",
]

LIFT_DIM = 9


class TrajectoryKind(str, enum.Enum):
    LOOP = "loop"
    BACK_AND_FORTH = "backforth"
    RANDOM_WALK = "randomwalk"
    ROOM_REVISIT = "room"
    MULTI_PEAK = "multipeak"


# sub-generator tags for counter-based seed splitting
_TRAJECTORY, _PROJECTION, _NOISE = 0, 1, 2


def substream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: TrajectoryKind = TrajectoryKind.LOOP
    frame_count: int = 500
    scene_extent: tuple[float, float, float] = (4.0, 2.0, 4.0)
    noise_sigma: float = 0.02
    rng_seed: int = 0
    heads: int = 4
    head_dim: int = 32
    special_count: int = 5
    layers: int = 4
    payload_bytes_per_layer: int = 256
    visits: int = 8  # only for MULTI_PEAK

    def __post_init__(self):
        object.__setattr__(self, "kind", TrajectoryKind(self.kind))
        object.__setattr__(self, "scene_extent", tuple(float(v) for v in self.scene_extent))
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if len(self.scene_extent) != 3 or not all(v > 0 and math.isfinite(v) for v in self.scene_extent):
            raise ConfigError("scene_extent must be three positive finite numbers")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.heads < 1 or self.head_dim < 1 or self.layers < 1:
            raise ConfigError("heads, head_dim and layers must be >= 1")
        if self.heads * self.head_dim < LIFT_DIM:
            raise ConfigError(f"heads * head_dim must be >= {LIFT_DIM}")
        if self.special_count < 0 or self.payload_bytes_per_layer < 0:
            raise ConfigError("special_count and payload_bytes_per_layer must be >= 0")
        if self.visits < 1:
            raise ConfigError("visits must be >= 1")

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.scene_extent))


@dataclass(frozen=True)
class OracleParams:
    sigma_p: float
    kappa: float = 2.0

    @classmethod
    def for_extent(cls, extent) -> "OracleParams":
        return cls(sigma_p=0.3 * float(np.linalg.norm(extent)))


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def oracle_relevance(pos_a, dir_a, pos_b, dir_b, params: OracleParams) -> float:
    """Ground-truth geometric relevance of two camera poses, in [0, 1]."""
    da, db = _unit(dir_a), _unit(dir_b)
    dp2 = float(np.sum((np.asarray(pos_a, float) - np.asarray(pos_b, float)) ** 2))
    cos = min(1.0, max(-1.0, 1.0 - float(np.sum((da - db) ** 2)) / 2.0))
    return math.exp(-dp2 / (2 * params.sigma_p**2)) * max(0.0, cos) ** params.kappa


def oracle_matrix(positions, directions, params: OracleParams, rows=None) -> np.ndarray:
    """Oracle relevance of ``rows`` (default: all) against every pose."""
    P = np.asarray(positions, float)
    D = _unit(directions)
    idx = np.arange(len(P)) if rows is None else np.asarray(rows)
    dp2 = ((P[idx, None, :] - P[None, :, :]) ** 2).sum(-1)
    cos = np.clip(1.0 - ((D[idx, None, :] - D[None, :, :]) ** 2).sum(-1) / 2.0, -1.0, 1.0)
    return np.exp(-dp2 / (2 * params.sigma_p**2)) * np.maximum(0.0, cos) ** params.kappa


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def _yaw_dir(yaw, pitch=0.0):
    yaw = np.asarray(yaw, float)
    return np.stack([np.cos(yaw) * np.cos(pitch), np.full_like(yaw, np.sin(pitch)), np.sin(yaw) * np.cos(pitch)], -1)


def _loop(n, ext, rng):
    t = np.linspace(0.0, 4 * np.pi, n, endpoint=False)  # two laps
    pos = np.stack([0.4 * ext[0] * np.cos(t), 0.1 * ext[1] * np.sin(3 * t), 0.4 * ext[2] * np.sin(t)], 1)
    look = -pos.copy()
    look[:, 1] = 0.2 * ext[1]
    return pos, look


def _back_and_forth(n, ext, rng):
    passes = 4
    u = np.linspace(0.0, passes, n, endpoint=False)
    tri = 1.0 - np.abs((u % 2.0) - 1.0)  # 0 -> 1 -> 0 ...
    pos = np.stack([(tri - 0.5) * 0.8 * ext[0], np.zeros(n), np.full(n, -0.3 * ext[2])], 1)
    look = _yaw_dir(np.pi / 2 + 0.3 * np.sin(2 * np.pi * tri))
    return pos, look


def _random_walk(n, ext, rng):
    half = 0.45 * np.asarray(ext)
    pos = np.zeros((n, 3))
    vel = np.zeros(3)
    step = 0.01 * float(np.linalg.norm(ext))
    for i in range(1, n):
        vel = 0.9 * vel + 0.1 * rng.normal(0.0, step, 3)
        nxt = pos[i - 1] + vel
        out = np.abs(nxt) > half
        vel[out] = -vel[out]
        pos[i] = np.clip(pos[i - 1] + vel, -half, half)
    heading = np.cumsum(rng.normal(0.0, 0.05, n))
    return pos, _yaw_dir(heading)


def _room_revisit(n, ext, rng):
    ext = np.asarray(ext)
    rooms = np.array([[-0.3, 0.0, -0.3], [0.3, 0.0, -0.3], [0.3, 0.0, 0.3], [-0.3, 0.0, 0.3]]) * ext
    pos = np.zeros((n, 3))
    yaw = np.zeros(n)
    i, room = 0, 0
    while i < n:
        dwell = int(rng.integers(40, 90))
        phase = rng.uniform(0, 2 * np.pi)
        for j in range(min(dwell, n - i)):
            a = phase + 2 * np.pi * j / dwell
            pos[i] = rooms[room] + 0.08 * ext * np.array([np.cos(a), 0.0, np.sin(a)])
            yaw[i] = a + np.pi
            i += 1
        # short walk to the next room, revisiting rooms in a random order
        nxt = int(rng.choice([r for r in range(len(rooms)) if r != room]))
        walk = 15
        for j in range(min(walk, n - i)):
            f = (j + 1) / (walk + 1)
            pos[i] = (1 - f) * rooms[room] + f * rooms[nxt]
            d = rooms[nxt] - rooms[room]
            yaw[i] = math.atan2(d[2], d[0])
            i += 1
        room = nxt
    return pos, _yaw_dir(yaw)


def _multi_peak(n, ext, rng, visits):
    """One long dwell at the centre plus ``visits - 1`` brief passes through it.

    Between visits the camera sits on a far arc looking away from the centre's
    viewing direction. The final frame looks from the centre, so its relevance
    profile has one tall, wide plateau (the dwell) and ``visits - 1`` narrow,
    slightly lower bumps, each separated by low-relevance legs.
    """
    ext = np.asarray(ext)
    passes = visits - 1
    dwell = max(60, n // 6)
    pass_len = 8
    leg = max(8, (n - dwell - passes * pass_len) // (passes + 1))
    pos, yaw = [], []

    def far_leg(k):
        for j in range(leg):
            a = 2 * np.pi * (k + j / leg) / (passes + 1)
            pos.append(0.45 * ext * np.array([np.cos(a), 0.0, np.sin(a)]))
            yaw.append(np.pi + 0.4 * np.sin(a))

    far_leg(0)
    for k in range(passes):
        side = 1 if k % 2 else -1
        for f in np.linspace(-1.0, 1.0, pass_len):
            pos.append(ext * np.array([0.0, 0.1, 0.05 * f]))
            yaw.append(0.35 * side)
        far_leg(k + 1)
    for j in range(dwell):
        a = 2 * np.pi * j / dwell
        pos.append(0.01 * ext * np.array([np.cos(a), 0.0, np.sin(a)]))
        yaw.append(0.0)
    pos_arr, look_arr = np.array(pos), _yaw_dir(np.array(yaw))
    if len(pos_arr) > n:
        # keep the dwell and the final query; drop the oldest frames
        pos_arr, look_arr = pos_arr[-n:], look_arr[-n:]
    elif len(pos_arr) < n:
        pad = n - len(pos_arr)
        pos_arr = np.concatenate([np.repeat(pos_arr[:1], pad, 0), pos_arr])
        look_arr = np.concatenate([np.repeat(look_arr[:1], pad, 0), look_arr])
    return pos_arr, look_arr


def trajectory(cfg: TrajectoryConfig) -> tuple[np.ndarray, np.ndarray]:
    """Camera positions ``(n, 3)`` and unit viewing directions ``(n, 3)``."""
    rng = substream(cfg.rng_seed, _TRAJECTORY)
    n, ext = cfg.frame_count, np.asarray(cfg.scene_extent)
    kind = cfg.kind
    if kind is TrajectoryKind.LOOP:
        pos, look = _loop(n, ext, rng)
    elif kind is TrajectoryKind.BACK_AND_FORTH:
        pos, look = _back_and_forth(n, ext, rng)
    elif kind is TrajectoryKind.RANDOM_WALK:
        pos, look = _random_walk(n, ext, rng)
    elif kind is TrajectoryKind.ROOM_REVISIT:
        pos, look = _room_revisit(n, ext, rng)
    else:
        pos, look = _multi_peak(n, ext, rng, cfg.visits)
    if kind is not TrajectoryKind.MULTI_PEAK:
        pos = pos + rng.normal(0.0, 0.005 * cfg.diameter, pos.shape)
    return pos, _unit(look)


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------


def _lift(pos, dirs, params: OracleParams, offset: float):
    a = pos / params.sigma_p
    half_sq = (a**2).sum(1, keepdims=True) / 2.0
    one = np.ones((len(pos), 1))
    d = math.sqrt(params.kappa) * dirs
    c = np.full((len(pos), 1), math.sqrt(offset))
    q = np.concatenate([a, -half_sq, one, d, c], 1)
    k = np.concatenate([a, one, -half_sq, d, c], 1)
    return q, k


def encode_poses(positions, directions, cfg: TrajectoryConfig, params: OracleParams | None = None, meta=None) -> Trace:
    """Turn a pose sequence into a finalized :class:`Trace` (ids ``0..n-1``)."""
    pos = np.asarray(positions, float).reshape(-1, 3)
    dirs = _unit(np.asarray(directions, float).reshape(-1, 3))
    params = params or OracleParams.for_extent(cfg.scene_extent)
    m = cfg.heads * cfg.head_dim
    # scores of any two in-box poses stay >= 0
    offset = (cfg.diameter / params.sigma_p) ** 2 / 2.0 + params.kappa
    q, k = _lift(pos, dirs, params, offset)
    rot = ortho_group.rvs(m, random_state=substream(cfg.rng_seed, _PROJECTION)) if m > 1 else np.ones((1, 1))
    scale = math.sqrt(cfg.heads)
    pad = np.zeros((len(pos), m - LIFT_DIM))
    qm = scale * np.concatenate([q, pad], 1) @ rot.T
    km = scale * np.concatenate([k, pad], 1) @ rot.T
    noise = substream(cfg.rng_seed, _NOISE)
    if cfg.noise_sigma > 0:
        qm = qm + noise.normal(0.0, cfg.noise_sigma, qm.shape)
        km = km + noise.normal(0.0, cfg.noise_sigma, km.shape)

    header = TraceHeader(
        heads=cfg.heads,
        head_dim=cfg.head_dim,
        special_count=cfg.special_count,
        layers=cfg.layers,
        payload_bytes=cfg.payload_bytes_per_layer,
        meta={
            "generator": _config_record(cfg),
            "oracle": {"sigma_p": params.sigma_p, "kappa": params.kappa},
            **(meta or {}),
        },
    )
    frames = [
        TraceFrame(
            frame_id=i,
            position=pos[i],
            direction=dirs[i],
            q_bar=qm[i].reshape(cfg.heads, cfg.head_dim),
            k_bar=km[i].reshape(cfg.heads, cfg.head_dim),
            payload_sizes=[cfg.payload_bytes_per_layer] * cfg.layers,
        )
        for i in range(len(pos))
    ]
    return Trace(header, frames).finalize()


def _config_record(cfg: TrajectoryConfig) -> dict:
    rec = asdict(cfg)
    rec["kind"] = cfg.kind.value
    rec["scene_extent"] = list(cfg.scene_extent)
    return rec


def generate_trace(cfg: TrajectoryConfig) -> Trace:
    pos, dirs = trajectory(cfg)
    return encode_poses(pos, dirs, cfg)


def oracle_params_of(trace: Trace) -> OracleParams:
    o = trace.header.meta.get("oracle")
    if not o:
        raise ConfigError("trace carries no oracle parameters")
    return OracleParams(float(o["sigma_p"]), float(o["kappa"]))
