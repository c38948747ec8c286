import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from kvrecall.errors import ConfigError
from kvrecall.selection import uniform_pick
from kvrecall.spatial_memory import (
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

coord = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)


def pose(p, d=(1.0, 0.0, 0.0), fid=0):
    return PoseMeta(fid, np.asarray(p, float), np.asarray(d, float))


def frames_in(counts):
    """(frame_id, key) pairs with ``counts[r]`` frames in region r, ids interleaved."""
    out, fid = [], 1
    remaining = list(counts)
    while any(remaining):
        for r, left in enumerate(remaining):
            if left:
                out.append((fid, RegionKey(r, 0, 0, 0)))
                remaining[r] -= 1
                fid += 1
    return out


class TestPoseMeta:
    def test_normalizes(self):
        p = pose((0, 0, 0), (0, 0, 3))
        np.testing.assert_allclose(p.direction, [0, 0, 1])

    def test_rejects_zero_direction(self):
        with pytest.raises(ValueError):
            pose((0, 0, 0), (0, 0, 0))


class TestBoundingBox:
    def test_first_pose_degenerate(self):
        b = update_bbox(None, [1.0, 2.0, 3.0])
        assert b.b_min.tolist() == b.b_max.tolist() == [1.0, 2.0, 3.0]

    def test_inside_unchanged(self):
        b = BoundingBox(np.zeros(3), np.ones(3))
        c = update_bbox(b, [0.5, 0.5, 0.5])
        assert c.b_min.tolist() == [0, 0, 0] and c.b_max.tolist() == [1, 1, 1]

    def test_one_axis_moves(self):
        c = update_bbox(BoundingBox(np.zeros(3), np.ones(3)), [0.5, 2.0, 0.5])
        assert c.b_min.tolist() == [0, 0, 0] and c.b_max.tolist() == [1, 2, 1]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(vec3, min_size=1, max_size=30))
    def test_grow_only(self, points):
        box = None
        for p in points:
            new = update_bbox(box, p)
            if box is not None:
                assert new.contains(box)
            box = new


class TestAssignRegion:
    cfg = MemoryConfig()

    def test_lower_corner(self):
        b = BoundingBox(np.zeros(3), np.array([3.0, 2.0, 1.0]))
        assert assign_region(pose(b.b_min), b, self.cfg)[:3] == (0, 0, 0)

    def test_upper_end_of_single_axis_clamped(self):
        # along one axis the diagonal equals the side, so the far end lands on K
        b = BoundingBox(np.zeros(3), np.array([3.0, 0.0, 0.0]))
        assert assign_region(pose(b.b_max), b, self.cfg)[:3] == (2, 0, 0)

    def test_cube_upper_corner(self):
        # cell size is diagonal / K, so a cube corner sits at floor(sqrt(3)) = 1
        b = BoundingBox(np.zeros(3), np.ones(3))
        assert assign_region(pose(b.b_max), b, self.cfg)[:3] == (1, 1, 1)

    def test_degenerate_box(self):
        b = BoundingBox.from_point([5.0, 5.0, 5.0])
        assert assign_region(pose((5, 5, 5)), b, self.cfg)[:3] == (0, 0, 0)

    def test_direction_bins(self):
        b = BoundingBox.from_point([0.0, 0.0, 0.0])
        assert assign_region(pose((0, 0, 0), (1, 0, 0)), b, self.cfg).d_bin == 2
        assert assign_region(pose((0, 0, 0), (0, 0, 1)), b, self.cfg).d_bin == 3
        assert assign_region(pose((0, 0, 0), (0, 0, -1)), b, self.cfg).d_bin == 1
        assert assign_region(pose((0, 0, 0), (-1, 0, -1e-9)), b, self.cfg).d_bin == 0
        # atan2(+0, -1) = pi lands on the upper edge and is clamped
        assert assign_region(pose((0, 0, 0), (-1, 0, 0)), b, self.cfg).d_bin == 3

    @settings(max_examples=200, deadline=None)
    @given(vec3, vec3, vec3, vec3, st.integers(1, 6), st.integers(1, 12))
    def test_ranges(self, a, c, p, d, k, nd):
        if not any(d):
            d = (1.0, 0.0, 0.0)
        box = update_bbox(update_bbox(None, a), c)
        box = update_bbox(box, p)
        key = assign_region(pose(p, d), box, MemoryConfig(grid_k=k, dir_bins_d=nd))
        assert all(0 <= i < k for i in key[:3])
        assert 0 <= key.d_bin < nd


class TestShouldCompress:
    @pytest.mark.parametrize(("n", "expected"), [(0, False), (199, False), (200, True), (201, False), (400, True)])
    def test_interval(self, n, expected):
        assert should_compress(n, MemoryConfig()) is expected

    def test_disabled(self):
        assert not should_compress(200, MemoryConfig(enabled=False))

    @pytest.mark.parametrize("kw", [{"grid_k": 0}, {"dir_bins_d": 0}, {"interval_delta": 0}, {"deletion_beta": 1.0}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            MemoryConfig(**kw)


class TestCompress:
    def test_uniform_occupancy_untouched(self):
        r = compress(frames_in([4, 4, 4]), 0, MemoryConfig())
        assert r.mean_occupancy == 4.0
        assert r.tombstoned_ids == [] and r.thinned_regions == []

    def test_one_region_thinned(self):
        r = compress(frames_in([8, 5, 3]), 0, MemoryConfig(deletion_beta=0.5))
        assert r.mean_occupancy == pytest.approx(16 / 3)
        assert [(k.ix, b, a) for k, b, a in r.thinned_regions] == [(0, 8, 4)]
        assert len(r.tombstoned_ids) == 4
        members = [f for f, k in frames_in([8, 5, 3]) if k.ix == 0]
        kept = sorted(set(members) - set(r.tombstoned_ids))
        assert kept == uniform_pick(members, 4)

    def test_single_frame_region_fully_removed(self):
        frames = [(1, RegionKey(0, 0, 0, 0)), (2, RegionKey(1, 0, 0, 0)), (3, RegionKey(1, 0, 0, 0))]
        frames += [(4, RegionKey(2, 0, 0, 0)), (5, RegionKey(3, 0, 0, 0))]
        # only the two-frame region beats the mean of 5/4, and floor(0.5 * 2) = 1 survives
        r = compress(frames, 0, MemoryConfig())
        assert r.tombstoned_ids == [3]
        lone = compress([(7, RegionKey(0, 0, 0, 0))], 0, MemoryConfig(deletion_beta=0.9))
        # a lone region never exceeds its own mean
        assert lone.tombstoned_ids == []

    def test_region_thinned_to_zero(self):
        frames = [(1, RegionKey(0, 0, 0, 0)), (2, RegionKey(0, 0, 0, 0)), (3, RegionKey(1, 0, 0, 0))]
        r = compress(frames, 0, MemoryConfig(deletion_beta=0.6))
        assert r.thinned_regions == [(RegionKey(0, 0, 0, 0), 2, 0)]
        assert r.tombstoned_ids == [1, 2]

    def test_anchor_never_counted_or_removed(self):
        frames = [(0, RegionKey(0, 0, 0, 0))] + [(i, RegionKey(0, 0, 0, 0)) for i in range(1, 10)]
        frames += [(10, RegionKey(1, 0, 0, 0))]
        r = compress(frames, 0, MemoryConfig())
        assert 0 not in r.tombstoned_ids
        assert r.mean_occupancy == 5.0

    def test_empty(self):
        r = compress([], 0, MemoryConfig())
        assert r.tombstoned_ids == [] and r.mean_occupancy == 0.0
        assert compress([(0, RegionKey(0, 0, 0, 0))], 0, MemoryConfig()).tombstoned_ids == []

    def test_record_round_trip(self):
        r = compress(frames_in([8, 5, 3]), 0, MemoryConfig(), trigger_frame=199)
        back = CompressionReport.from_record(r.to_record())
        assert back.to_record() == r.to_record()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 7), min_size=1, max_size=120), st.floats(0, 0.95))
    def test_matches_oracle(self, region_of, beta):
        frames = [(0, RegionKey(region_of[0], 0, 0, 0))]
        frames += [(i, RegionKey(r, 0, 0, i % 2)) for i, r in enumerate(region_of[1:], start=1)]
        got = compress(frames, 0, MemoryConfig(deletion_beta=beta))
        mean, thinned, dead = oracles.compress(frames, 0, beta)
        assert got.mean_occupancy == pytest.approx(mean, rel=1e-15)
        assert {tuple(k): (b, a) for k, b, a in got.thinned_regions} == thinned
        assert got.tombstoned_ids == dead
        for _, before, after in got.thinned_regions:
            assert after == math.floor((1 - beta) * before)


class TestSpatialMemory:
    def test_keys_frozen_at_insertion(self):
        mem = SpatialMemory(MemoryConfig())
        k0 = mem.record(pose((0, 0, 0), fid=0))
        k1 = mem.record(pose((1, 0, 0), fid=1))
        mem.record(pose((10, 10, 10), fid=2))
        assert mem.regions[0] == k0 and mem.regions[1] == k1
        assert k1[:3] == (2, 0, 0)

    def test_duplicate_record(self):
        mem = SpatialMemory(MemoryConfig())
        mem.record(pose((0, 0, 0), fid=0))
        with pytest.raises(ValueError):
            mem.record(pose((0, 0, 0), fid=0))

    def test_occupancy(self):
        mem = SpatialMemory(MemoryConfig())
        for i in range(5):
            mem.record(pose((0, 0, 0), fid=i))
        assert list(mem.occupancy([0, 1, 3]).values()) == [3]
