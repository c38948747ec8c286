import json

import numpy as np
import pytest

from kvrecall.errors import FrameError, InvariantError, TraceError
from kvrecall.harness.synth import TrajectoryConfig, generate_trace
from kvrecall.relevance import FrameDescriptor, TokenBlock
from kvrecall.selection import SelectionConfig, Strategy
from kvrecall.spatial_memory import MemoryConfig, PoseMeta
from kvrecall.streaming import (
    FrameInput,
    StreamConfig,
    StreamEngine,
    attention_replay,
    frame_inputs,
    run_stream,
    synth_payload,
)


def small_trace(kind="room", n=60, seed=0, layers=2):
    cfg = TrajectoryConfig(kind=kind, frame_count=n, rng_seed=seed, heads=2, head_dim=8, layers=layers,
                           payload_bytes_per_layer=16)
    return generate_trace(cfg)


def serialized(report):
    return "\n".join(json.dumps(log.to_record()) for log in report.logs)


class TestConfig:
    def test_record_round_trip(self):
        cfg = StreamConfig(SelectionConfig(12, 0.6, 2, 7), MemoryConfig(4, 8, 50, 0.25, False), "cosine", "prob", 3)
        assert StreamConfig.from_record(cfg.to_record()) == cfg


class TestRunStream:
    def test_first_frame(self):
        rep = run_stream(small_trace(n=3), StreamConfig(layers=2))
        first = rep.logs[0]
        assert first.selection.selected_ids == () and first.selection.anchor_id is None
        assert first.live_after == 1 and first.min_score is None

    def test_short_stream_has_no_compression(self):
        rep = run_stream(small_trace(n=10), StreamConfig(layers=2))
        assert len(rep.logs) == 10 and rep.compression_events == []
        assert rep.live_timeline == list(range(1, 11))

    def test_under_budget_selects_everything(self):
        rep = run_stream(small_trace(n=48), StreamConfig(layers=2))
        for i, log in enumerate(rep.logs):
            assert log.selection.context_ids == tuple(range(i))

    def test_compression_on_interval(self):
        rep = run_stream(small_trace(n=210), StreamConfig(layers=2))
        flagged = [log.frame_id for log in rep.logs if log.compression is not None]
        assert flagged == [199]
        assert rep.logs[199].compression.trigger_frame == 199
        assert rep.logs[199].live_after < 200

    def test_revisit_stream_bounded(self):
        rep = run_stream(small_trace(n=500), StreamConfig(layers=2))
        assert rep.live_timeline[-1] < 500
        assert rep.peak_live >= max(rep.live_timeline)

    def test_anchor_and_context_bound(self):
        rep = run_stream(small_trace(n=450), StreamConfig(SelectionConfig(budget_n=20), layers=2))
        dead = set()
        for log in rep.logs:
            ctx = log.selection.context_ids
            assert len(ctx) <= 20
            assert not dead.intersection(ctx)
            assert log.frame_id not in ctx
            if log.frame_id > 0:
                assert log.selection.anchor_id == 0
            if log.compression:
                assert 0 not in log.compression.tombstoned_ids
                dead.update(log.compression.tombstoned_ids)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_deterministic(self, strategy):
        trace = small_trace(n=250, seed=3)
        cfg = StreamConfig(SelectionConfig(budget_n=16, rng_seed=4), strategy=strategy, layers=2)
        assert serialized(run_stream(trace, cfg)) == serialized(run_stream(trace, cfg))

    def test_layer_mismatch(self):
        with pytest.raises(TraceError):
            run_stream(small_trace(n=5, layers=2), StreamConfig(layers=3))


class TestEngine:
    def _input(self, fid, q, payloads=(b"a", b"b")):
        q = np.asarray(q, float)
        pose = PoseMeta(fid, np.zeros(3), np.array([1.0, 0, 0]))
        return FrameInput(fid, pose, list(payloads), FrameDescriptor(fid, q, q))

    def test_tokens_are_pooled(self):
        engine = StreamEngine(StreamConfig(layers=1))
        tok = np.array([[[9.0, 9.0], [1.0, 0.0], [3.0, 0.0]]])
        pose = PoseMeta(0, np.zeros(3), np.array([1.0, 0, 0]))
        engine.process_frame(FrameInput(0, pose, [b"x"], tokens=TokenBlock(0, tok, tok, 1)))
        assert engine.store.entry(0).key_descriptor.tolist() == [[2.0, 0.0]]

    def test_out_of_order(self):
        engine = StreamEngine(StreamConfig(layers=2))
        engine.process_frame(self._input(3, [[1.0]]))
        with pytest.raises(FrameError):
            engine.process_frame(self._input(3, [[1.0]]))

    def test_shape_change(self):
        engine = StreamEngine(StreamConfig(layers=2))
        engine.process_frame(self._input(0, [[1.0]]))
        with pytest.raises(FrameError):
            engine.process_frame(self._input(1, [[1.0, 2.0]]))

    def test_missing_descriptor(self):
        pose = PoseMeta(0, np.zeros(3), np.array([1.0, 0, 0]))
        with pytest.raises(FrameError):
            StreamEngine(StreamConfig(layers=1)).process_frame(FrameInput(0, pose, [b""]))

    def test_selection_never_sees_current_frame(self):
        engine = StreamEngine(StreamConfig(SelectionConfig(budget_n=3), layers=2))
        for i in range(10):
            log = engine.process_frame(self._input(i, [[float(i)]]))
            assert i not in log.selection.context_ids

    def test_context_digest_shared_across_layers(self):
        engine = StreamEngine(StreamConfig(SelectionConfig(budget_n=4), layers=3))
        for i in range(8):
            log = engine.process_frame(self._input(i, [[1.0 + i]], [b"p"] * 3))
        ctx = log.selection.context_ids
        parts = {
            attention_replay(zip(ctx, engine.store.gather(ctx, layer)), b"p", layer).split(":")[1]
            for layer in range(3)
        }
        assert parts == {log.context_digest}

    def test_broken_budget_raises_invariant(self, monkeypatch):
        import kvrecall.streaming as streaming

        engine = StreamEngine(StreamConfig(SelectionConfig(budget_n=3), layers=2))
        for i in range(4):
            engine.process_frame(self._input(i, [[1.0]]))
        real = streaming.select

        def short(strategy, prof, cfg):
            r = real(strategy, prof, cfg)
            return type(r)(**{**r.__dict__, "selected_ids": r.selected_ids[:-1]})

        monkeypatch.setattr(streaming, "select", short)
        with pytest.raises(InvariantError):
            engine.process_frame(self._input(4, [[1.0]]))


class TestAttentionReplay:
    def pairs(self, ids, layer=0):
        return [(i, synth_payload(i, layer, 8)) for i in ids]

    def test_deterministic(self):
        assert attention_replay(self.pairs([1, 5, 9]), b"q", 0) == attention_replay(self.pairs([1, 5, 9]), b"q", 0)

    def test_order_independent(self):
        assert attention_replay(self.pairs([9, 1, 5]), b"q", 0) == attention_replay(self.pairs([1, 5, 9]), b"q", 0)

    def test_id_part_layer_independent(self):
        a = attention_replay(self.pairs([1, 2], 0), b"q", 0).split(":")[1]
        b = attention_replay(self.pairs([1, 2], 3), b"r", 3).split(":")[1]
        assert a == b

    def test_distinct_sets_distinct_digests(self):
        rng = np.random.default_rng(0)
        seen = {}
        for _ in range(1000):
            ids = tuple(sorted(rng.choice(200, size=rng.integers(1, 20), replace=False).tolist()))
            other = tuple(sorted(rng.choice(200, size=rng.integers(1, 20), replace=False).tolist()))
            if ids == other:
                continue
            assert attention_replay(self.pairs(ids), b"q", 0) != attention_replay(self.pairs(other), b"q", 0)
            seen[attention_replay(self.pairs(ids), b"q", 0).split(":")[1]] = ids
        assert len(seen) == len(set(seen.values()))

    def test_synth_payload(self):
        assert synth_payload(3, 1, 0) == b""
        assert len(synth_payload(3, 1, 40)) == 40
        assert synth_payload(3, 1, 8) != synth_payload(3, 2, 8)


def test_frame_inputs_match_trace():
    trace = small_trace(n=5)
    inputs = list(frame_inputs(trace))
    assert [i.frame_id for i in inputs] == [0, 1, 2, 3, 4]
    assert all(len(i.payloads[0]) == 16 for i in inputs)
