import json

import numpy as np
import pytest

from kvrecall.errors import TraceError
from kvrecall.harness.synth import TrajectoryConfig, generate_trace
from kvrecall.trace import parse_trace, read_trace


@pytest.fixture(scope="module")
def text():
    cfg = TrajectoryConfig(kind="loop", frame_count=6, heads=2, head_dim=8, layers=2, payload_bytes_per_layer=4)
    return generate_trace(cfg).serialize()


def edit_frame(text, index, **changes):
    lines = text.splitlines()
    rec = json.loads(lines[index])
    rec.update(changes)
    lines[index] = json.dumps(rec)
    return "\n".join(lines) + "\n"


class TestRoundTrip:
    def test_identical(self, text):
        t = parse_trace(text)
        assert t.serialize() == text
        assert len(t.frames) == 6 and t.frames[0].q_bar.shape == (2, 8)

    def test_whitespace_and_key_order_irrelevant(self, text):
        lines = text.splitlines()
        frames = [json.dumps(dict(reversed(list(json.loads(l).items()))), indent=None) for l in lines[1:]]
        t = parse_trace("\n".join([lines[0], *frames]) + "\n\n")
        assert t.serialize() == text

    def test_file(self, text, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(text)
        assert read_trace(p).header.trace_hash == json.loads(text.splitlines()[0])["trace_hash"]


class TestMalformed:
    def test_empty(self):
        with pytest.raises(TraceError, match="line 1"):
            parse_trace("")

    def test_bad_json_line_number(self, text):
        lines = text.splitlines()
        lines[3] = "{not json"
        with pytest.raises(TraceError) as exc:
            parse_trace("\n".join(lines))
        assert exc.value.line == 4

    def test_wrong_vector_length(self, text):
        with pytest.raises(TraceError) as exc:
            parse_trace(edit_frame(text, 2, q_bar=[0.0] * 3))
        assert exc.value.line == 3

    def test_zero_direction(self, text):
        with pytest.raises(TraceError, match="direction"):
            parse_trace(edit_frame(text, 5, direction=[0, 0, 0]))

    def test_layer_count_mismatch(self, text):
        with pytest.raises(TraceError, match="payload_sizes"):
            parse_trace(edit_frame(text, 1, payload_sizes=[4, 4, 4]))

    def test_non_increasing_ids(self, text):
        with pytest.raises(TraceError, match="increasing"):
            parse_trace(edit_frame(text, 3, frame_id=1))

    def test_tampered_hash(self, text):
        tampered = edit_frame(text, 2, position=[9.0, 9.0, 9.0])
        with pytest.raises(TraceError, match="trace_hash"):
            parse_trace(tampered)
        assert parse_trace(tampered, verify_hash=False).frames[1].position.tolist() == [9.0, 9.0, 9.0]

    def test_frame_count(self, text):
        lines = text.splitlines()
        with pytest.raises(TraceError, match="declares"):
            parse_trace("\n".join(lines[:-1]))

    def test_nan_rejected(self, text):
        bad = text.splitlines()
        bad[1] = bad[1].replace('"position":[', '"position":[NaN,', 1)
        with pytest.raises(TraceError):
            parse_trace("\n".join(bad))

    def test_unsupported_version(self, text):
        lines = text.splitlines()
        head = json.loads(lines[0])
        head["version"] = 99
        with pytest.raises(TraceError, match="version"):
            parse_trace("\n".join([json.dumps(head), *lines[1:]]))

    def test_directions_normalized(self, text):
        t = parse_trace(edit_frame(text, 1, direction=[0.0, 0.0, 5.0]), verify_hash=False)
        np.testing.assert_allclose(t.directions[0], [0, 0, 1])
