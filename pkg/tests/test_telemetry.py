"""Telemetry: append-only records, WPM semantics, replay summaries."""

import itertools

import pytest

from layerspace import telemetry
from layerspace.telemetry import EventRecord, SessionLog, read_log, render_usage_tree, replay

from conftest import make_workspace


class FakeClock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


@pytest.fixture
def log(tmp_path):
    clock = FakeClock()
    session = SessionLog(tmp_path / "events.jsonl", session_id="s1", clock=clock)
    yield session, clock
    session.close()


class TestRecords:
    def test_sequence_strictly_increases(self, log):
        session, clock = log
        records = [session.log("feature-invocation", f"f{i}") for i in range(5)]
        seqs = [r.seq for r in records]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs)

    def test_same_millisecond_order_preserved(self, log):
        session, clock = log
        a = session.log("feature-invocation", "first")
        b = session.log("feature-invocation", "second")
        assert a.timestamp_ms == b.timestamp_ms
        assert a.seq < b.seq

    def test_timestamps_non_decreasing_even_if_clock_jumps_back(self, log):
        session, clock = log
        a = session.log("edit", "apply-edit")
        clock.now -= 100
        b = session.log("edit", "apply-edit")
        assert b.timestamp_ms >= a.timestamp_ms

    def test_json_roundtrip(self, log):
        session, clock = log
        record = session.log("user-prompt", "elaborate", {"prompt": "hi"}, wpm_sample=12.0)
        assert EventRecord.from_json(record.to_json()) == record

    def test_file_is_append_only_jsonl(self, tmp_path, log):
        session, clock = log
        for i in range(3):
            session.log("feature-invocation", f"op{i}")
        session.flush()
        session.close()
        records = read_log(session.path)
        # session-open + 3 ops
        assert [r.feature for r in records][1:] == ["op0", "op1", "op2"]

    def test_unknown_kind_rejected(self, log):
        session, clock = log
        with pytest.raises(ValueError):
            session.log("telepathy", "x")


class TestWpm:
    def test_basic_arithmetic(self, log):
        session, clock = log
        # 120 words of human edits within the 60s window -> wpm 120
        for _ in range(4):
            session.log("edit", "apply-edit",
                        {"origin": "human", "words_added": 30})
            clock.advance(10)
        assert session.wpm(60) == 120.0

    def test_ai_accepted_words_count_zero(self, log):
        session, clock = log
        session.log("feature-invocation", "placeholder-accept",
                    {"words_added": 50})
        clock.advance(5)
        assert session.wpm(60) == 0.0

    def test_window_excludes_old_edits(self, log):
        session, clock = log
        session.log("edit", "apply-edit", {"origin": "human", "words_added": 30})
        clock.advance(120)
        assert session.wpm(60) == 0.0

    def test_workspace_edits_flow_into_wpm(self, tmp_path):
        clock = FakeClock()
        session = SessionLog(tmp_path / "e.jsonl", clock=clock)
        ws = make_workspace(telemetry=session)
        try:
            layer = ws.new_writing_layer("L")
            ws.apply_edit(layer.layer_id, "insert", layer.blocks[0].block_id, 0,
                          text="five words typed right now")
            assert session.wpm(60) == 5.0
        finally:
            ws.close()

    def test_sample_logs_record(self, log):
        session, clock = log
        session.log("edit", "apply-edit", {"origin": "human", "words_added": 60})
        value = session.sample_wpm(60)
        assert value == 60.0
        samples = [r for r in session.records() if r.kind == "wpm-sample"]
        assert samples and samples[-1].wpm_sample == 60.0


class TestReplay:
    def test_counts_and_timeline(self, tmp_path):
        clock = FakeClock()
        session = SessionLog(tmp_path / "r.jsonl", session_id="abc", clock=clock)
        for feature in ["create-layer", "create-layer", "tear", "combine",
                        "invoke-danny"]:
            session.log("feature-invocation", feature)
        session.log("compile", "compile", {"doc_id": "D1"})
        session.flush()
        session.close()
        sessions = replay(session.path)
        summary = sessions["abc"]
        assert summary.count("create-layer") == 2
        assert summary.count("tear") == 1
        assert summary.count("compile") == 1
        rendered = render_usage_tree(sessions)
        assert "session abc" in rendered
        assert "create-layer x2" in rendered
        assert "timeline: create-layer -> create-layer -> tear" in rendered

    def test_replay_ignores_prompts_and_edits(self, tmp_path):
        clock = FakeClock()
        session = SessionLog(tmp_path / "r2.jsonl", session_id="s", clock=clock)
        session.log("user-prompt", "elaborate", {"prompt": "secret"})
        session.log("edit", "apply-edit", {"origin": "human", "words_added": 3})
        session.log("feature-invocation", "fold")
        session.flush()
        session.close()
        summary = replay(session.path)["s"]
        assert summary.count("fold") == 1
        assert summary.count("apply-edit") == 0
