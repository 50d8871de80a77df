"""Interaction logging: append-only event records, WPM, and log replay.

The log captures user prompts, feature invocation timestamps, edits, and
words-per-minute samples as line-delimited JSON records. A single
background appender drains a bounded queue, so logging never blocks the
mutation queue. Replay reconstructs a per-session usage summary (layer
creations, tears, combines, friend calls, compiles) from the file alone.

WPM counts human-origin words only: accepted AI text never inflates the
writer's speed.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

EVENT_KINDS = ("feature-invocation", "user-prompt", "edit", "compile", "error",
               "wpm-sample", "session")

WPM_WINDOW_SECONDS = 60.0
WPM_SAMPLE_EVERY = 10.0


@dataclass(frozen=True)
class EventRecord:
    timestamp_ms: int
    session_id: str
    seq: int
    kind: str
    feature: str
    payload: dict = field(default_factory=dict)
    wpm_sample: Optional[float] = None

    def to_json(self) -> str:
        data = {
            "ts": self.timestamp_ms,
            "session": self.session_id,
            "seq": self.seq,
            "kind": self.kind,
            "feature": self.feature,
            "payload": self.payload,
        }
        if self.wpm_sample is not None:
            data["wpm"] = self.wpm_sample
        return json.dumps(data, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        data = json.loads(line)
        return cls(
            timestamp_ms=data["ts"],
            session_id=data["session"],
            seq=data["seq"],
            kind=data["kind"],
            feature=data["feature"],
            payload=data.get("payload", {}),
            wpm_sample=data.get("wpm"),
        )


class SessionLog:
    """Append-only telemetry writer for one session.

    Records are sequenced and timestamp-clamped so per-session order is
    total even when the clock repeats. A bounded queue feeds one appender
    thread; write failures are retried once and then surfaced as a
    warning counter rather than an exception.
    """

    def __init__(self, path, session_id: Optional[str] = None, clock=time.time):
        self.path = Path(path)
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self._clock = clock
        self._seq = 0
        self._last_ts = 0
        self._lock = threading.Lock()
        self._queue: "queue.Queue" = queue.Queue(maxsize=10000)
        self._tail: deque = deque(maxlen=20000)
        self.write_errors = 0
        self._closed = False
        self._thread = threading.Thread(target=self._append_loop,
                                        name="telemetry", daemon=True)
        self._thread.start()
        self.log("session", "session-open", {})

    def log(self, kind: str, feature: str, payload: Optional[dict] = None,
            wpm_sample: Optional[float] = None) -> EventRecord:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            self._seq += 1
            ts = max(int(self._clock() * 1000), self._last_ts)
            self._last_ts = ts
            record = EventRecord(
                timestamp_ms=ts, session_id=self.session_id, seq=self._seq,
                kind=kind, feature=feature, payload=payload or {},
                wpm_sample=wpm_sample)
            self._tail.append(record)
        self._queue.put(record)
        return record

    def _append_loop(self) -> None:
        while True:
            record = self._queue.get()
            if record is None:
                return
            line = record.to_json() + "\n"
            for attempt in (0, 1):
                try:
                    with self.path.open("a", encoding="utf-8") as handle:
                        handle.write(line)
                    break
                except OSError:
                    if attempt == 1:
                        self.write_errors += 1

    def wpm(self, window_seconds: float = WPM_WINDOW_SECONDS,
            now: Optional[float] = None) -> float:
        """Human words inserted in the window, per minute."""
        now_ms = int((now if now is not None else self._clock()) * 1000)
        cutoff = now_ms - int(window_seconds * 1000)
        with self._lock:
            words = sum(
                r.payload.get("words_added", 0)
                for r in self._tail
                if r.kind == "edit"
                and r.payload.get("origin") == "human"
                and cutoff < r.timestamp_ms <= now_ms)
        return words / (window_seconds / 60.0)

    def sample_wpm(self, window_seconds: float = WPM_WINDOW_SECONDS) -> float:
        value = self.wpm(window_seconds)
        self.log("wpm-sample", "wpm", {}, wpm_sample=value)
        return value

    def flush(self, timeout: float = 5.0) -> None:
        deadline = time.time() + timeout
        while not self._queue.empty() and time.time() < deadline:
            time.sleep(0.005)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._queue.put(None)
        self._thread.join(timeout=5.0)

    def records(self) -> tuple:
        with self._lock:
            return tuple(self._tail)


def read_log(path) -> tuple:
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(EventRecord.from_json(line))
    return tuple(records)


@dataclass
class SessionSummary:
    session_id: str
    counts: Counter = field(default_factory=Counter)
    sequence: list = field(default_factory=list)  # (seq, kind, feature)

    def count(self, feature: str) -> int:
        return self.counts.get(feature, 0)


def replay(path) -> dict:
    """Rebuild per-session usage summaries from an event log file."""
    sessions: dict = {}
    for record in sorted(read_log(path), key=lambda r: (r.session_id, r.seq)):
        summary = sessions.setdefault(record.session_id,
                                      SessionSummary(session_id=record.session_id))
        if record.kind in ("feature-invocation", "compile", "error"):
            summary.counts[record.feature] += 1
            summary.sequence.append((record.seq, record.kind, record.feature))
    return sessions


def render_usage_tree(sessions: dict) -> str:
    """Text rendering of the usage summary: counts plus the op timeline."""
    lines = []
    for session_id in sorted(sessions):
        summary = sessions[session_id]
        lines.append(f"session {session_id}")
        for feature, count in sorted(summary.counts.items()):
            lines.append(f"  {feature} x{count}")
        timeline = " -> ".join(feature for _, _, feature in summary.sequence)
        if timeline:
            lines.append(f"  timeline: {timeline}")
    return "\n".join(lines)
