"""Round and byte accounting.

A round is a level of causal depth. Each message carries
``depth = 1 + (deepest message its sender has received in that phase)``, so
messages sent without waiting on each other share a level, and a message
that answers one just received opens the next. The round count of a phase is
its deepest level. The count depends only on the order of receive calls in
the protocol code, never on timing.

For breakdowns, each level is owned by the lowest segment (token index) and,
separately, the lowest protocol id among the messages at that level; both
breakdowns therefore sum to the phase total.
"""

import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

from .message import Phase, ProtocolId

MB = 1_000_000


class Recorder:
    """Thread-safe sink for per-message metrics."""

    def __init__(self, keep_frames=False):
        self._lock = threading.Lock()
        self._stats = defaultdict(lambda: [0, 0])  # (phase, proto, seg, src, dst) -> [bytes, msgs]
        self._levels = {p: {} for p in Phase}  # level -> [min segment, min protocol]
        self._durations = defaultdict(float)
        self.keep_frames = keep_frames
        self.frames = []

    def record(self, src, dst, msg, nbytes, segment=0, frame=None):
        key = (msg.phase, msg.protocol, segment, int(src), int(dst))
        with self._lock:
            entry = self._stats[key]
            entry[0] += nbytes
            entry[1] += 1
            owner = self._levels[msg.phase].get(msg.depth)
            if owner is None:
                self._levels[msg.phase][msg.depth] = [segment, int(msg.protocol)]
            else:
                owner[0] = min(owner[0], segment)
                owner[1] = min(owner[1], int(msg.protocol))
            if self.keep_frames and frame is not None:
                self.frames.append((int(src), int(dst), frame))

    def add_duration(self, name, seconds):
        with self._lock:
            self._durations[name] += seconds

    @contextmanager
    def timer(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add_duration(name, time.perf_counter() - start)

    def snapshot(self):
        with self._lock:
            return Transcript(
                stats={k: tuple(v) for k, v in self._stats.items()},
                levels={p: {lvl: tuple(o) for lvl, o in lv.items()}
                        for p, lv in self._levels.items()},
                durations=dict(self._durations),
            )


@dataclass(frozen=True)
class Transcript:
    """Immutable snapshot of a session's metrics."""

    stats: dict = field(default_factory=dict)
    levels: dict = field(default_factory=lambda: {p: {} for p in Phase})
    durations: dict = field(default_factory=dict)

    def _sum(self, phase, idx):
        phase = Phase(phase)
        return sum(v[idx] for k, v in self.stats.items() if k[0] == phase)

    def bytes(self, phase=Phase.ONLINE):
        return self._sum(phase, 0)

    def messages(self, phase=Phase.ONLINE):
        return self._sum(phase, 1)

    def rounds(self, phase=Phase.ONLINE):
        return len(self.levels.get(Phase(phase), {}))

    def megabytes(self, phase=Phase.ONLINE):
        return self.bytes(phase) / MB

    def pair_bytes(self, phase=Phase.ONLINE):
        out = defaultdict(int)
        for (ph, _, _, src, dst), (b, _) in self.stats.items():
            if ph == Phase(phase):
                out[(src, dst)] += b
        return dict(out)

    def by_protocol(self, phase=Phase.ONLINE):
        phase = Phase(phase)
        out = defaultdict(lambda: {"bytes": 0, "messages": 0, "rounds": 0})
        for (ph, proto, _, _, _), (b, m) in self.stats.items():
            if ph == phase:
                out[ProtocolId(proto)]["bytes"] += b
                out[ProtocolId(proto)]["messages"] += m
        for _, proto in self.levels.get(phase, {}).values():
            out[ProtocolId(proto)]["rounds"] += 1
        return dict(out)

    def by_segment(self, phase=Phase.ONLINE):
        phase = Phase(phase)
        out = defaultdict(lambda: {"bytes": 0, "messages": 0, "rounds": 0})
        for (ph, _, seg, _, _), (b, m) in self.stats.items():
            if ph == phase:
                out[seg]["bytes"] += b
                out[seg]["messages"] += m
        for seg, _ in self.levels.get(phase, {}).values():
            out[seg]["rounds"] += 1
        return dict(sorted(out.items()))

    def since(self, earlier: "Transcript"):
        """Metrics accumulated after ``earlier`` was taken (same session)."""
        stats = {}
        for k, (b, m) in self.stats.items():
            b0, m0 = earlier.stats.get(k, (0, 0))
            if b - b0 or m - m0:
                stats[k] = (b - b0, m - m0)
        levels = {p: {lvl: o for lvl, o in lv.items()
                      if lvl > max(earlier.levels.get(p, {}), default=0)}
                  for p, lv in self.levels.items()}
        durations = {k: v - earlier.durations.get(k, 0.0) for k, v in self.durations.items()}
        return Transcript(stats, levels, durations)

    def merge(self, other: "Transcript"):
        """Combine transcripts recorded by separate processes of one session."""
        stats = dict(self.stats)
        for k, (b, m) in other.stats.items():
            b0, m0 = stats.get(k, (0, 0))
            stats[k] = (b0 + b, m0 + m)
        levels = {}
        for p in Phase:
            lv = dict(self.levels.get(p, {}))
            for lvl, (seg, proto) in other.levels.get(p, {}).items():
                if lvl in lv:
                    lv[lvl] = (min(lv[lvl][0], seg), min(lv[lvl][1], proto))
                else:
                    lv[lvl] = (seg, proto)
            levels[p] = lv
        durations = dict(self.durations)
        for k, v in other.durations.items():
            durations[k] = max(durations.get(k, 0.0), v)
        return Transcript(stats, levels, durations)

    def to_dict(self):
        out = {"phases": {}, "durations": dict(self.durations)}
        for p in Phase:
            out["phases"][p.name.lower()] = {
                "rounds": self.rounds(p),
                "bytes": self.bytes(p),
                "messages": self.messages(p),
                "protocols": {proto.name.lower(): v for proto, v in
                              sorted(self.by_protocol(p).items())},
            }
        return out

    def to_state(self):
        """Lossless JSON-compatible form, for merging transcripts across processes."""
        return {
            "stats": [[int(ph), int(pr), seg, src, dst, b, m]
                      for (ph, pr, seg, src, dst), (b, m) in sorted(self.stats.items())],
            "levels": {Phase(p).name.lower(): [[lvl, seg, pr] for lvl, (seg, pr) in sorted(lv.items())]
                       for p, lv in self.levels.items()},
            "durations": dict(self.durations),
        }

    @classmethod
    def from_state(cls, state):
        stats = {(Phase(ph), ProtocolId(pr), seg, src, dst): (b, m)
                 for ph, pr, seg, src, dst, b, m in state["stats"]}
        levels = {p: {} for p in Phase}
        for name, rows in state["levels"].items():
            levels[Phase[name.upper()]] = {lvl: (seg, pr) for lvl, seg, pr in rows}
        return cls(stats, levels, dict(state.get("durations", {})))
