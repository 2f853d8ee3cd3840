"""Slot-interval schedule traces shared by the MAC and unicast builders."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, TextIO

import numpy as np

DEPART, RELAY, DELIVER = "depart", "relay", "deliver"


@dataclass(frozen=True, eq=False)
class Event:
    """A half-open slot interval [start, end) of one activity.

    `refs` names top-level source/destination pairs (by source id) and the bits
    of that pair the event moves; `role` says whether the event is where those
    bits leave their source, cross the network, or get decoded.
    A `recurse` event runs `child` `repeat` times back to back.
    """
    start: int
    end: int
    phase: str
    kind: str  # tdma | mimo | recurse
    clusters: tuple = ()
    payload: int = 0
    depth: int = 0
    role: str = ""
    refs: tuple = ()
    child: Any = None
    repeat: int = 1

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Phase:
    label: str
    start: int
    end: int

    @property
    def kind(self) -> str:
        return self.label.rsplit("/", 1)[-1]


@dataclass(eq=False)
class ScheduleTrace:
    scheme: str
    events: list
    phases: list
    total_slots: int
    # top-level pairs: sources[i] -> destinations[i] carrying bulk[i] bits
    sources: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    destinations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bulk: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    meta: dict = field(default_factory=dict)

    @property
    def total_bits(self) -> int:
        return int(self.bulk.sum())

    def phase_durations(self) -> dict:
        """Slots per phase kind ('phase 1', 'mimo', ...) summed over sessions/rounds."""
        out: dict = {}
        for p in self.phases:
            out[p.kind] = out.get(p.kind, 0) + (p.end - p.start)
        return out

    def iter_events(self, expand: bool = False, offset: int = 0, depth: int = 0) -> Iterator[tuple]:
        """Yield (start, end, event, depth) in pre-order: each event, then (with `expand`)
        every repetition of its child schedule shifted to absolute slots."""
        for ev in self.events:
            yield ev.start + offset, ev.end + offset, ev, depth
            if expand and ev.kind == "recurse" and ev.child is not None:
                child = getattr(ev.child, "trace", ev.child)
                step = child.total_slots
                for r in range(ev.repeat):
                    yield from child.iter_events(True, offset + ev.start + r * step, depth + 1)


def event_record(start: int, end: int, ev: Event, depth: int = 0) -> dict:
    return {
        "slots": [start, end],
        "phase": ev.phase,
        "cluster": list(ev.clusters),
        "kind": ev.kind,
        "payload": ev.payload,
        "depth": depth,  # nesting depth in the streamed trace
        "repeat": ev.repeat,
    }


def write_jsonl(trace: ScheduleTrace, fh: TextIO, expand: bool = False) -> int:
    """Stream one JSON object per event; returns the number of lines written."""
    count = 0
    for start, end, ev, depth in trace.iter_events(expand=expand):
        fh.write(json.dumps(event_record(start, end, ev, depth), separators=(",", ":")))
        fh.write("\n")
        count += 1
    return count


def reuse_side(reuse: int) -> int:
    k = math.isqrt(reuse)
    if reuse < 1 or k * k != reuse:
        raise ValueError(f"spatial reuse factor must be a perfect square (1, 4, 9, ...), got {reuse}")
    return k


def color_layout(items, reuse: int) -> tuple[dict, int]:
    """Time-multiplex cell colour classes; cells of one class run in parallel.

    `items` are (key, row, col, duration). Returns the start offset per key and
    the total span.
    """
    k = reuse_side(reuse)
    classes: dict = {}
    for key, row, col, dur in items:
        classes.setdefault((row % k) * k + col % k, []).append((key, dur))
    offsets = {}
    t = 0
    for color in sorted(classes):
        members = classes[color]
        for key, _ in members:
            offsets[key] = t
        t += max(d for _, d in members)
    return offsets, t
