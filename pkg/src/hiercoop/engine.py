"""Execute schedule traces against a bit ledger, the balls-into-bins checker, and
the trace-vs-closed-form harness."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .trace import DELIVER, DEPART, RELAY, ScheduleTrace


class CompletenessError(RuntimeError):
    """Some (source, destination) pair did not receive exactly its bulk."""

    def __init__(self, message: str, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class DegenerateRunError(ValueError):
    """Nothing to measure: zero bits or zero slots."""


class OracleMismatch(AssertionError):
    def __init__(self, report: "OracleReport"):
        super().__init__(report.describe())
        self.report = report


@dataclass
class BitLedger:
    """One batch per top-level pair; departure/arrival are filled by execute()."""
    source: np.ndarray
    destination: np.ndarray
    size: np.ndarray
    departure: np.ndarray = None
    arrival: np.ndarray = None

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=np.int64)
        self.destination = np.asarray(self.destination, dtype=np.int64)
        self.size = np.asarray(self.size, dtype=np.int64)
        if not len(self.source) == len(self.destination) == len(self.size):
            raise ValueError("ledger columns differ in length")
        if np.any(self.size < 1):
            raise ValueError("every batch needs at least one bit")
        if len(np.unique(self.source)) != len(self.source):
            raise ValueError("one batch per source")
        if self.departure is None:
            self.departure = np.full(len(self.source), -1, dtype=np.int64)
        if self.arrival is None:
            self.arrival = np.full(len(self.source), -1, dtype=np.int64)

    @classmethod
    def from_trace(cls, trace: ScheduleTrace) -> "BitLedger":
        return cls(trace.sources, trace.destinations, trace.bulk)

    @property
    def total_bits(self) -> int:
        return int(self.size.sum())

    def __len__(self):
        return len(self.source)


@dataclass(frozen=True)
class Metrics:
    throughput: float
    mean_delay: float
    max_delay: int
    bulk_size: int
    total_slots: int
    per_pair_rate: float
    total_bits: int
    n: int

    def row(self) -> dict:
        return {
            "throughput": self.throughput, "meanDelay": self.mean_delay, "maxDelay": self.max_delay,
            "bulkSize": self.bulk_size, "totalSlots": self.total_slots, "perPairRate": self.per_pair_rate,
        }


def execute(trace: ScheduleTrace, ledger: BitLedger | None = None, n: int | None = None) -> Metrics:
    """Replay the top-level events, stamp departure/arrival per batch, and measure.

    A batch departs at the start of the phase window holding its depart event and
    arrives at the end of the window holding its last deliver event. Each role must
    account for exactly the batch's size, otherwise CompletenessError.
    """
    if ledger is None:
        ledger = BitLedger.from_trace(trace)
    if len(ledger) == 0 or ledger.total_bits == 0:
        raise DegenerateRunError("empty ledger: throughput and delay are undefined")
    if trace.total_slots <= 0:
        raise DegenerateRunError("trace has no slots")

    windows = {p.label: (p.start, p.end) for p in trace.phases}
    row = {int(s): i for i, s in enumerate(ledger.source)}
    moved = {role: np.zeros(len(ledger), dtype=np.int64) for role in (DEPART, RELAY, DELIVER)}
    depart = np.full(len(ledger), np.iinfo(np.int64).max, dtype=np.int64)
    arrive = np.full(len(ledger), -1, dtype=np.int64)
    for ev in trace.events:
        if not ev.refs:
            continue
        w0, w1 = windows.get(ev.phase, (ev.start, ev.end))
        for s, bits in ev.refs:
            i = row.get(int(s))
            if i is None:
                raise CompletenessError(f"event in '{ev.phase}' references unknown source {s}", [(s, None)])
            moved[ev.role][i] += bits
            if ev.role == DEPART:
                depart[i] = min(depart[i], w0)
            elif ev.role == DELIVER:
                arrive[i] = max(arrive[i], w1)

    for role, got in moved.items():
        bad = np.flatnonzero(got != ledger.size)
        if len(bad):
            pairs = [(int(ledger.source[i]), int(ledger.destination[i])) for i in bad[:10]]
            raise CompletenessError(
                f"{len(bad)} pairs with wrong {role} bit count, first {pairs} "
                f"(got {got[bad[0]]}, expected {ledger.size[bad[0]]})", pairs)
    if np.any(arrive < depart):
        i = int(np.flatnonzero(arrive < depart)[0])
        raise CompletenessError(f"pair {ledger.source[i]} is delivered before it departs",
                                [(int(ledger.source[i]), int(ledger.destination[i]))])

    ledger.departure = depart
    ledger.arrival = arrive
    delay = arrive - depart
    total = ledger.total_bits
    mean_delay = float(np.dot(delay, ledger.size) / total)
    n = n or len(ledger)
    throughput = total / trace.total_slots
    return Metrics(throughput, mean_delay, int(delay.max()), int(ledger.size.max()), trace.total_slots,
                   throughput / n, total, n)


# --- balls into bins ---

@dataclass
class BinsReport:
    trials: int
    n: int
    f: int
    max_load: np.ndarray
    min_load: np.ndarray
    mean_load: np.ndarray

    def fraction_max_below(self, bound: float) -> float:
        return float(np.mean(self.max_load <= bound))

    def fraction_within(self, lo: float, hi: float) -> float:
        return float(np.mean((self.min_load >= lo) & (self.max_load <= hi)))

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "maxLoad", "meanLoad"])
        for k in range(self.trials):
            w.writerow([k, int(self.max_load[k]), repr(float(self.mean_load[k]))])


def balls_bins(n: int, f: int, trials: int, seed: int = 0) -> BinsReport:
    """Throw f balls into n bins uniformly, `trials` times with per-trial spawned seeds."""
    if n < 1 or f < 0 or trials < 1:
        raise ValueError(f"need n >= 1, f >= 0, trials >= 1; got n={n}, f={f}, trials={trials}")
    children = np.random.SeedSequence(seed).spawn(trials)
    hi = np.empty(trials, dtype=np.int64)
    lo = np.empty(trials, dtype=np.int64)
    for k, ss in enumerate(children):
        loads = np.bincount(np.random.default_rng(ss).integers(0, n, size=f), minlength=n)
        hi[k], lo[k] = loads.max(), loads.min()
    return BinsReport(trials, n, f, hi, lo, np.full(trials, f / n))


def regime_b_bound(n: int, c: float) -> float:
    return c * math.log2(n)


# --- oracle harness ---

@dataclass
class OracleReport:
    ok: bool
    mode: str
    measured: int
    predicted: int
    tolerance: float
    phase: str | None = None
    phase_measured: int | None = None
    phase_predicted: int | None = None
    per_phase: dict = field(default_factory=dict)

    def describe(self) -> str:
        head = f"{self.mode}: trace {self.measured} slots vs predicted {self.predicted}"
        if self.ok:
            return head + " (ok)"
        if self.phase:
            return head + f"; first divergent phase '{self.phase}': {self.phase_measured} vs {self.phase_predicted}"
        return head


def phase_profile(trace: ScheduleTrace) -> dict:
    """Slots per phase kind; session traces report the worst session instead of the sum."""
    if not trace.meta.get("sessions"):
        return trace.phase_durations()
    out: dict = {}
    for p in trace.phases:
        out[p.kind] = max(out.get(p.kind, 0), p.end - p.start)
    return out


def verify_against_analytic(trace: ScheduleTrace, predicted, mode: str = "exact", tolerance: float = 0.0,
                            raise_on_mismatch: bool = False) -> OracleReport:
    """exact: total slots equal; bounded: trace <= predicted * (1 + tolerance).

    For session traces the bounded check applies per session (worst span and worst
    phase) since the closed form bounds one session.
    """
    if mode not in ("exact", "bounded"):
        raise ValueError(f"mode must be 'exact' or 'bounded', got {mode!r}")
    prof = phase_profile(trace)
    sessions = trace.meta.get("sessions")
    if sessions and mode == "bounded":
        measured = max(trace.meta["session_spans"])
        target = predicted.delay
    else:
        measured, target = trace.total_slots, predicted.total_slots

    def fits(got, want):
        return got == want if mode == "exact" else got <= want * (1 + tolerance)

    report = OracleReport(fits(measured, target), mode, measured, int(math.ceil(target)), tolerance,
                          per_phase=prof)
    if not report.ok:
        # phase breakdown only explains a failure, it does not decide one
        for label, want in predicted.phases.items():
            got = prof.get(label, 0)
            if not fits(got, want):
                report.phase, report.phase_measured, report.phase_predicted = label, got, want
                break
    if raise_on_mismatch and not report.ok:
        raise OracleMismatch(report)
    return report
