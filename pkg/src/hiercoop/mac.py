"""Network multiple-access schedules: TDMA, the recursive two-phase scheme, and the
generalized variant where every node talks to a random subset of targets.

One slot of a MIMO transmission moves one bit from each node of the transmit
cluster; TDMA moves one bit per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import calibration
from .analytic import ConstraintError, _mac_split, generalized_mac_bound, generalized_mac_threshold
from .netmodel import UNIT_SQUARE, Network, grid_partitioner
from .trace import Event, Phase, ScheduleTrace, color_layout


@dataclass(frozen=True, eq=False)
class MacProblem:
    nodes: np.ndarray
    targets: np.ndarray
    bits_per_pair: int = 1
    q: int = 2
    region: tuple = UNIT_SQUARE

    def __post_init__(self):
        nodes = np.unique(np.asarray(self.nodes, dtype=np.int64))
        targets = np.unique(np.asarray(self.targets, dtype=np.int64))
        if len(targets) < 1:
            raise ValueError("MAC problem needs at least one target")
        if not np.all(np.isin(targets, nodes)):
            raise ValueError("targets must be a subset of nodes")
        if self.bits_per_pair < 1 or self.q < 1:
            raise ValueError("bits per pair and Q must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "targets", targets)

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def A(self) -> int:
        return len(self.targets)

    @property
    def full(self) -> bool:
        return self.A == self.m

    def pair_count(self) -> int:
        return self.m * self.A - self.A  # every target is also a node


def full_problem(nodes, bits_per_pair: int = 1, q: int = 2, region=UNIT_SQUARE) -> MacProblem:
    return MacProblem(nodes, nodes, bits_per_pair, q, region)


def random_targets(nodes, A: int, rng: np.random.Generator) -> np.ndarray:
    """A targets drawn uniformly without replacement."""
    nodes = np.asarray(nodes)
    return np.sort(rng.choice(nodes, size=A, replace=False))


@dataclass(eq=False)
class _Round:
    sources: np.ndarray
    start: int
    coop_start: int
    # (cell nodes, child schedule or None, offset into the cooperate phase)
    placements: list


@dataclass(eq=False)
class MacSchedule:
    problem: MacProblem
    levels: int
    trace: ScheduleTrace
    claimed_bound: float
    rounds: list = field(default_factory=list)
    _last: dict | None = field(default=None, repr=False)

    @property
    def total_slots(self) -> int:
        return self.trace.total_slots

    @property
    def is_tdma(self) -> bool:
        return not self.rounds

    def _tdma_deliveries(self) -> Iterator[tuple]:
        L = self.problem.bits_per_pair
        targets = self.problem.targets
        k = 0
        for s in self.problem.nodes:
            for t in targets:
                if t != s:
                    k += 1
                    yield int(s), int(t), L, k * L

    def _round_arrivals(self, rnd: _Round) -> dict:
        """Slot after which each target holds everything sent to it in this round."""
        L = self.problem.bits_per_pair
        index = {int(t): i for i, t in enumerate(self.problem.targets)}
        out = {}
        for cell_nodes, child, offset in rnd.placements:
            last = child.last_arrivals() if child is not None else {}
            for t in cell_nodes:
                t = int(t)
                if t not in index:
                    continue
                if t in last:
                    out[t] = rnd.coop_start + offset + last[t]
                else:  # alone in its cluster: its own observation is all it needs
                    out[t] = rnd.start + (index[t] + 1) * L
        return out

    def deliveries(self) -> Iterator[tuple]:
        """(source, target, bits, arrival slot) for every ordered pair."""
        if self.is_tdma:
            yield from self._tdma_deliveries()
            return
        L = self.problem.bits_per_pair
        for rnd in self.rounds:
            arrivals = self._round_arrivals(rnd)
            for t in self.problem.targets:
                t = int(t)
                for s in rnd.sources:
                    if s != t:
                        yield int(s), t, L, arrivals[t]

    def last_arrivals(self) -> dict:
        if self._last is None:
            last: dict = {}
            if self.is_tdma:
                for _, t, _, arr in self._tdma_deliveries():
                    last[t] = arr
            else:
                for rnd in self.rounds:
                    arrivals = self._round_arrivals(rnd)
                    for t, arr in arrivals.items():
                        if len(rnd.sources) > 1 or rnd.sources[0] != t:
                            last[t] = max(last.get(t, 0), arr)
            self._last = last
        return self._last

    def children(self) -> list:
        seen, out = set(), []
        for rnd in self.rounds:
            for _, child, _ in rnd.placements:
                if child is not None and id(child) not in seen:
                    seen.add(id(child))
                    out.append(child)
        return out

    def verify(self) -> None:
        """Exhaustive delivery check, recursing into the cooperation sub-problems.

        Raises AssertionError naming the first missing or duplicated triple.
        """
        p = self.problem
        seen = set()
        for s, t, bits, arr in self.deliveries():
            assert (s, t) not in seen, f"pair {s}->{t} delivered twice"
            assert bits == p.bits_per_pair, f"pair {s}->{t} got {bits} bits, expected {p.bits_per_pair}"
            assert 0 < arr <= self.total_slots, f"pair {s}->{t} arrives at {arr} outside [1, {self.total_slots}]"
            seen.add((s, t))
        assert len(seen) == p.pair_count(), f"{p.pair_count() - len(seen)} (source, target) pairs undelivered"
        for rnd in self.rounds:
            for cell_nodes, child, _ in rnd.placements:
                if child is None:
                    continue
                assert np.array_equal(child.problem.nodes, np.sort(cell_nodes))
                want = np.intersect1d(cell_nodes, p.targets)
                assert np.array_equal(child.problem.targets, want)
                assert child.problem.bits_per_pair == p.bits_per_pair * p.q
        for child in self.children():
            child.verify()


def _bound(problem: MacProblem, levels: int) -> float:
    if problem.full:
        return calibration.MAC_K * problem.m ** ((levels + 1) / levels)
    return generalized_mac_bound(problem.m, problem.A, levels, calibration.GENERALIZED_MAC_K)


def _tdma(problem: MacProblem, depth: int, levels: int) -> MacSchedule:
    total = problem.pair_count() * problem.bits_per_pair
    ev = Event(0, total, "tdma", "tdma", (), total, depth)
    trace = ScheduleTrace("tdma", [ev], [Phase("tdma", 0, total)], total)
    return MacSchedule(problem, 1, trace, _bound(problem, levels))


def tdma_mac(problem: MacProblem) -> MacSchedule:
    """One (source, target, bit) per slot, round-robin by source then target."""
    if problem.m < 2:
        raise ValueError("TDMA needs at least 2 nodes")
    return _tdma(problem, 0, 1)


def _build(problem: MacProblem, levels: int, split, reuse: int, depth: int) -> MacSchedule:
    m = problem.m
    M = _mac_split(m, levels)
    if M is None:
        if levels >= 2 and m >= 2:
            return _build(problem, levels - 1, split, reuse, depth)
        return _tdma(problem, depth, levels)

    L, Q = problem.bits_per_pair, problem.q
    cells = [c for c in split(problem.nodes, problem.region, M) if len(c)]
    target_set = set(problem.targets.tolist())
    placements, items = [], []
    for cell in cells:
        local_targets = np.array([v for v in cell.nodes if int(v) in target_set], dtype=np.int64)
        child = None
        if len(cell) > 1 and len(local_targets):
            # clusters well below M fall back to TDMA so completeness stays exact
            sub_levels = levels - 1 if 2 * len(cell) >= M else 1
            sub = MacProblem(cell.nodes, local_targets, L * Q, Q, cell.region)
            child = _build(sub, sub_levels, split, reuse, depth + 1)
        placements.append((cell, child))
        items.append((cell.index, cell.row, cell.col, child.total_slots if child else 0))
    offsets, coop_span = color_layout(items, reuse)

    A = problem.A
    mimo_span = L * A
    events, phases, rounds = [], [], []
    t = 0
    for r, S in enumerate(cells):
        mimo_bits = L * (A * len(S) - len(np.intersect1d(S.nodes, problem.targets)))
        label = f"round {r}"
        events.append(Event(t, t + mimo_span, f"{label}/mimo", "mimo", (S.index,), mimo_bits, depth))
        phases.append(Phase(f"{label}/mimo", t, t + mimo_span))
        coop = t + mimo_span
        for cell, child in placements:
            if child is None:
                continue
            start = coop + offsets[cell.index]
            bits = child.problem.pair_count() * child.problem.bits_per_pair
            events.append(Event(start, start + child.total_slots, f"{label}/cooperate", "recurse",
                                (cell.index,), bits, depth, child=child))
        phases.append(Phase(f"{label}/cooperate", coop, coop + coop_span))
        rounds.append(_Round(S.nodes, t, coop, [(c.nodes, ch, offsets[c.index]) for c, ch in placements]))
        t = coop + coop_span
    trace = ScheduleTrace("mac", events, phases, t, meta={"levels": levels, "cluster_size": M})
    return MacSchedule(problem, levels, trace, _bound(problem, levels), rounds)


def _splitter(grid):
    if isinstance(grid, Network):
        return grid_partitioner(grid)
    return grid


def recursive_mac(problem: MacProblem, levels: int, grid, reuse: int = 9) -> MacSchedule:
    """Clusters of M = m^(1/b) take turns: m MIMO slots out of the cluster, then every
    cluster solves an M-node MAC carrying the Q-bit quantised observations.

    `grid` is a Network or a partitioner callable (nodes, region, target) -> cells.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if problem.m < 2:
        raise ValueError("MAC needs at least 2 nodes")
    if not problem.full:
        raise ValueError("recursive MAC serves every node; use generalized_mac for target subsets")
    return _build(problem, levels, _splitter(grid), reuse, 0)


def generalized_mac(problem: MacProblem, levels: int, grid, reuse: int = 9, check: bool = True) -> MacSchedule:
    """Two-phase recursion where each source cluster fires only A MIMO slots (one per
    target) and each cluster then collects observations for the targets it holds."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if problem.m < 2:
        raise ValueError("MAC needs at least 2 nodes")
    need = generalized_mac_threshold(problem.m, levels)
    if check and problem.A < need:
        raise ConstraintError(
            f"generalized MAC with {levels} levels needs A >= m^((h-1)/h) = {need} targets "
            f"(m={problem.m}), got A={problem.A}")
    return _build(problem, levels, _splitter(grid), reuse, 0)
