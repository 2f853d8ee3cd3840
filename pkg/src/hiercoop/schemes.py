"""Unicast schedule builders: three-phase, original h-level hierarchy, modified
hierarchy (MAC cooperation), and the two sessionised variants.

Every builder returns a ScheduleTrace whose top-level events carry `refs`
naming the source of each pair they move, with role depart / relay / deliver.
Bits depart at the start of the phase window in which they leave the source
and arrive at the end of the phase window in which they are decoded.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .analytic import ConstraintError, generalized_mac_threshold
from .mac import MacProblem, full_problem, generalized_mac, recursive_mac
from .netmodel import UNIT_SQUARE, Cell, Network, build_grid, grid_partitioner, iround, partition
from .trace import DELIVER, DEPART, RELAY, Event, Phase, ScheduleTrace, color_layout


def _cell_lookup(cells) -> dict:
    return {int(v): c for c in cells for v in c.nodes}


def _layout(cells, durations: dict, reuse: int) -> tuple[dict, int]:
    items = [(c.index, c.row, c.col, durations.get(c.index, 0)) for c in cells]
    return color_layout(items, reuse)


def _shift_pairing(nodes: np.ndarray) -> np.ndarray:
    # node k sends to node k+1 (cyclically); a permutation without fixed points for len >= 2
    return np.roll(nodes, -1)


def _cooperative(positions, src, dst, region, M, Q, reuse, coop: Callable, scheme: str, depth=0,
                 bulk_per_pair: int | None = None, mimo_slots: int = 1) -> ScheduleTrace:
    """Generic three-phase skeleton; `coop(cell, phase, k_c)` returns (slots, kind, child).

    Bulk per pair defaults to the size of the source's cluster.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.argsort(src)
    src, dst = src[order], dst[order]
    cells = [c for c in partition(positions, src, region, M) if len(c)]
    where = _cell_lookup(cells)
    if bulk_per_pair is None:
        bulk = np.array([len(where[int(s)]) for s in src], dtype=np.int64)
    else:
        bulk = np.full(len(src), bulk_per_pair, dtype=np.int64)
    by_source = {int(s): int(b) for s, b in zip(src, bulk)}
    dest_cell = np.array([where[int(d)].index for d in dst], dtype=np.int64)

    events, phases = [], []

    # phase 1: every source hands one bit to each member of its cluster
    plan = {c.index: coop(c, 1, len(c)) for c in cells}
    offsets, span1 = _layout(cells, {k: v[0] for k, v in plan.items()}, reuse)
    for c in cells:
        slots, kind, child = plan[c.index]
        start = offsets[c.index]
        refs = tuple((int(s), by_source[int(s)]) for s in c.nodes)
        events.append(Event(start, start + slots, "phase 1", kind, (c.index,), sum(b for _, b in refs),
                            depth, DEPART, refs, child, _repeat(slots, child)))
    phases.append(Phase("phase 1", 0, span1))

    # phase 2: one long-range MIMO transmission per source, in source order
    t = span1
    for s, d_cell in zip(src, dest_cell):
        s = int(s)
        events.append(Event(t, t + mimo_slots, "phase 2", "mimo", (where[s].index, int(d_cell)), by_source[s],
                            depth, RELAY, ((s, by_source[s]),)))
        t += mimo_slots
    phases.append(Phase("phase 2", span1, t))

    # phase 3: clusters gather quantised observations for the destinations they hold
    p3 = t
    k_c = np.bincount(dest_cell, minlength=max(c.index for c in cells) + 1)
    plan = {c.index: coop(c, 3, int(k_c[c.index])) for c in cells}
    offsets, span3 = _layout(cells, {k: v[0] for k, v in plan.items()}, reuse)
    delivered: dict = {}
    for s, dc in zip(src, dest_cell):
        delivered.setdefault(int(dc), []).append((int(s), by_source[int(s)]))
    for c in cells:
        refs = tuple(delivered.get(c.index, ()))
        if not refs:
            continue
        slots, kind, child = plan[c.index]
        start = p3 + offsets[c.index]
        events.append(Event(start, start + slots, "phase 3", kind, (c.index,), sum(b for _, b in refs),
                            depth, DELIVER, refs, child, _repeat(slots, child)))
    phases.append(Phase("phase 3", p3, p3 + span3))

    meta = {"M": M, "Q": Q, "reuse": reuse, "clusters": len(cells)}
    return ScheduleTrace(scheme, events, phases, p3 + span3, src, dst, bulk, meta)


def child_slots(child) -> int:
    return child.total_slots if child is not None else 0


def _repeat(slots: int, child) -> int:
    # recurse events run their child back to back
    return slots // child.total_slots if child is not None and child.total_slots else 1


def _check_sizes(net: Network, M: int, Q: int, reuse: int) -> None:
    if not 1 <= M <= net.n:
        raise ConstraintError(f"need 1 <= M <= n, got M={M}, n={net.n}")
    if Q < 1:
        raise ValueError(f"Q must be >= 1, got {Q}")
    if reuse < 1:
        raise ValueError(f"reuse must be >= 1, got {reuse}")


def _tdma_coop(Q: int):
    def coop(cell: Cell, phase: int, k: int):
        size = len(cell)
        if phase == 1:
            return size * (size - 1), "tdma", None
        return Q * (size - 1) * k, "tdma", None
    return coop


def build_three_phase(net: Network, M1: int, Q: int = 2, reuse: int = 9) -> ScheduleTrace:
    """Distribute in-cluster by TDMA, n sequential MIMO slots, collect Q-bit observations by TDMA.

    Bulk per pair is the size of the source's cluster (M1 on ideal instances).
    """
    _check_sizes(net, M1, Q, reuse)
    nodes = np.arange(net.n)
    return _cooperative(net.positions, nodes, net.pairing, UNIT_SQUARE, M1, Q, reuse, _tdma_coop(Q), "threePhase")


def _h_level(positions, src, dst, region, ms: tuple, Q: int, reuse: int, depth: int) -> ScheduleTrace:
    if len(ms) == 1:
        return _cooperative(positions, src, dst, region, ms[0], Q, reuse, _tdma_coop(Q), "hLevel", depth)
    M = ms[0]
    cells = [c for c in partition(positions, np.sort(src), region, M) if len(c)]
    sizes = {len(c) for c in cells}
    if sizes != {M}:
        raise ValueError(f"original hierarchy needs clusters of exactly {M} nodes at depth {depth}, "
                         f"got sizes {sorted(sizes)}; use an ideal instance or modifiedHier")
    children = {}
    for c in cells:
        local = c.nodes
        children[c.index] = _h_level(positions, local, _shift_pairing(local), c.region, ms[1:], Q, reuse, depth + 1)

    def coop(cell, phase, k):
        child = children[cell.index]
        rounds = (M - 1) if phase == 1 else Q * (M - 1)
        # every member hears from each other member once per sub-phase; k == M on balanced clusters
        return rounds * child.total_slots, "recurse", child

    # B = prod(ms) bits per pair; each pair gets B/M MIMO slots
    trace = _cooperative(positions, src, dst, region, M, Q, reuse, coop, "hLevel", depth,
                         bulk_per_pair=math.prod(ms), mimo_slots=math.prod(ms[1:]))
    trace.meta.update({"ms": tuple(ms), "pairing": "shift-1 inside each cluster"})
    return trace


def build_h_level(net: Network, ms, Q: int = 2, reuse: int = 9) -> ScheduleTrace:
    """Original h-level hierarchy: the cooperation phases at each depth run M-1 (and Q(M-1))
    sub-phases of the next depth's scheme; the deepest level uses TDMA.

    Needs balanced clusters at every depth (ideal instances); h = 1 is the three-phase scheme.
    """
    ms = tuple(int(m) for m in ms)
    if not ms:
        raise ValueError("need at least one cluster size")
    if any(a <= b for a, b in zip(ms, ms[1:])):
        raise ConstraintError(f"cluster sizes must be strictly decreasing, got {ms}")
    _check_sizes(net, ms[0], Q, reuse)
    if ms[-1] < 1:
        raise ConstraintError(f"cluster sizes must be >= 1, got {ms}")
    if len(ms) == 1:
        return build_three_phase(net, ms[0], Q, reuse)
    return _h_level(net.positions, np.arange(net.n), net.pairing, UNIT_SQUARE, ms, Q, reuse, 0)


def build_modified_hier(net: Network, M: int, Q: int = 2, mac_levels: int = 2, reuse: int = 9) -> ScheduleTrace:
    """Three phases where both cooperation phases are network-MAC instances inside each cluster."""
    _check_sizes(net, M, Q, reuse)
    if mac_levels < 1:
        raise ValueError(f"MAC levels must be >= 1, got {mac_levels}")
    split = grid_partitioner(net)
    schedules: dict = {}

    def coop(cell, phase, k):
        if len(cell) < 2:
            return 0, "recurse", None
        L = 1 if phase == 1 else Q
        key = (cell.index, L)
        if key not in schedules:
            schedules[key] = recursive_mac(full_problem(cell.nodes, L, Q, cell.region), mac_levels, split, reuse)
        sched = schedules[key]
        return sched.total_slots, "recurse", sched

    trace = _cooperative(net.positions, np.arange(net.n), net.pairing, UNIT_SQUARE, M, Q, reuse, coop,
                         "modifiedHier")
    trace.meta["mac_levels"] = mac_levels
    return trace


# --- sessions ---

def _active_count(active, n: int, M: int, clusters: int) -> int:
    if active in (None, "n/M", "n/M1", "all"):
        return clusters
    if active == "M":
        return M
    k = int(active)
    if k < 1:
        raise ValueError(f"active count must be >= 1, got {active}")
    return k


def _pick(queues: list, pointer: int, count: int) -> tuple[list, int, int]:
    """Next `count` clusters (cyclic) that still have work; returns (indices, pointer, skipped)."""
    chosen, skipped = [], 0
    k = len(queues)
    for _ in range(k):
        if len(chosen) == count:
            break
        i = pointer % k
        pointer += 1
        if queues[i]:
            chosen.append(i)
        else:
            skipped += 1
    return chosen, pointer, skipped


def build_session(net: Network, M: int, Q: int = 2, active="n/M", reuse: int = 9, seed: int = 0) -> ScheduleTrace:
    """Sessionised three-phase scheme.

    Each session serves one unserved source (chosen uniformly) from each of `active`
    clusters: "n/M" takes every cluster, "M" or an integer takes that many
    clusters in cyclic order. Phase 1 costs |c|-1 slots per cluster, phase 2 one
    MIMO slot per served pair, phase 3 Q(|c|-1) slots per destination the cluster holds.
    """
    _check_sizes(net, M, Q, reuse)
    grid = build_grid(net, M)
    cells = [c for c in grid.cells if len(c)]
    count = _active_count(active, net.n, M, len(cells))
    rng = np.random.default_rng(seed)
    queues = [list(rng.permutation(c.nodes)) for c in cells]
    cell_pos = {c.index: k for k, c in enumerate(cells)}
    size = grid.sizes()
    bulk = size[grid.assignment]

    events, phases = [], []
    t, pointer, skipped, session = 0, 0, 0, 0
    spans = []
    while any(queues):
        chosen, pointer, skip = _pick(queues, pointer, count)
        skipped += skip
        served = [(cells[i], int(queues[i].pop())) for i in chosen]
        label = f"session {session}"
        t0 = t

        durations = {c.index: len(c) - 1 for c, _ in served}
        offsets, span = color_layout([(c.index, c.row, c.col, durations[c.index]) for c, _ in served], reuse)
        for c, s in served:
            start = t + offsets[c.index]
            events.append(Event(start, start + durations[c.index], f"{label}/phase 1", "tdma", (c.index,),
                                durations[c.index], 0, DEPART, ((s, int(bulk[s])),)))
        phases.append(Phase(f"{label}/phase 1", t, t + span))
        t += span

        for c, s in served:
            d = int(net.pairing[s])
            events.append(Event(t, t + 1, f"{label}/phase 2", "mimo", (c.index, int(grid.assignment[d])),
                                int(bulk[s]), 0, RELAY, ((s, int(bulk[s])),)))
            t += 1
        phases.append(Phase(f"{label}/phase 2", t - len(served), t))

        by_cell: dict = {}
        for _, s in served:
            by_cell.setdefault(int(grid.assignment[net.pairing[s]]), []).append(s)
        items = []
        for idx, srcs in by_cell.items():
            c = cells[cell_pos[idx]]
            items.append((idx, c.row, c.col, Q * (len(c) - 1) * len(srcs)))
        offsets, span = color_layout(items, reuse)
        for idx, _, _, dur in items:
            start = t + offsets[idx]
            refs = tuple((s, int(bulk[s])) for s in by_cell[idx])
            events.append(Event(start, start + dur, f"{label}/phase 3", "tdma", (idx,), dur, 0, DELIVER, refs))
        phases.append(Phase(f"{label}/phase 3", t, t + span))
        t += span
        spans.append(t - t0)
        session += 1

    src = np.arange(net.n)
    meta = {"M": M, "Q": Q, "reuse": reuse, "sessions": session, "active": count, "skipped": skipped,
            "session_spans": spans}
    return ScheduleTrace("session", events, phases, t, src, net.pairing.copy(), bulk.astype(np.int64), meta)


def _small_clusters(net: Network, big: Cell, M2: int) -> list:
    if M2 == 1:
        w = big.region[2]
        return [Cell(k, 0, 0, (*net.positions[v], w), np.array([v])) for k, v in enumerate(big.nodes)]
    return [c for c in partition(net.positions, big.nodes, big.region, M2) if len(c)]


def restricted_active(M1: int, h: int) -> int:
    """Large clusters served per session in the restricted variant: M1^(1/h)."""
    return max(1, iround(M1 ** (1 / h)))


def build_session_hier(net: Network, M1: int, M2: int, Q: int = 2, h1: int = 1, h2: int = 2,
                       active="n/M1", reuse: int = 9, seed: int = 0, check: bool = True) -> ScheduleTrace:
    """Sessionised two-scale hierarchy.

    A session takes one small cluster (about M2 nodes) inside each of `active`
    large clusters (about M1 nodes). Sub-phase 1a: |L| MIMO slots from the small
    cluster to the members of its large cluster; 1b: a recursive MAC with h1
    levels inside the small cluster carrying Q bits; phase 2: one MIMO slot per
    served pair; phase 3: a generalised MAC with h2 levels in every large cluster
    holding destinations. `active` is "n/M1" (all), "restricted" (M1^(1/h2)) or an int.
    """
    _check_sizes(net, M1, Q, reuse)
    if not 1 <= M2 <= M1:
        raise ConstraintError(f"need 1 <= M2 <= M1, got M1={M1}, M2={M2}")
    if h2 != h1 + 1:
        raise ConstraintError(f"two-scale coupling needs h2 = h1 + 1, got h1={h1}, h2={h2}")
    if h1 == 0 and M2 != 1:
        raise ConstraintError("h1 = 0 needs single-node small clusters (M2 = 1)")
    need = generalized_mac_threshold(M1, h2)
    if check and M2 < need:
        raise ConstraintError(f"generalized MAC in the large clusters needs M2 >= M1^((h2-1)/h2) = {need}, got {M2}")

    split = grid_partitioner(net)
    grid = build_grid(net, M1)
    bigs = [c for c in grid.cells if len(c)]
    big_pos = {c.index: k for k, c in enumerate(bigs)}
    if active == "restricted":
        count = restricted_active(M1, h2)
    else:
        count = _active_count(active, net.n, M1, len(bigs))
    rng = np.random.default_rng(seed)
    queues = []
    for c in bigs:
        smalls = _small_clusters(net, c, M2)
        queues.append([smalls[k] for k in rng.permutation(len(smalls))])
    bulk = grid.sizes()[grid.assignment].astype(np.int64)

    events, phases, spans = [], [], []
    t, pointer, skipped, session = 0, 0, 0, 0
    while any(queues):
        chosen, pointer, skip = _pick(queues, pointer, count)
        skipped += skip
        served = [(bigs[i], queues[i].pop()) for i in chosen]
        label = f"session {session}"
        t0 = t

        # 1a: the small cluster beams its sources' bits to every member of the large cluster
        offsets, span = color_layout([(L.index, L.row, L.col, len(L)) for L, _ in served], reuse)
        for L, S in served:
            start = t + offsets[L.index]
            refs = tuple((int(s), int(bulk[s])) for s in S.nodes)
            events.append(Event(start, start + len(L), f"{label}/phase 1a", "mimo", (L.index,),
                                sum(b for _, b in refs), 0, DEPART, refs))
        phases.append(Phase(f"{label}/phase 1a", t, t + span))
        t += span

        # 1b: observations shared inside each small cluster
        items, scheds = [], {}
        for L, S in served:
            if h1 >= 1 and len(S) >= 2:
                sched = recursive_mac(full_problem(S.nodes, Q, Q, S.region), h1, split, reuse)
                scheds[L.index] = sched
                items.append((L.index, L.row, L.col, sched.total_slots))
        offsets, span = color_layout(items, reuse)
        for key, sched in scheds.items():
            start = t + offsets[key]
            events.append(Event(start, start + sched.total_slots, f"{label}/phase 1b", "recurse", (key,),
                                sched.problem.pair_count() * Q, 0, child=sched))
        phases.append(Phase(f"{label}/phase 1b", t, t + span))
        t += span

        # phase 2: one long-range MIMO slot per served pair
        p2 = t
        for L, S in served:
            for s in S.nodes:
                s = int(s)
                d = int(net.pairing[s])
                events.append(Event(t, t + 1, f"{label}/phase 2", "mimo", (L.index, int(grid.assignment[d])),
                                    int(bulk[s]), 0, RELAY, ((s, int(bulk[s])),)))
                t += 1
        phases.append(Phase(f"{label}/phase 2", p2, t))

        # phase 3: generalised MAC towards the destinations each large cluster holds
        targets: dict = {}
        for _, S in served:
            for s in S.nodes:
                d = int(net.pairing[s])
                targets.setdefault(int(grid.assignment[d]), []).append((int(s), d))
        items, scheds = [], {}
        for idx, pairs in targets.items():
            L = bigs[big_pos[idx]]
            sched = None
            if len(L) >= 2:
                prob = MacProblem(L.nodes, [d for _, d in pairs], Q, Q, L.region)
                sched = generalized_mac(prob, h2, split, reuse, check=False)
            scheds[idx] = sched
            items.append((idx, L.row, L.col, child_slots(sched)))
        offsets, span = color_layout(items, reuse)
        for idx, pairs in targets.items():
            start = t + offsets[idx]
            sched = scheds[idx]
            refs = tuple((s, int(bulk[s])) for s, _ in pairs)
            events.append(Event(start, start + child_slots(sched), f"{label}/phase 3", "recurse", (idx,),
                                sum(b for _, b in refs), 0, DELIVER, refs, sched))
        phases.append(Phase(f"{label}/phase 3", t, t + span))
        t += span
        spans.append(t - t0)
        session += 1

    meta = {"M1": M1, "M2": M2, "Q": Q, "h1": h1, "h2": h2, "reuse": reuse, "sessions": session,
            "active": count, "skipped": skipped, "session_spans": spans}
    return ScheduleTrace("sessionHier", events, phases, t, np.arange(net.n), net.pairing.copy(), bulk, meta)
