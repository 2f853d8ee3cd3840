"""Closed-form slot counts, throughput, delay and bulk size for every scheme.

Paper-form counts (``exact=False``) use M^2 for a TDMA exchange among M nodes
and M sub-phases per cooperation phase; ``exact=True`` uses M(M-1) and M-1,
which is what the slot-by-slot builders realise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .netmodel import iround

SCHEMES = ("threePhase", "hLevel", "modifiedHier", "session", "sessionHier")


class ConstraintError(ValueError):
    """A scheme precondition (cluster ordering, generalized-MAC target count) is violated."""


@dataclass
class SchemeParams:
    n: int
    Q: int = 2
    h: int = 1
    h1: int = 0
    h2: int = 1
    ms: tuple = ()
    b: float = 0.5
    K: float = 1.0
    K1: float = 1.0
    K2: float = 1.0
    K3: float = 1.0
    L: int = 1
    log_base: int = 2

    def __post_init__(self):
        ms = tuple(int(m) for m in self.ms)
        if any(a < b for a, b in zip(ms, ms[1:])):
            raise ConstraintError(f"cluster sizes must be non-increasing, got {ms}")
        if ms and not 1 <= ms[-1] <= ms[0] <= self.n:
            raise ConstraintError(f"cluster sizes must lie in [1, n={self.n}], got {ms}")
        self.ms = ms


@dataclass
class AnalyticResult:
    total_slots: int
    bits_delivered: int
    delay: float
    bulk_size: int
    phases: dict = field(default_factory=dict)

    @property
    def throughput(self) -> float:
        return self.bits_delivered / self.total_slots


def _slots(x) -> int:
    # real-valued closed forms are rounded up to whole slots
    if isinstance(x, int):
        return x
    return int(math.ceil(float(x) - 1e-9))


def _tdma(m: int, exact: bool) -> int:
    return m * (m - 1) if exact else m * m


def three_phase_slots(n: int, M1: int, Q: int = 2, L: int = 1, exact: bool = False) -> AnalyticResult:
    if not 1 <= M1 <= n:
        raise ConstraintError(f"need 1 <= M1 <= n, got M1={M1}, n={n}")
    coop = _tdma(M1, exact) * L
    phases = {"phase 1": coop, "phase 2": n, "phase 3": Q * coop}
    total = sum(phases.values())
    return AnalyticResult(total, n * M1, total, M1, phases)


def h_level_slots(n: int, ms: Sequence[int], Q: int = 2, exact: bool = False) -> AnalyticResult:
    """Original hierarchical scheme: cooperation phases run sub-phases of the next level."""
    ms = SchemeParams(n, Q, ms=tuple(ms)).ms
    if len(set(ms)) != len(ms):
        raise ConstraintError(f"cluster sizes must be strictly decreasing, got {ms}")

    def level(m: int, rest: tuple) -> tuple[int, dict]:
        M = rest[0]
        inner_bulk = math.prod(rest[1:])
        if len(rest) == 1:
            coop = _tdma(M, exact)
        else:
            coop = (M - 1 if exact else M) * level(M, rest[1:])[0]
        phases = {"phase 1": coop, "phase 2": m * inner_bulk, "phase 3": Q * coop}
        return sum(phases.values()), phases

    total, phases = level(n, ms)
    bulk = math.prod(ms)
    return AnalyticResult(total, n * bulk, total, bulk, phases)


def two_level_slots(n: int, M1: int, M2: int, Q: int = 2, exact: bool = False) -> AnalyticResult:
    if not 1 <= M2 <= M1 <= n:
        raise ConstraintError(f"need 1 <= M2 <= M1 <= n, got M1={M1}, M2={M2}, n={n}")
    k = M1 - 1 if exact else M1
    inner = _tdma(M2, exact) + M1 + Q * _tdma(M2, exact)
    phases = {"phase 1": k * inner, "phase 2": M2 * n, "phase 3": Q * k * inner}
    total = sum(phases.values())
    return AnalyticResult(total, n * M1 * M2, total, M1 * M2, phases)


def h_level_exponents(h: int) -> tuple[Fraction, Fraction, Fraction]:
    """(throughput, bulk, delay) exponents of the h-level original hierarchy."""
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    return Fraction(h, h + 1), Fraction(h, 2), Fraction(h * h + h + 2, 2 * (h + 1))


def mac_exponent_recursion(levels: int) -> Fraction:
    """Iterate b <- 2 - 1/b from TDMA's b = 2."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    b = Fraction(2)
    for _ in range(levels - 1):
        b = 2 - 1 / b
    return b


def mac_cluster_size(m: int, levels: int) -> int:
    """Cluster size M = m^(1/b) used when solving an m-node MAC with `levels` levels."""
    return max(1, iround(m ** float(1 / mac_exponent_recursion(levels - 1))))


def _mac_split(m: int, levels: int):
    # None when the recursion degenerates to a single cluster
    if levels < 2 or m < 2:
        return None
    M = mac_cluster_size(m, levels)
    if iround(math.sqrt(m / M)) <= 1:
        return None
    return M


def mac_slots(n: int, Q: int = 2, levels: int = 1, L: int = 1, exact: bool = True) -> int:
    """Slots of the recursive network-MAC scheme: (n/M)(L n + Q F(M)) down to TDMA."""
    def F(m, lv, bits) -> Fraction:
        M = _mac_split(m, lv)
        if M is None:
            if lv >= 2 and m >= 2:
                return F(m, lv - 1, bits)
            return Fraction(_tdma(m, exact) * bits)
        return Fraction(m, M) * (bits * m + F(M, lv - 1, Q * bits))

    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    return _slots(F(n, levels, L))


def generalized_mac_bound(m: int, A: int, levels: int, K: float = 1.0) -> float:
    """K (A/m) m^((levels+1)/levels) log2 m."""
    return K * (A / m) * m ** ((levels + 1) / levels) * math.log2(m)


def generalized_mac_threshold(m: int, levels: int) -> int:
    """Smallest admissible target count: round(m^((levels-1)/levels))."""
    return iround(m ** ((levels - 1) / levels))


def modified_hier_throughput(n: int, M: int, Q: int = 2, K: float = 1.0, h: int = 1) -> AnalyticResult:
    """Three phases with MAC cooperation taking K M^((h+1)/h) and K Q M^((h+1)/h) slots."""
    if not 1 <= M <= n:
        raise ConstraintError(f"need 1 <= M <= n, got M={M}, n={n}")
    coop = K * M ** ((h + 1) / h)
    phases = {"phase 1": _slots(coop), "phase 2": n, "phase 3": _slots(Q * coop)}
    total = _slots(coop + n + Q * coop)
    return AnalyticResult(total, M * n, total, M, phases)


def modified_hier_slots(n: int, M: int, Q: int = 2, mac_levels: int = 1, exact: bool = True) -> AnalyticResult:
    """Modified hierarchy with the recursive MAC scheme counted slot for slot."""
    if not 1 <= M <= n:
        raise ConstraintError(f"need 1 <= M <= n, got M={M}, n={n}")
    p1 = mac_slots(M, Q, mac_levels, 1, exact) if M >= 2 else 0
    p3 = mac_slots(M, Q, mac_levels, Q, exact) if M >= 2 else 0
    phases = {"phase 1": p1, "phase 2": n, "phase 3": p3}
    total = p1 + n + p3
    return AnalyticResult(total, M * n, total, M, phases)


def session_slots(n: int, M: int, Q: int = 2, active: int | None = None) -> AnalyticResult:
    """Sessionised three-phase scheme; QM log n bounds phase 3 (max cluster load when balls = bins).

    `active` pairs are served per session: n/M by default, M in the restricted variant.
    """
    if not 1 <= M <= n:
        raise ConstraintError(f"need 1 <= M <= n, got M={M}, n={n}")
    if active is None:
        active = n // M
    log_n = math.log2(n)
    phases = {"phase 1": M, "phase 2": active, "phase 3": _slots(Q * M * log_n)}
    span = _slots(M + active + Q * M * log_n)
    sessions = math.ceil(n / active)
    return AnalyticResult(sessions * span, n * M, span, M, phases)


def session_hier_slots(n: int, M1: int, M2: int, Q: int = 2, h1: int = 1, h2: int = 2,
                       active: int | None = None, check: bool = True) -> AnalyticResult:
    """Two-scale sessionised hierarchy.

    Per session: M1 + Q M2^((h1+1)/h1) slots to set up transmit cooperation,
    active*M2 MIMO slots, and Q (M2/M1) M1^((h2+1)/h2) log M1 slots for the
    generalised MAC that collects observations. `active` large clusters are
    served per session (n/M1 by default, M1^(1/h) in the restricted variant).
    """
    if not 1 <= M2 <= M1 <= n:
        raise ConstraintError(f"need 1 <= M2 <= M1 <= n, got M1={M1}, M2={M2}, n={n}")
    if h2 < 1 or h1 < 0:
        raise ConstraintError(f"need h1 >= 0 and h2 >= 1, got h1={h1}, h2={h2}")
    if h1 == 0 and M2 != 1:
        raise ConstraintError("h1 = 0 is only meaningful with single-node small clusters (M2 = 1)")
    if check and M2 < generalized_mac_threshold(M1, h2):
        raise ConstraintError(
            f"generalized MAC needs A(M1) = M2 >= M1^((h2-1)/h2) = {generalized_mac_threshold(M1, h2)}, got M2={M2}")
    if active is None:
        active = max(1, n // M1)
    sub1 = M1
    sub2 = 0 if h1 == 0 else Q * M2 ** ((h1 + 1) / h1)
    mimo = active * M2
    collect = Q * (M2 / M1) * M1 ** ((h2 + 1) / h2) * math.log2(M1)
    phases = {"phase 1a": _slots(sub1), "phase 1b": _slots(sub2), "phase 2": mimo, "phase 3": _slots(collect)}
    span = _slots(sub1 + sub2 + mimo + collect)
    sessions = math.ceil(n / (active * M2))
    return AnalyticResult(sessions * span, n * M1, span, M1, phases)


# --- optimal parameters ---

@dataclass
class Optimization:
    scheme: str
    params: SchemeParams
    closed_form: tuple
    closed_throughput: float
    best: tuple
    best_throughput: float

    @property
    def improved(self) -> bool:
        return self.best != self.closed_form and self.best_throughput > self.closed_throughput


def closed_form_sizes(scheme: str, n: int, h: int = 1) -> tuple:
    if scheme in ("threePhase", "session"):
        return (max(1, iround(math.sqrt(n))),)
    if scheme == "hLevel":
        return tuple(max(1, iround(n ** ((h + 1 - k) / (h + 1)))) for k in range(1, h + 1))
    if scheme == "modifiedHier":
        return (max(1, iround(n ** (h / (h + 1)))),)
    if scheme == "sessionHier":
        M1 = max(1, iround(n ** (h / (h + 1))))
        return (M1, max(1, iround(M1 ** ((h - 1) / h))))
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def throughput_objective(scheme: str, n: int, Q: int = 2, h: int = 1, K: float = 1.0) -> Callable:
    def f(ms):
        try:
            if scheme == "threePhase":
                return three_phase_slots(n, ms[0], Q).throughput
            if scheme == "hLevel":
                return h_level_slots(n, ms, Q).throughput
            if scheme == "modifiedHier":
                return modified_hier_throughput(n, ms[0], Q, K, h).throughput
            if scheme == "session":
                return session_slots(n, ms[0], Q).throughput
            if scheme == "sessionHier":
                return session_hier_slots(n, ms[0], ms[1], Q, h - 1, h).throughput
        except ConstraintError:
            return -math.inf
        raise ValueError(f"unknown scheme {scheme!r}")
    return f


def optimize_cluster_sizes(scheme: str, n: int, Q: int = 2, h: int = 1, K: float = 1.0) -> Optimization:
    """Closed-form optimum plus a coordinate search over [M/2, 2M] for each size."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    closed = closed_form_sizes(scheme, n, h)
    f = throughput_objective(scheme, n, Q, h, K)
    best, best_val = closed, f(closed)
    improved = True
    while improved:
        improved = False
        for k, m in enumerate(closed):
            lo, hi = max(1, m // 2), min(n, 2 * m)
            for cand in range(lo, hi + 1):
                trial = best[:k] + (cand,) + best[k + 1:]
                val = f(trial)
                if val > best_val + 1e-12:
                    best, best_val, improved = trial, val, True
    h1, h2 = (h - 1, h) if scheme == "sessionHier" else (0, 1)
    params = SchemeParams(n, Q, h=h, h1=h1, h2=h2, ms=closed, K=K)
    return Optimization(scheme, params, closed, f(closed), best, best_val)
