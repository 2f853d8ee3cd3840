"""Parameter sweeps, log-log exponent fits and the throughput-delay trade-off curve."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import analytic
from .analytic import SCHEMES, ConstraintError
from .engine import execute
from .netmodel import generate_network, ideal_network, iround
from .schemes import (build_h_level, build_modified_hier, build_session, build_session_hier,
                      build_three_phase, restricted_active)

TRACE_CAP = 2 ** 14

COLUMNS = ["scheme", "mode", "n", "seed", "h", "Q", "b", "M1", "M2", "reuse",
           "throughput", "meanDelay", "maxDelay", "bulkSize", "totalSlots", "perPairRate"]


@dataclass
class SweepSpec:
    scheme: str
    n_grid: Sequence[int]
    h: int = 1
    Q: int = 2
    b: float = 0.5
    seeds: Sequence[int] = (0,)
    mode: str = "analytic"
    reuse: int = 1
    instance: str = "random"  # or "ideal"
    restricted: bool = False  # session variants: serve M (resp. M1^(1/h)) per session
    m1: int | None = None  # explicit cluster sizes override the scaling-law choice
    m2: int | None = None
    h1: int | None = None
    h2: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.mode not in ("analytic", "trace"):
            raise ValueError(f"mode must be analytic or trace, got {self.mode!r}")
        grid = [int(n) for n in self.n_grid]
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("n grid must be strictly increasing")
        self.n_grid = grid
        self.seeds = [int(s) for s in self.seeds]
        if self.mode == "trace" and grid and grid[-1] > TRACE_CAP:
            raise ValueError(f"trace mode is capped at n <= {TRACE_CAP} (got {grid[-1]}); "
                             "use analytic mode for larger networks")


def geometric_grid(lo: int, hi: int, factor: int = 2) -> list[int]:
    out, n = [], lo
    while n <= hi:
        out.append(n)
        n *= factor
    return out


def level_sizes(n: int, h: int) -> tuple:
    """M_k = n^((h+1-k)/(h+1)), k = 1..h."""
    return tuple(max(1, iround(n ** ((h + 1 - k) / (h + 1)))) for k in range(1, h + 1))


def tradeoff_params(n: int, b: float) -> dict:
    """Two-scale parameters for an operating exponent b: smallest h with h/(h+1) >= b,
    M1 = n^b, M2 = M1^((h-1)/h), and M1^(1/h) large clusters per session."""
    if not 0 <= b < 1:
        raise ValueError(f"b must lie in [0, 1), got {b}")
    h = 1
    while h / (h + 1) < b:
        h += 1
    M1 = max(1, iround(n ** b))
    M2 = max(1, iround(M1 ** ((h - 1) / h))) if h > 1 else 1
    return {"h": h, "h1": h - 1, "h2": h, "M1": M1, "M2": M2, "active": restricted_active(M1, h)}


def _point_params(spec: SweepSpec, n: int) -> dict:
    p = _default_params(spec, n)
    if spec.m1 is not None:
        p["M1"] = spec.m1
        if spec.scheme == "session":
            p["active"] = spec.m1 if spec.restricted else max(1, n // spec.m1)
    if spec.m2 is not None:
        p["M2"] = spec.m2
    if spec.scheme == "hLevel" and (spec.m1 is not None or spec.m2 is not None):
        p["ms"] = (p["M1"], p["M2"]) + tuple(p["ms"][2:]) if p["M2"] else (p["M1"],)
    if spec.scheme == "sessionHier":
        if spec.h1 is not None:
            p["h1"] = spec.h1
        if spec.h2 is not None:
            p["h2"] = spec.h2
        if spec.m1 is not None:
            p["active"] = restricted_active(p["M1"], p["h2"]) if spec.restricted else max(1, n // p["M1"])
    return p


def _default_params(spec: SweepSpec, n: int) -> dict:
    if spec.scheme == "threePhase":
        return {"M1": max(1, iround(math.sqrt(n))), "M2": 0}
    if spec.scheme == "hLevel":
        ms = level_sizes(n, spec.h)
        return {"ms": ms, "M1": ms[0], "M2": ms[1] if len(ms) > 1 else 0}
    if spec.scheme == "modifiedHier":
        return {"M1": max(1, iround(n ** (spec.h / (spec.h + 1)))), "M2": 0}
    if spec.scheme == "session":
        M = max(1, iround(n ** spec.b))
        return {"M1": M, "M2": 0, "active": M if spec.restricted else max(1, n // M)}
    p = tradeoff_params(n, spec.b)
    if not spec.restricted:
        p["active"] = max(1, n // p["M1"])
    return p


def _analytic_row(spec: SweepSpec, n: int) -> dict:
    p = _point_params(spec, n)
    Q = spec.Q
    if spec.scheme == "threePhase":
        res = analytic.three_phase_slots(n, p["M1"], Q)
    elif spec.scheme == "hLevel":
        res = analytic.h_level_slots(n, p["ms"], Q)
    elif spec.scheme == "modifiedHier":
        res = analytic.modified_hier_slots(n, p["M1"], Q, spec.h)
    elif spec.scheme == "session":
        res = analytic.session_slots(n, p["M1"], Q, p["active"])
    else:
        res = analytic.session_hier_slots(n, p["M1"], p["M2"], Q, p["h1"], p["h2"], p["active"], check=False)
    T = res.throughput
    return {"M1": p["M1"], "M2": p.get("M2", 0), "throughput": T, "meanDelay": float(res.delay),
            "maxDelay": int(math.ceil(res.delay)), "bulkSize": res.bulk_size, "totalSlots": res.total_slots,
            "perPairRate": T / n}


def _network(spec: SweepSpec, n: int, seed: int):
    return ideal_network(n, seed=seed) if spec.instance == "ideal" else generate_network(n, seed=seed)


def build_trace(spec: SweepSpec, n: int, seed: int):
    net = _network(spec, n, seed)
    p = _point_params(spec, n)
    Q, rho = spec.Q, spec.reuse
    if spec.scheme == "threePhase":
        tr = build_three_phase(net, p["M1"], Q, rho)
    elif spec.scheme == "hLevel":
        tr = build_h_level(net, p["ms"], Q, rho)
    elif spec.scheme == "modifiedHier":
        tr = build_modified_hier(net, p["M1"], Q, spec.h, rho)
    elif spec.scheme == "session":
        tr = build_session(net, p["M1"], Q, p["active"], rho, seed)
    else:
        tr = build_session_hier(net, p["M1"], p["M2"], Q, p["h1"], p["h2"], p["active"], rho, seed, check=False)
    return tr, p


def _trace_row(spec: SweepSpec, n: int, seed: int) -> dict:
    tr, p = build_trace(spec, n, seed)
    m = execute(tr, n=n)
    return {"M1": p["M1"], "M2": p.get("M2", 0), **m.row()}


def _point(args) -> dict:
    spec, n, seed = args
    body = _analytic_row(spec, n) if spec.mode == "analytic" else _trace_row(spec, n, seed)
    return {"scheme": spec.scheme, "mode": spec.mode, "n": n, "seed": seed, "h": spec.h, "Q": spec.Q,
            "b": spec.b, "reuse": spec.reuse, **body}


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """One row per (n, seed); analytic mode ignores the seed and emits a single row per n."""
    seeds = spec.seeds if spec.mode == "trace" else spec.seeds[:1]
    jobs = [(spec, n, s) for n in spec.n_grid for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_point, jobs))  # map keeps job order
    return [_point(j) for j in jobs]


def average_rows(rows: Iterable[dict], key: str = "n") -> list[dict]:
    """Average numeric columns over seeds, one row per `key` value."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    out = []
    for k in sorted(groups):
        g = groups[k]
        row = dict(g[0])
        for col in ("throughput", "meanDelay", "maxDelay", "bulkSize", "totalSlots", "perPairRate"):
            if col in row:
                row[col] = float(np.mean([r[col] for r in g]))
        row["seed"] = len(g)
        out.append(row)
    return out


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    residuals: list = field(default_factory=list)


def fit_exponent(rows: Sequence[dict], x_field: str = "n", y_field: str = "throughput", burn_in: int = 0) -> ScalingFit:
    """OLS of log2 y on log2 x after averaging y over repeated x values."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(float(r[x_field]), []).append(float(r[y_field]))
    xs = sorted(groups)[burn_in:]
    if len(xs) < 3:
        raise ValueError(f"need at least 3 distinct {x_field} values to fit, got {len(xs)}")
    ys = [float(np.mean(groups[x])) for x in xs]
    if min(xs) <= 0 or min(ys) <= 0:
        raise ValueError("log-log fit needs positive values")
    lx, ly = np.log2(xs), np.log2(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), min(1.0, max(0.0, r2)), resid.tolist())


def tradeoff_curve(b_grid: Sequence[float], n: int, Q: int = 2, mode: str = "analytic", seed: int = 0,
                   reuse: int = 1) -> list[dict]:
    """(b, T, D) along the restricted two-scale scheme; b = 0 is plain TDMA."""
    rows = []
    log2n = math.log2(n)
    for b in b_grid:
        if not 0 <= b < 1:
            raise ValueError(f"b must lie in [0, 1), got {b}")
        if b == 0:
            T, D, p = 1.0, 1.0, {"h": 0, "M1": 1, "M2": 1}
        else:
            p = tradeoff_params(n, b)
            if mode == "analytic":
                res = analytic.session_hier_slots(n, p["M1"], p["M2"], Q, p["h1"], p["h2"], p["active"], check=False)
                T, D = res.throughput, float(res.delay)
            else:
                if n > TRACE_CAP:
                    raise ValueError(f"trace mode is capped at n <= {TRACE_CAP}; use analytic mode")
                net = generate_network(n, seed=seed)
                tr = build_session_hier(net, p["M1"], p["M2"], Q, p["h1"], p["h2"], p["active"], reuse, seed,
                                        check=False)
                m = execute(tr, n=n)
                T, D = m.throughput, m.mean_delay
        rows.append({"b": b, "h": p["h"], "M1": p["M1"], "M2": p["M2"], "T": T, "D": D,
                     "DoverT": D / T, "ratio": D / T / log2n ** 2})
    return rows


def write_csv(rows: Sequence[dict], fh: TextIO, columns: Sequence[str] | None = None) -> None:
    """Fixed column order and repr() floats so reruns are byte-identical."""
    if columns is None:
        columns = COLUMNS if rows and "scheme" in rows[0] else list(rows[0]) if rows else []
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (r.get(c, "") for c in columns)])


__all__ = ["SweepSpec", "ScalingFit", "run_sweep", "fit_exponent", "tradeoff_curve", "average_rows",
           "write_csv", "geometric_grid", "level_sizes", "tradeoff_params", "build_trace", "ConstraintError"]
