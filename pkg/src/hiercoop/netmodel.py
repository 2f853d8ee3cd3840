"""Random network instances: node placement, pairing, channel gains and square-cell clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

UNIT_SQUARE = (0.0, 0.0, 1.0)  # (x0, y0, side)


def iround(x: float) -> int:
    """Round half up (Python's round() is banker's rounding)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ChannelParams:
    alpha: float = 3.0
    power: float = 1.0
    noise: float = 1.0
    quant_bits: int = 2

    def __post_init__(self):
        if self.alpha < 2:
            raise ValueError(f"path-loss exponent must be >= 2, got {self.alpha}")
        if self.quant_bits < 1:
            raise ValueError(f"quantization bits must be >= 1, got {self.quant_bits}")
        if self.power <= 0 or self.noise <= 0:
            raise ValueError("power and noise must be positive")


@dataclass(frozen=True, eq=False)
class Network:
    n: int
    positions: np.ndarray  # (n, 2) in [0, 1]^2
    pairing: np.ndarray  # source i -> destination pairing[i]
    channel: ChannelParams = field(default_factory=ChannelParams)
    seed: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pairing = np.asarray(self.pairing, dtype=np.int64)
        if pos.shape != (self.n, 2):
            raise ValueError(f"positions must have shape ({self.n}, 2)")
        if sorted(pairing.tolist()) != list(range(self.n)):
            raise ValueError("pairing is not a permutation")
        if np.any(pairing == np.arange(self.n)):
            raise ValueError("pairing has a fixed point")
        pos.setflags(write=False)
        pairing.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "pairing", pairing)

    def source_of(self) -> np.ndarray:
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.pairing] = np.arange(self.n)
        return inv


def _derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    # rejection sampling gives an exactly uniform derangement; ~e tries on average
    idx = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == idx):
            return perm


def generate_network(n: int, channel: ChannelParams | None = None, seed: int = 0) -> Network:
    """n nodes i.i.d. uniform on the unit square, paired by a uniform random derangement."""
    if n < 2:
        raise ValueError(f"network needs at least 2 nodes, got {n}")
    rng = np.random.default_rng(seed)
    positions = rng.random((n, 2))
    pairing = _derangement(n, rng)
    return Network(n, positions, pairing, channel or ChannelParams(), seed)


def ideal_network(n: int, channel: ChannelParams | None = None, seed: int = 0) -> Network:
    """Nodes on the centres of a sqrt(n) x sqrt(n) lattice.

    Any square grid whose cells-per-side divides sqrt(n) then holds exactly
    n / g^2 nodes per cell, at every nesting depth.
    """
    s = math.isqrt(n)
    if s * s != n or n < 4:
        raise ValueError(f"ideal instances need a perfect square n >= 4, got {n}")
    rng = np.random.default_rng(seed)
    ii, jj = np.divmod(np.arange(n), s)
    positions = np.column_stack(((jj + 0.5) / s, (ii + 0.5) / s))
    return Network(n, positions, _derangement(n, rng), channel or ChannelParams(), seed)


def channel_gain(net: Network, i: int, k: int, phase: float | None = None,
                 rng: np.random.Generator | None = None) -> complex:
    """H_ik = r_ik^(-alpha/2) exp(j phase); the phase is drawn fresh when not given."""
    if i == k:
        raise ValueError("no self-channel: i == k")
    r = float(np.hypot(*(net.positions[i] - net.positions[k])))
    if r == 0.0:
        raise ValueError(f"nodes {i} and {k} are co-located")
    if phase is None:
        phase = (rng or np.random.default_rng()).uniform(0.0, 2 * math.pi)
    return r ** (-net.channel.alpha / 2) * complex(math.cos(phase), math.sin(phase))


@dataclass(frozen=True, eq=False)
class Cell:
    index: int
    row: int
    col: int
    region: tuple[float, float, float]  # (x0, y0, side)
    nodes: np.ndarray

    def __len__(self):
        return len(self.nodes)


def cells_per_side(count: int, target: float) -> int:
    return max(1, iround(math.sqrt(count / target)))


def partition(positions: np.ndarray, nodes: Sequence[int], region=UNIT_SQUARE, target: float = 1.0,
              g: int | None = None) -> list[Cell]:
    """Split `nodes` into a g x g grid of square cells over `region`.

    Cells are half-open [a, b) except the last row/column, which is closed so
    that points on the upper boundary stay in range. Empty cells are kept.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if g is None:
        g = cells_per_side(len(nodes), target)
    x0, y0, side = region
    w = side / g
    pts = positions[nodes]
    col = np.clip(np.floor((pts[:, 0] - x0) / w).astype(np.int64), 0, g - 1)
    row = np.clip(np.floor((pts[:, 1] - y0) / w).astype(np.int64), 0, g - 1)
    key = row * g + col
    order = np.lexsort((nodes, key))
    bounds = np.searchsorted(key[order], np.arange(g * g + 1))
    cells = []
    for idx in range(g * g):
        r, c = divmod(idx, g)
        members = nodes[order[bounds[idx]:bounds[idx + 1]]]
        cells.append(Cell(idx, r, c, (x0 + c * w, y0 + r * w, w), members))
    return cells


Partitioner = Callable[[Sequence[int], tuple, float], list]


def grid_partitioner(net: Network) -> Partitioner:
    def split(nodes, region, target):
        return partition(net.positions, nodes, region, target)
    return split


@dataclass(frozen=True, eq=False)
class ClusterGrid:
    target_size: int
    cells_per_side: int
    assignment: np.ndarray  # node -> cell index
    cells: list[Cell]

    @property
    def occupancy(self) -> list[np.ndarray]:
        return [c.nodes for c in self.cells]

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.cells])


def build_grid(net: Network, target_size: int) -> ClusterGrid:
    if not 1 <= target_size <= net.n:
        raise ValueError(f"cluster size must lie in [1, {net.n}], got {target_size}")
    cells = partition(net.positions, np.arange(net.n), UNIT_SQUARE, target_size)
    g = math.isqrt(len(cells))
    assignment = np.empty(net.n, dtype=np.int64)
    for cell in cells:
        assignment[cell.nodes] = cell.index
    assignment.setflags(write=False)
    return ClusterGrid(target_size, g, assignment, cells)


def destination_histogram(net: Network, grid: ClusterGrid, sources: Iterable[int]) -> np.ndarray:
    """Per-cell count of the destinations of `sources`."""
    src = np.fromiter(sources, dtype=np.int64)
    return np.bincount(grid.assignment[net.pairing[src]], minlength=len(grid.cells))


# --- text format: header "n alpha P N0 Q seed", then "id x y dest" per node ---

def write_network(net: Network, fh: TextIO) -> None:
    ch = net.channel
    fh.write(f"{net.n} {ch.alpha!r} {ch.power!r} {ch.noise!r} {ch.quant_bits} {net.seed}\n")
    for i in range(net.n):
        x, y = net.positions[i]
        fh.write(f"{i} {float(x)!r} {float(y)!r} {int(net.pairing[i])}\n")


def read_network(fh: TextIO) -> Network:
    header = fh.readline().split()
    if len(header) != 6:
        raise ValueError("bad network header, expected 'n alpha P N0 Q seed'")
    n = int(header[0])
    channel = ChannelParams(float(header[1]), float(header[2]), float(header[3]), int(header[4]))
    positions = np.empty((n, 2))
    pairing = np.full(n, -1, dtype=np.int64)
    for line in fh:
        if not line.strip():
            continue
        i, x, y, d = line.split()
        i = int(i)
        positions[i] = (float(x), float(y))
        pairing[i] = int(d)
    if np.any(pairing < 0):
        raise ValueError("network file is missing node lines")
    return Network(n, positions, pairing, channel, int(header[5]))
