"""Occupancy layers, the reachable island and the frontier band."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import AgentNotFree, ShapeMismatch
from .sim import Cellxy, Observation

# Thick band used for frontier candidates; the stricter pair gives the thin
# "edge" band. Neither value is pinned down upstream, both are configurable.
DEFAULT_TAU_MIN = 2
DEFAULT_TAU_MAX = 8
EDGE_TAU_MIN = 4
EDGE_TAU_MAX = 8


@dataclass(eq=False)
class OccupancyMap:
    seen: np.ndarray
    free: np.ndarray
    occupied: np.ndarray
    labels: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "OccupancyMap":
        z = np.zeros(shape, dtype=bool)
        return cls(z.copy(), z.copy(), z.copy(), {})

    @property
    def shape(self) -> tuple[int, int]:
        return self.seen.shape

    def copy(self) -> "OccupancyMap":
        return OccupancyMap(self.seen.copy(), self.free.copy(), self.occupied.copy(), dict(self.labels))

    def __eq__(self, other):
        if not isinstance(other, OccupancyMap):
            return NotImplemented
        return (
            np.array_equal(self.seen, other.seen)
            and np.array_equal(self.free, other.free)
            and np.array_equal(self.occupied, other.occupied)
            and self.labels == other.labels
        )

    __hash__ = None


def integrate_observation(occ: OccupancyMap, obs: Observation) -> OccupancyMap:
    """Return a new map with the observation's cells marked seen and free/occupied."""
    h, w = occ.shape
    xs, ys = obs.cells[:, 0], obs.cells[:, 1]
    if len(xs) and (xs.min() < 0 or ys.min() < 0 or xs.max() >= w or ys.max() >= h):
        raise ShapeMismatch(f"observation exceeds map shape {occ.shape}")
    out = occ.copy()
    out.seen[ys, xs] = True
    out.free[ys, xs] = ~obs.walls
    out.occupied[ys, xs] = obs.walls
    for (x, y), lab in zip(obs.cells, obs.labels):
        if lab is not None:
            out.labels[(int(x), int(y))] = lab
    return out


def integrate_all(occ: OccupancyMap, observations: Iterable[Observation]) -> OccupancyMap:
    for obs in observations:
        occ = integrate_observation(occ, obs)
    return occ


def island_mask(occ: OccupancyMap, agent_cell: Cellxy) -> np.ndarray:
    """4-connected component of free cells containing the agent, as a mask."""
    x0, y0 = agent_cell
    h, w = occ.shape
    if not (0 <= x0 < w and 0 <= y0 < h) or not occ.free[y0, x0]:
        raise AgentNotFree(f"agent cell {agent_cell} is not known free")
    mask = np.zeros(occ.shape, dtype=bool)
    mask[y0, x0] = True
    queue = deque([(x0, y0)])
    free = occ.free
    while queue:
        x, y = queue.popleft()
        for nx, ny in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)):
            if 0 <= nx < w and 0 <= ny < h and free[ny, nx] and not mask[ny, nx]:
                mask[ny, nx] = True
                queue.append((nx, ny))
    return mask


def reachable_island(occ: OccupancyMap, agent_cell: Cellxy) -> frozenset:
    ys, xs = np.nonzero(island_mask(occ, agent_cell))
    return frozenset(zip(xs.tolist(), ys.tolist()))


def frontier_score(occ: OccupancyMap, cell: Cellxy) -> int:
    """Unexplored cells in the 3x3 block centred on ``cell``, clipped at the border."""
    x, y = cell
    h, w = occ.shape
    block = occ.seen[max(0, y - 1) : min(h, y + 2), max(0, x - 1) : min(w, x + 2)]
    return int((~block).sum())


def score_grid(occ: OccupancyMap) -> np.ndarray:
    """Frontier score for every cell (zero-padded 3x3 box sum of the unexplored mask)."""
    unexplored = np.pad((~occ.seen).astype(np.int64), 1)
    h, w = occ.shape
    total = np.zeros((h, w), dtype=np.int64)
    for dy in range(3):
        for dx in range(3):
            total += unexplored[dy : dy + h, dx : dx + w]
    return total


@dataclass(frozen=True, order=True)
class FrontierCell:
    cell: Cellxy
    score: int


def extract_frontiers(
    occ: OccupancyMap,
    agent_cell: Cellxy,
    tau_min: int = DEFAULT_TAU_MIN,
    tau_max: int = DEFAULT_TAU_MAX,
) -> tuple:
    """Island cells whose frontier score lies in ``[tau_min, tau_max]``, row-major order.

    Call with ``EDGE_TAU_MIN``/``EDGE_TAU_MAX`` for the thinner edge band.
    """
    if not 1 <= tau_min <= tau_max <= 9:
        raise ValueError(f"need 1 <= tau_min <= tau_max <= 9, got {tau_min}, {tau_max}")
    island = island_mask(occ, agent_cell)
    scores = score_grid(occ)
    hit = island & (scores >= tau_min) & (scores <= tau_max)
    ys, xs = np.nonzero(hit)
    return tuple(FrontierCell((int(x), int(y)), int(scores[y, x])) for y, x in zip(ys, xs))


def dump_layers(occ: OccupancyMap) -> str:
    """Plain (P2) PGM dump of each layer, 255 = set."""
    chunks = []
    h, w = occ.shape
    for name in ("seen", "free", "occupied"):
        layer = getattr(occ, name)
        rows = [" ".join("255" if v else "0" for v in row) for row in layer]
        chunks.append("\n".join([f"P2\n# {name}\n{w} {h}\n255", *rows]))
    return "\n".join(chunks) + "\n"
