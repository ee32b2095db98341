"""Deterministic 2D grid world: map documents, cone ray casting, BFS planning and motion.

Coordinates are ``(x, y)`` with ``y`` growing downward (row index). Arrays are
indexed ``[y, x]``. Bearings are ``atan2(dy, dx)`` in grid coordinates.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np

from .errors import EmptyMap, MapFormatError, NonRectangular, Unreachable

Cellxy = tuple[int, int]

TWO_PI = 2.0 * math.pi


class Cell(IntEnum):
    FREE = 0
    WALL = 1


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    elif w > math.pi:
        w -= TWO_PI
    return w


def bearing(origin: Cellxy, cell: Cellxy) -> float:
    return math.atan2(cell[1] - origin[1], cell[0] - origin[0])


@dataclass(frozen=True)
class Sensing:
    """Sensor parameters.

    Only ``fov_rad`` and ``range_cells`` drive the 2D ray caster. The camera
    fields are carried for log fidelity and have no effect.
    """

    fov_rad: float = math.radians(120.0)
    range_cells: int = 17
    camera_height_m: float = 1.5
    camera_pitch_deg: float = -30.0
    render_px: int = 1280
    model_px: int = 360


@dataclass(frozen=True)
class AgentPose:
    cell: Cellxy
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cell", (int(self.cell[0]), int(self.cell[1])))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable closed-world grid with optional per-cell labels."""

    walls: np.ndarray
    labels: dict = field(default_factory=dict)
    cell_size_m: float = 0.1
    start: Optional[AgentPose] = None
    # full-circle visibility per (origin, range); valid because the map is immutable
    _vis_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        walls = np.array(self.walls, dtype=bool)
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "labels", dict(sorted(self.labels.items(), key=lambda kv: (kv[0][1], kv[0][0]))))
        for cell in self.labels:
            if not self.in_bounds(cell) or self.walls[cell[1], cell[0]]:
                raise MapFormatError(f"label at {cell} is not on a free cell")

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def in_bounds(self, cell: Cellxy) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell: Cellxy) -> bool:
        return self.in_bounds(cell) and not self.walls[cell[1], cell[0]]

    def cell(self, cell: Cellxy) -> Cell:
        return Cell.WALL if self.walls[cell[1], cell[0]] else Cell.FREE

    @property
    def free_mask(self) -> np.ndarray:
        return ~self.walls

    def cells_labeled(self, label: str) -> list[Cellxy]:
        return [c for c, text in self.labels.items() if text == label]

    def default_start(self) -> AgentPose:
        if self.start is not None:
            return self.start
        ys, xs = np.nonzero(~self.walls)
        return AgentPose((int(xs[0]), int(ys[0])), 0.0)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            np.array_equal(self.walls, other.walls)
            and self.labels == other.labels
            and self.cell_size_m == other.cell_size_m
            and _same_pose(self.start, other.start)
        )

    __hash__ = None


def _same_pose(a: Optional[AgentPose], b: Optional[AgentPose]) -> bool:
    # headings are stored in degrees on disk, so compare them to float noise
    if a is None or b is None:
        return a is b
    return a.cell == b.cell and abs(wrap_angle(a.heading - b.heading)) <= 1e-12


def load_map(text: str) -> GridMap:
    """Parse a map document.

    Layout: a header ``W H cell_size_m``, then ``H`` rows of ``.``/``#``, then
    optional ``label x y <text>`` and ``start x y [heading_deg]`` lines. When
    the outer ring is not all walls, the grid is padded with a wall ring and
    label/start coordinates shift by one.
    """
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1].strip():
        lines.pop()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise EmptyMap("empty map document")
    header = lines[idx].split()
    if len(header) != 3:
        raise MapFormatError(f"bad header line: {lines[idx]!r}")
    try:
        w, h, cell_size = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise MapFormatError(f"bad header line: {lines[idx]!r}") from exc
    if w < 1 or h < 1:
        raise EmptyMap("map must have at least one cell")
    rows = lines[idx + 1 : idx + 1 + h]
    if len(rows) < h:
        raise MapFormatError(f"expected {h} rows, found {len(rows)}")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1 or lengths != {w}:
        raise NonRectangular(f"row lengths {sorted(lengths)} do not match width {w}")
    walls = np.zeros((h, w), dtype=bool)
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                walls[y, x] = True
            elif ch != ".":
                raise MapFormatError(f"unknown character {ch!r} at ({x}, {y})")

    labels: dict[Cellxy, str] = {}
    start = None
    for ln in lines[idx + 1 + h :]:
        if not ln.strip():
            continue
        parts = ln.split(maxsplit=3)
        kind = parts[0]
        if kind == "label" and len(parts) == 4:
            try:
                cell = (int(parts[1]), int(parts[2]))
            except ValueError as exc:
                raise MapFormatError(f"bad label line: {ln!r}") from exc
            if not (0 <= cell[0] < w and 0 <= cell[1] < h) or walls[cell[1], cell[0]]:
                raise MapFormatError(f"label {parts[3]!r} assigned to non-free cell {cell}")
            labels[cell] = parts[3]
        elif kind == "start" and len(parts) in (3, 4):
            try:
                cell = (int(parts[1]), int(parts[2]))
                heading = math.radians(float(parts[3])) if len(parts) == 4 else 0.0
            except ValueError as exc:
                raise MapFormatError(f"bad start line: {ln!r}") from exc
            if not (0 <= cell[0] < w and 0 <= cell[1] < h) or walls[cell[1], cell[0]]:
                raise MapFormatError(f"start {cell} is not a free cell")
            start = AgentPose(cell, heading)
        else:
            raise MapFormatError(f"unrecognised line: {ln!r}")

    border = np.concatenate([walls[0, :], walls[-1, :], walls[:, 0], walls[:, -1]])
    if not border.all():
        walls = np.pad(walls, 1, constant_values=True)
        labels = {(x + 1, y + 1): t for (x, y), t in labels.items()}
        if start is not None:
            start = AgentPose((start.cell[0] + 1, start.cell[1] + 1), start.heading)
    return GridMap(walls=walls, labels=labels, cell_size_m=cell_size, start=start)


def load_map_file(path) -> GridMap:
    with open(path, encoding="utf-8") as fh:
        return load_map(fh.read())


def dump_map(grid: GridMap) -> str:
    """Serialise a map so that ``load_map(dump_map(g)) == g``."""
    out = [f"{grid.width} {grid.height} {grid.cell_size_m!r}"]
    for y in range(grid.height):
        out.append("".join("#" if grid.walls[y, x] else "." for x in range(grid.width)))
    for (x, y), text in grid.labels.items():
        out.append(f"label {x} {y} {text}")
    if grid.start is not None:
        deg = math.degrees(grid.start.heading)
        out.append(f"start {grid.start.cell[0]} {grid.start.cell[1]} {deg!r}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Ray casting


# Sight-line geometry works on a lattice scaled by SCALE so that sample points
# inside a cell have integer coordinates; cell boundaries sit at SCALE/2 + k*SCALE.
SCALE = 20


def supercover_segment(ex: int, ey: int) -> list[tuple[Cellxy, Cellxy]]:
    """Cells crossed by the segment from the origin cell centre to ``(ex, ey) / SCALE``.

    Exact integer arithmetic. Each entry is a pair of cells: ordinary
    crossings give ``(c, c)``; an exact corner crossing gives the two flanking
    cells. The origin cell and the cell containing the endpoint are excluded.
    A ray is blocked by a pair only when both of its cells are walls.
    """
    sx = 1 if ex > 0 else -1
    sy = 1 if ey > 0 else -1
    nx, ny = abs(ex), abs(ey)
    half = SCALE // 2
    # boundary k along an axis sits at distance half + k*SCALE; the crossing
    # parameter is that distance over |e|; compare fractions by cross-multiplying
    bx, by = half, half
    px = py = 0
    out: list[tuple[Cellxy, Cellxy]] = []
    while bx < nx or by < ny:
        cx = bx < nx
        cy = by < ny
        if cx and cy:
            decision = bx * ny - by * nx
        else:
            decision = -1 if cx else 1
        if decision == 0:
            out.append(((px + sx, py), (px, py + sy)))
            px += sx
            py += sy
            bx += SCALE
            by += SCALE
        elif decision < 0:
            px += sx
            bx += SCALE
        else:
            py += sy
            by += SCALE
        out.append(((px, py), (px, py)))
    return out[:-1] if out else out


def supercover(dx: int, dy: int) -> list[tuple[Cellxy, Cellxy]]:
    """Centre-to-centre special case of :func:`supercover_segment` for integer offsets."""
    return supercover_segment(dx * SCALE, dy * SCALE)


# Sight-line end points inside a target cell (in 1/SCALE units): its centre
# and points just inside the four edge midpoints. A cell is visible when any
# of these lines is clear.
SIGHT_SAMPLES = ((0, 0), (9, 0), (-9, 0), (0, 9), (0, -9))


@dataclass(frozen=True)
class _RayTable:
    offsets: np.ndarray  # (T, 2) int target offsets
    angles: np.ndarray  # (T,)
    # Ragged sight-line cells for every (target, sample), concatenated. Each
    # segment starts with the origin (never blocking) so none is empty.
    cell_a: np.ndarray  # (N, 2)
    cell_b: np.ndarray  # (N, 2)
    starts: np.ndarray  # (T * S,)


@lru_cache(maxsize=16)
def _ray_table(range_cells: int) -> _RayTable:
    offs = []
    for dy in range(-range_cells, range_cells + 1):
        for dx in range(-range_cells, range_cells + 1):
            if (dx or dy) and dx * dx + dy * dy <= range_cells * range_cells:
                offs.append((dx, dy))
    a: list = []
    b: list = []
    starts = []
    for dx, dy in offs:
        for px, py in SIGHT_SAMPLES:
            starts.append(len(a))
            a.append((0, 0))
            b.append((0, 0))
            for ca, cb in supercover_segment(dx * SCALE + px, dy * SCALE + py):
                a.append(ca)
                b.append(cb)
    offsets = np.array(offs, dtype=np.int64).reshape(-1, 2)
    angles = np.arctan2(offsets[:, 1], offsets[:, 0]).astype(float)
    return _RayTable(offsets, angles, np.array(a, dtype=np.int64), np.array(b, dtype=np.int64), np.array(starts, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class Observation:
    """Cells seen from one pose. ``cells`` is sorted row-major and includes the origin."""

    origin: AgentPose
    fov_rad: float
    range_cells: int
    cells: np.ndarray  # (n, 2) int, (x, y)
    walls: np.ndarray  # (n,) bool
    labels: tuple  # (n,) Optional[str]

    @property
    def visible(self) -> frozenset:
        return frozenset(
            ((int(x), int(y)), Cell.WALL if w else Cell.FREE, lab)
            for (x, y), w, lab in zip(self.cells, self.walls, self.labels)
        )

    @property
    def cell_set(self) -> frozenset:
        return frozenset((int(x), int(y)) for x, y in self.cells)

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.fov_rad == other.fov_rad
            and self.range_cells == other.range_cells
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.walls, other.walls)
            and self.labels == other.labels
        )

    __hash__ = None


def _visible_all(grid: GridMap, origin: Cellxy, r: int, table: _RayTable) -> np.ndarray:
    """Unoccluded mask over all table targets, ignoring the cone; cached on the map."""
    key = (origin, r)
    hit = grid._vis_cache.get(key)
    if hit is not None:
        return hit
    ox, oy = origin
    # walls padded by the range so every sight-line cell indexes in bounds
    padded = np.pad(grid.walls, r, constant_values=False)
    pw = padded.shape[1]
    flat = padded.ravel()
    base = (oy + r) * pw + (ox + r)
    both = flat[base + table.cell_a[:, 1] * pw + table.cell_a[:, 0]] & flat[base + table.cell_b[:, 1] * pw + table.cell_b[:, 0]]
    blocked = np.logical_or.reduceat(both, table.starts).reshape(len(table.offsets), len(SIGHT_SAMPLES)).all(axis=1)
    vis = ~blocked
    vis.setflags(write=False)
    grid._vis_cache[key] = vis
    return vis


def cast_rays(grid: GridMap, pose: AgentPose, fov_rad: float = Sensing.fov_rad, range_cells: int = Sensing.range_cells) -> Observation:
    """Line-of-sight visibility inside a view cone.

    A cell is visible when it lies within ``range_cells`` (Euclidean, centre to
    centre), inside the cone, and at least one of its sight lines (see
    ``SIGHT_SAMPLES``) crosses no wall between the origin and the cell. Walls
    stop rays but are themselves visible.
    """
    table = _ray_table(int(range_cells))
    ox, oy = pose.cell
    tx = table.offsets[:, 0] + ox
    ty = table.offsets[:, 1] + oy
    inside = (tx >= 0) & (tx < grid.width) & (ty >= 0) & (ty < grid.height)
    if fov_rad >= TWO_PI - 1e-12:
        cone = np.ones_like(inside)
    else:
        diff = np.abs((table.angles - pose.heading + math.pi) % TWO_PI - math.pi)
        cone = diff <= fov_rad / 2.0 + 1e-9
    keep = inside & cone & _visible_all(grid, pose.cell, int(range_cells), table)
    vis_x = np.concatenate([[ox], tx[keep]])
    vis_y = np.concatenate([[oy], ty[keep]])
    order = np.lexsort((vis_x, vis_y))
    cells = np.stack([vis_x[order], vis_y[order]], axis=1).astype(np.int64)
    walls = grid.walls[cells[:, 1], cells[:, 0]].copy()
    labels = tuple(grid.labels.get((int(x), int(y))) for x, y in cells)
    cells.setflags(write=False)
    walls.setflags(write=False)
    return Observation(pose, float(fov_rad), int(range_cells), cells, walls, labels)


def look_around(grid: GridMap, cell: Cellxy, sensing: Sensing = Sensing()) -> list[Observation]:
    """Panoramic scan as a sequence of cones covering the full circle."""
    n = max(1, math.ceil(TWO_PI / sensing.fov_rad - 1e-9))
    return [cast_rays(grid, AgentPose(cell, i * TWO_PI / n), sensing.fov_rad, sensing.range_cells) for i in range(n)]


# ---------------------------------------------------------------------------
# Planning and motion

# row-major successor order: smaller (y, x) first
_NEIGHBOURS = ((0, -1), (-1, 0), (1, 0), (0, 1))

FreeSet = Union[np.ndarray, set, frozenset]


@dataclass(frozen=True)
class Path:
    cells: tuple

    @property
    def length(self) -> int:
        return len(self.cells) - 1


def _free_fn(known_free: FreeSet):
    if isinstance(known_free, np.ndarray):
        h, w = known_free.shape

        def free(c):
            return 0 <= c[0] < w and 0 <= c[1] < h and bool(known_free[c[1], c[0]])

        return free
    s = known_free if isinstance(known_free, (set, frozenset)) else set(known_free)
    return lambda c: c in s


def bfs_distances(known_free: FreeSet, sources: Iterable[Cellxy]) -> dict:
    """Multi-source 4-connected BFS distances over a free set."""
    free = _free_fn(known_free)
    dist: dict[Cellxy, int] = {}
    queue = deque()
    for s in sources:
        s = (int(s[0]), int(s[1]))
        if free(s) and s not in dist:
            dist[s] = 0
            queue.append(s)
    while queue:
        c = queue.popleft()
        d = dist[c] + 1
        for dx, dy in _NEIGHBOURS:
            n = (c[0] + dx, c[1] + dy)
            if n not in dist and free(n):
                dist[n] = d
                queue.append(n)
    return dist


def plan_path(known_free: FreeSet, start: Cellxy, goal: Cellxy) -> Path:
    """Minimum-step 4-connected path; at each step the smallest (y, x) successor wins."""
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    free = _free_fn(known_free)
    if not free(start):
        raise ValueError(f"start {start} is not in the free set")
    if start == goal:
        return Path((start,))
    dist = bfs_distances(known_free, [goal])
    if start not in dist:
        raise Unreachable(f"{goal} unreachable from {start}")
    cells = [start]
    cur = start
    while cur != goal:
        d = dist[cur]
        for dx, dy in _NEIGHBOURS:
            n = (cur[0] + dx, cur[1] + dy)
            if dist.get(n) == d - 1:
                cur = n
                break
        cells.append(cur)
    return Path(tuple(cells))


@dataclass(frozen=True)
class StepOutcome:
    pose: AgentPose
    observations: tuple
    steps: int
    replan: bool = False
    path: Optional[Path] = None


def step_to(grid: GridMap, pose: AgentPose, target: Cellxy, known_free: FreeSet, sensing: Sensing = Sensing()) -> StepOutcome:
    """Walk the planned path to ``target``, sensing along the direction of travel at every cell.

    If the next planned cell turns out to be a wall the walk stops early with
    ``replan=True`` and the pose stays at the last valid cell.
    """
    path = plan_path(known_free, pose.cell, target)
    if path.length == 0:
        obs = cast_rays(grid, pose, sensing.fov_rad, sensing.range_cells)
        return StepOutcome(pose, (obs,), 0, False, path)
    observations = []
    cur = pose
    steps = 0
    for nxt in path.cells[1:]:
        if not grid.is_free(nxt):
            return StepOutcome(cur, tuple(observations), steps, True, path)
        cur = AgentPose(nxt, bearing(cur.cell, nxt))
        steps += 1
        observations.append(cast_rays(grid, cur, sensing.fov_rad, sensing.range_cells))
    return StepOutcome(cur, tuple(observations), steps, False, path)
