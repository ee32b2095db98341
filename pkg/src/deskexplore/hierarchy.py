"""Two-level frontier partitioning into broad (BVF) and close-up (CVF) directions.

Broad directions come from K-means on frontier cell coordinates; each broad
cluster is split again by K-means on the unit vectors of its members'
bearings. Every direction is tied to a concrete frontier cell: the one whose
bearing from the agent is angularly closest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyFrontierSet, ZeroResultant
from .mapping import OccupancyMap
from .sim import TWO_PI, AgentPose, Cellxy, GridMap, Observation, Sensing, bearing, cast_rays, wrap_angle

DEFAULT_TAU_SIZE0 = 3
DEFAULT_TAU_SIZE1 = 2
MAX_BRANCH = 3


def kmeans_points(points, k: int, seed: int = 0, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with seeded farthest-point initialisation.

    Returns ``(labels, centroids)``. Distance ties go to the lower centroid
    index; an emptied cluster keeps its previous centroid.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2D array")
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= {n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    mind = ((pts - pts[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, ((pts - pts[nxt]) ** 2).sum(axis=1))
    centroids = pts[chosen].copy()
    labels = None
    for _ in range(max_iter):
        d = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return labels, centroids


def circular_mean(angles: Sequence[float]) -> float:
    """Mean direction of angles in radians, wrapped to (-pi, pi]."""
    arr = np.asarray(angles, dtype=float)
    if arr.size == 0:
        raise ValueError("circular_mean of empty sequence")
    s, c = float(np.sin(arr).mean()), float(np.cos(arr).mean())
    if math.hypot(s, c) < 1e-9:
        raise ZeroResultant("mean resultant vector is zero")
    return wrap_angle(math.atan2(s, c))


def angular_distance(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def representative_cell(frontiers: Sequence[Cellxy], agent_cell: Cellxy, theta: float) -> Cellxy:
    """Frontier cell whose bearing from the agent is closest to ``theta``.

    Ties: nearer to the agent first, then row-major cell order.
    """
    if not frontiers:
        raise EmptyFrontierSet("no frontier cells to anchor")

    def key(c):
        d = round(angular_distance(bearing(agent_cell, c), theta), 12)
        r2 = (c[0] - agent_cell[0]) ** 2 + (c[1] - agent_cell[1]) ** 2
        return (d, r2, c[1], c[0])

    return tuple(min(frontiers, key=key))


@dataclass
class Snapshot:
    """Text stand-in for a rendered frontier image."""

    theta: float
    observation: Optional[Observation]
    labels: tuple
    text_render: str
    depth: int = 0
    novel: int = 0


@dataclass
class Cvf:
    b: int
    j: int
    theta: float
    members: tuple
    anchor: Cellxy = None
    snapshot: Optional[Snapshot] = None

    @property
    def parent(self) -> int:
        return self.b


@dataclass
class Bvf:
    b: int
    theta: float
    members: tuple
    children: list = field(default_factory=list)
    anchor: Cellxy = None
    fallback: bool = False
    snapshot: Optional[Snapshot] = None


@dataclass
class FrontierHierarchy:
    bvfs: list
    agent_cell: Cellxy
    frontiers: tuple = ()
    dropped: tuple = ()

    @property
    def anchored(self) -> dict:
        """Node key -> anchor cell; keys are ``(b,)`` for BVFs and ``(b, j)`` for CVFs."""
        out = {}
        for bvf in self.bvfs:
            out[(bvf.b,)] = bvf.anchor
            for cvf in bvf.children:
                out[(cvf.b, cvf.j)] = cvf.anchor
        return out

    def __bool__(self):
        return bool(self.bvfs)


def _sorted_cells(cells) -> list:
    return sorted({(int(c[0]), int(c[1])) for c in cells}, key=lambda c: (c[1], c[0]))


def _cluster_direction(cells, agent_cell: Cellxy, fallback: float) -> float:
    try:
        return circular_mean([bearing(agent_cell, c) for c in cells])
    except ZeroResultant:
        # members surround the agent; use the coordinate centroid instead
        cx = sum(c[0] for c in cells) / len(cells) - agent_cell[0]
        cy = sum(c[1] for c in cells) / len(cells) - agent_cell[1]
        if math.hypot(cx, cy) < 1e-9:
            return wrap_angle(fallback)
        return wrap_angle(math.atan2(cy, cx))


def build_bvf(
    frontiers,
    agent_cell: Cellxy,
    seed: int = 0,
    tau_size0: int = DEFAULT_TAU_SIZE0,
    heading: float = 0.0,
) -> list:
    """Cluster frontier cells into at most three broad directions (children left empty)."""
    cells = _sorted_cells(frontiers)
    if not cells:
        return []
    k = min(MAX_BRANCH, len(cells))
    labels, _ = kmeans_points(np.array(cells, dtype=float), k, seed)
    bvfs = []
    for c in range(k):
        members = tuple(cell for cell, lab in zip(cells, labels) if lab == c)
        if len(members) < tau_size0:
            continue
        theta = _cluster_direction(members, agent_cell, heading)
        bvfs.append(Bvf(len(bvfs), theta, members))
    if bvfs:
        return bvfs
    # every cluster was pruned: k equal angular sectors, the first centred on the heading
    centres = [wrap_angle(heading + TWO_PI * i / k) for i in range(k)]
    bins: list[list] = [[] for _ in range(k)]
    for cell in cells:
        br = bearing(agent_cell, cell)
        idx = min(range(k), key=lambda i: (round(angular_distance(br, centres[i]), 12), i))
        bins[idx].append(cell)
    for i in range(k):
        if bins[i]:
            bvfs.append(Bvf(len(bvfs), centres[i], tuple(bins[i]), fallback=True))
    return bvfs


def build_cvf(bvf: Bvf, agent_cell: Cellxy, seed: int = 0, tau_size1: int = DEFAULT_TAU_SIZE1) -> list:
    """Split one broad direction into at most three close-up directions."""
    members = bvf.members
    if len(members) < 3:
        return [Cvf(bvf.b, 0, bvf.theta, tuple(members))]
    angles = np.array([bearing(agent_cell, c) for c in members])
    emb = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    k = min(MAX_BRANCH, len(members))
    labels, _ = kmeans_points(emb, k, seed)
    out = []
    for c in range(k):
        sel = labels == c
        if int(sel.sum()) < tau_size1:
            continue
        sub = tuple(m for m, s in zip(members, sel) if s)
        try:
            theta = circular_mean(angles[sel])
        except ZeroResultant:
            theta = bvf.theta
        out.append(Cvf(bvf.b, len(out), theta, sub))
    if not out:
        return [Cvf(bvf.b, 0, bvf.theta, tuple(members))]
    return out


def build_hierarchy(
    frontiers,
    agent_cell: Cellxy,
    seed: int = 0,
    tau_size0: int = DEFAULT_TAU_SIZE0,
    tau_size1: int = DEFAULT_TAU_SIZE1,
    heading: float = 0.0,
) -> FrontierHierarchy:
    """Full BVF -> CVF hierarchy with every node anchored to a frontier cell.

    ``frontiers`` may hold cells or ``FrontierCell`` records.
    """
    cells = _sorted_cells(getattr(f, "cell", f) for f in frontiers)
    agent_cell = (int(agent_cell[0]), int(agent_cell[1]))
    bvfs = build_bvf(cells, agent_cell, seed, tau_size0, heading)
    kept = set()
    for bvf in bvfs:
        bvf.children = build_cvf(bvf, agent_cell, seed, tau_size1)
        bvf.anchor = representative_cell(cells, agent_cell, bvf.theta)
        for cvf in bvf.children:
            cvf.anchor = representative_cell(cells, agent_cell, cvf.theta)
        kept.update(bvf.members)
    dropped = tuple(c for c in cells if c not in kept)
    return FrontierHierarchy(bvfs, agent_cell, tuple(cells), dropped)


# ---------------------------------------------------------------------------
# Snapshots


def _centre_depth(grid: GridMap, cell: Cellxy, theta: float, range_cells: int) -> int:
    """Steps along the central ray until a wall (or the range limit)."""
    for k in range(1, range_cells + 1):
        c = (int(round(cell[0] + k * math.cos(theta))), int(round(cell[1] + k * math.sin(theta))))
        if not grid.in_bounds(c) or grid.walls[c[1], c[0]]:
            return k
    return range_cells


def render_snapshot(grid: GridMap, occ: Optional[OccupancyMap], agent_cell: Cellxy, theta: float, sensing: Sensing = Sensing()) -> Snapshot:
    """Cone view toward ``theta`` rendered as deterministic ASCII.

    Grid glyphs: ``@`` agent, ``#`` wall, ``.`` free, ``*`` labelled cell.
    Cells not yet in ``occ.seen`` are counted as novel.
    """
    pose = AgentPose(agent_cell, theta)
    obs = cast_rays(grid, pose, sensing.fov_rad, sensing.range_cells)
    labels = tuple(sorted(lab for lab in obs.labels if lab is not None))
    novel = 0
    if occ is not None:
        novel = int((~occ.seen[obs.cells[:, 1], obs.cells[:, 0]]).sum())
    depth = _centre_depth(grid, agent_cell, theta, sensing.range_cells)

    xs, ys = obs.cells[:, 0], obs.cells[:, 1]
    x0, x1, y0, y1 = int(xs.min()), int(xs.max()), int(ys.min()), int(ys.max())
    canvas = [[" "] * (x1 - x0 + 1) for _ in range(y1 - y0 + 1)]
    for (x, y), wall, lab in zip(obs.cells, obs.walls, obs.labels):
        canvas[y - y0][x - x0] = "#" if wall else ("*" if lab is not None else ".")
    canvas[agent_cell[1] - y0][agent_cell[0] - x0] = "@"

    label_desc = []
    for (x, y), lab in zip(obs.cells, obs.labels):
        if lab is not None:
            dist = abs(int(x) - agent_cell[0]) + abs(int(y) - agent_cell[1])
            label_desc.append((dist, lab))
    label_desc.sort()
    header = [
        f"view heading={round(math.degrees(theta)):d}deg depth={depth} novel={novel}",
        "labels: " + (", ".join(f"{lab} ({d} cells)" for d, lab in label_desc) if label_desc else "none"),
    ]
    text = "\n".join(header + ["".join(row).rstrip() for row in canvas])
    return Snapshot(theta=theta, observation=obs, labels=labels, text_render=text, depth=depth, novel=novel)


def attach_snapshots(hier: FrontierHierarchy, grid: GridMap, occ: Optional[OccupancyMap], sensing: Sensing = Sensing()) -> FrontierHierarchy:
    for bvf in hier.bvfs:
        bvf.snapshot = render_snapshot(grid, occ, hier.agent_cell, bvf.theta, sensing)
        for cvf in bvf.children:
            cvf.snapshot = render_snapshot(grid, occ, hier.agent_cell, cvf.theta, sensing)
    return hier


def dump_hierarchy(hier: FrontierHierarchy) -> str:
    lines = []
    for bvf in hier.bvfs:
        lines.append(f"BVF {bvf.b} {math.degrees(bvf.theta):.1f} {len(bvf.members)}")
        for cvf in bvf.children:
            ax, ay = cvf.anchor if cvf.anchor is not None else ("-", "-")
            lines.append(f"CVF {cvf.b} {cvf.j} {math.degrees(cvf.theta):.1f} {len(cvf.members)} {ax} {ay}")
    return "\n".join(lines) + ("\n" if lines else "")
