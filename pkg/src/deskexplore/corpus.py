"""Synthetic map corpora standing in for scanned indoor scenes."""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sim import AgentPose, GridMap, bfs_distances, dump_map

LABEL_POOL = (
    "sofa",
    "bed",
    "refrigerator",
    "television",
    "bathtub",
    "plant",
    "oven",
    "desk",
    "washing machine",
    "bookshelf",
)

CATEGORIES = (
    "object recognition",
    "object localization",
    "attribute recognition",
    "spatial understanding",
    "object state recognition",
    "functional reasoning",
    "world knowledge",
)

QUESTION_TEMPLATES = {
    "object recognition": "Is there a {label} in this home?",
    "object localization": "Where is the {label}?",
    "attribute recognition": "What does the {label} look like?",
    "spatial understanding": "What is next to the {label}?",
    "object state recognition": "Is the {label} in use?",
    "functional reasoning": "Where could I find the {label} to use it?",
    "world knowledge": "Which room holds the {label}?",
}

# room-grid (column, row) offsets from the centre room
SECTORS = {
    "east": [(1, -1), (1, 0), (1, 1)],
    "west": [(-1, -1), (-1, 0), (-1, 1)],
    "north": [(-1, -1), (0, -1), (1, -1)],
    "south": [(-1, 1), (0, 1), (1, 1)],
}


@dataclass
class Question:
    question_id: str
    text: str
    target_label: str
    category: str = ""
    map: str = ""
    ground_truth: str = ""
    paraphrases: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "text": self.text,
            "target_label": self.target_label,
            "category": self.category,
            "map": self.map,
            "ground_truth": self.ground_truth,
            "paraphrases": list(self.paraphrases),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Question":
        return cls(
            str(d["question_id"]),
            d["text"],
            d["target_label"],
            d.get("category", ""),
            d.get("map", ""),
            d.get("ground_truth", ""),
            list(d.get("paraphrases", [])),
        )


@dataclass
class GeneratedMap:
    name: str
    grid: GridMap
    question: Question

    @property
    def text(self) -> str:
        return dump_map(self.grid)


def _maze(rng: random.Random, size: int, width: int = 2) -> np.ndarray:
    """Recursive-backtracker maze with ``width``-wide corridors and 1-cell walls."""
    walls = np.ones((size, size), dtype=bool)
    pitch = width + 1
    n = (size - 1) // pitch  # maze cells per side

    def carve(i, j):
        x, y = 1 + pitch * i, 1 + pitch * j
        walls[y : y + width, x : x + width] = False

    start = (rng.randrange(n), rng.randrange(n))
    visited = {start}
    stack = [start]
    carve(*start)
    while stack:
        ci, cj = stack[-1]
        nbrs = [(ci + di, cj + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        nbrs = [c for c in nbrs if 0 <= c[0] < n and 0 <= c[1] < n and c not in visited]
        if not nbrs:
            stack.pop()
            continue
        ni, nj = rng.choice(nbrs)
        carve(ni, nj)
        # open the wall between the two cells
        x0, y0 = 1 + pitch * min(ci, ni), 1 + pitch * min(cj, nj)
        if ni != ci:
            walls[y0 : y0 + width, x0 + width] = False
        else:
            walls[y0 + width, x0 : x0 + width] = False
        visited.add((ni, nj))
        stack.append((ni, nj))
    return walls


def _room_bounds(size: int) -> list:
    """Interior [lo, hi] ranges of the three room bands along one axis."""
    a = round((size - 1) / 3)
    b = round(2 * (size - 1) / 3)
    return [(1, a - 1), (a + 1, b - 1), (b + 1, size - 2)]


def _rooms(rng: random.Random, size: int) -> np.ndarray:
    walls = np.zeros((size, size), dtype=bool)
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    bands = _room_bounds(size)
    cuts = [bands[0][1] + 1, bands[1][1] + 1]
    for c in cuts:
        walls[:, c] = True
        walls[c, :] = True
    # one door in every wall segment between neighbouring rooms
    for c in cuts:
        for lo, hi in bands:
            walls[rng.randint(lo, hi), c] = False
            walls[c, rng.randint(lo, hi)] = False
    return walls


def _room_cells(walls: np.ndarray, size: int, col: int, row: int) -> list:
    bands = _room_bounds(size)
    (x0, x1), (y0, y1) = bands[col], bands[row]
    return [(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1) if not walls[y, x]]


def generate_map(seed: int, index: int, size: int, style: str, label_sectors: Optional[dict] = None, n_distractors: int = 2) -> GeneratedMap:
    if size < 7:
        raise ValueError("size must be >= 7")
    rng = random.Random(f"{seed}:{index}:{style}:{size}")
    if style == "maze":
        walls = _maze(rng, size)
    elif style == "rooms":
        walls = _rooms(rng, size)
    else:
        raise ValueError(f"unknown style {style!r}")
    free = [(x, y) for y in range(size) for x in range(size) if not walls[y, x]]

    if style == "rooms":
        start_cell = rng.choice(_room_cells(walls, size, 1, 1))
    else:
        start_cell = rng.choice(free)
    reach = bfs_distances(~walls, [start_cell])

    labels_for_map = rng.sample(LABEL_POOL, 1 + n_distractors)
    target_label = labels_for_map[0]
    if label_sectors:
        target_label = rng.choice(sorted(label_sectors))
        others = [l for l in LABEL_POOL if l != target_label]
        labels_for_map = [target_label] + rng.sample(others, n_distractors)

    if style == "rooms" and label_sectors:
        col, row = rng.choice(SECTORS[label_sectors[target_label]])
        pool = _room_cells(walls, size, 1 + col, 1 + row)
    else:
        far = max(reach.values())
        pool = sorted(c for c, d in reach.items() if d >= far / 2 and c != start_cell)
    target_cell = rng.choice(pool)
    if target_cell not in reach:
        raise RuntimeError(f"generator produced an unreachable target in map {index}")

    labels = {target_cell: target_label}
    spare = [c for c in free if c not in labels and c != start_cell]
    for lab in labels_for_map[1:]:
        cell = rng.choice(spare)
        spare.remove(cell)
        labels[cell] = lab

    grid = GridMap(walls=walls, labels=labels, cell_size_m=0.1, start=AgentPose(start_cell, 0.0))
    name = f"{style}_{seed:04d}_{index:03d}"
    category = CATEGORIES[index % len(CATEGORIES)]
    question = Question(
        question_id=name,
        text=QUESTION_TEMPLATES[category].format(label=target_label),
        target_label=target_label,
        category=category,
        map=f"{name}.txt",
        ground_truth=f"The {target_label} is near cell ({target_cell[0]}, {target_cell[1]}).",
        paraphrases=[f"at ({target_cell[0]}, {target_cell[1]})"],
    )
    return GeneratedMap(name, grid, question)


def gen_maps(
    seed: int,
    count: int,
    size: int = 15,
    style: str = "maze",
    out_dir=None,
    label_sectors: Optional[dict] = None,
) -> list:
    """Deterministic corpus; writes ``<name>.txt`` files and ``questions.json`` when ``out_dir`` is given."""
    maps = [generate_map(seed, i, size, style, label_sectors) for i in range(count)]
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for gm in maps:
            with open(os.path.join(out_dir, f"{gm.name}.txt"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(gm.text)
        with open(os.path.join(out_dir, "questions.json"), "w", encoding="utf-8", newline="\n") as fh:
            json.dump([gm.question.to_json() for gm in maps], fh, indent=2, ensure_ascii=False)
            fh.write("\n")
    return maps


def bearing_deg(sector: str) -> float:
    return {"east": 0.0, "south": 90.0, "west": 180.0, "north": -90.0}[sector]
