"""Frontier-selection policies.

The hierarchical policy asks for a broad direction, then a close-up direction
inside it: two generation calls per decision regardless of how many frontier
cells exist. Listwise, pointwise and pairwise baselines rank a flat candidate
list. Every policy is total: malformed replies fall back to a fixed choice and
the fallback is recorded in ``Selection.events``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from . import prompts
from .clients import DEFAULT_PARAMS, GenParams
from .errors import ClientError, EmptyHierarchy, InvalidIndex, NoDecision, NoLabeledTarget
from .hierarchy import FrontierHierarchy, Snapshot
from .sim import Cellxy, GridMap, bfs_distances

log = logging.getLogger(__name__)


@dataclass
class FrontierView:
    """A candidate as the policy sees it."""

    cell: Cellxy
    theta: float
    snapshot: Optional[Snapshot] = None


@dataclass
class DecisionContext:
    question: str
    candidates: Sequence
    layer: str = "BVF"
    working_memory: str = ""
    replay: object = None
    egocentric: Optional[str] = None

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("DecisionContext needs at least one candidate")
        if self.layer not in ("BVF", "CVF"):
            raise ValueError(f"unknown layer {self.layer!r}")


@dataclass
class Decision:
    chosen_index: int
    rationale: str
    raw_response: str


@dataclass
class Selection:
    cell: Cellxy
    index: tuple
    events: list = field(default_factory=list)
    prompts: list = field(default_factory=list)
    view: Optional[FrontierView] = None


def replay_texts(replay) -> list:
    if replay is None:
        return []
    return [e.abstraction.abstraction_text for e in replay.entries]


def assemble_selection_prompt(ctx: DecisionContext) -> str:
    return prompts.selection_prompt(
        ctx.question,
        ctx.layer,
        ctx.candidates,
        working_memory=ctx.working_memory,
        abstractions=replay_texts(ctx.replay),
        egocentric=ctx.egocentric,
    )


def _parse_label(response: str, label: str, n_candidates: int) -> Decision:
    matches = list(re.finditer(rf"\b{label}\s+(\d+)\b", response, flags=re.IGNORECASE))
    if not matches:
        raise NoDecision(f"no '{label} i' line in response")
    last = matches[-1]
    idx = int(last.group(1))
    if idx >= n_candidates:
        raise InvalidIndex(idx, n_candidates)
    return Decision(idx, response[: last.start()].strip(), response)


def parse_decision(response: str, n_candidates: int, layer: str) -> Decision:
    """Pick the last ``BVF i`` / ``CVF i`` mention for the given layer."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    return _parse_label(response, layer, n_candidates)


def _ask(client, prompt: str, params: GenParams) -> Optional[str]:
    try:
        return client.generate(prompt, params)
    except ClientError as exc:
        log.warning("generation failed: %s", exc)
        return None


def hierarchical_select(
    hier: FrontierHierarchy,
    question: str,
    working_memory: str,
    replay,
    client,
    params: GenParams = DEFAULT_PARAMS,
    egocentric: Optional[str] = None,
    replay_layers: tuple = ("BVF", "CVF"),
) -> Selection:
    """Coarse-to-fine choice. Always exactly two generation calls.

    A bad BVF reply falls back to BVF 0; a bad CVF reply falls back to the
    chosen BVF's own anchor cell, except that a lone CVF is taken as is.
    """
    if not hier.bvfs:
        raise EmptyHierarchy("hierarchy has no broad-view frontiers")
    sel = Selection(cell=None, index=())

    bvf_views = [FrontierView(b.anchor, b.theta, b.snapshot) for b in hier.bvfs]
    ctx = DecisionContext(
        question, bvf_views, "BVF", working_memory, replay if "BVF" in replay_layers else None, egocentric
    )
    prompt = assemble_selection_prompt(ctx)
    sel.prompts.append(prompt)
    reply = _ask(client, prompt, params)
    b = 0
    try:
        if reply is None:
            raise NoDecision("client failure")
        b = parse_decision(reply, len(bvf_views), "BVF").chosen_index
    except (InvalidIndex, NoDecision) as exc:
        sel.events.append(f"bvf_fallback: {exc}")
    bvf = hier.bvfs[b]

    cvf_views = [FrontierView(c.anchor, c.theta, c.snapshot) for c in bvf.children]
    ctx = DecisionContext(
        question, cvf_views, "CVF", working_memory, replay if "CVF" in replay_layers else None, egocentric
    )
    prompt = assemble_selection_prompt(ctx)
    sel.prompts.append(prompt)
    reply = _ask(client, prompt, params)
    try:
        if reply is None:
            raise NoDecision("client failure")
        j = parse_decision(reply, len(cvf_views), "CVF").chosen_index
    except (InvalidIndex, NoDecision) as exc:
        if len(cvf_views) == 1:
            # a lone close-up direction is a forced choice whatever the reply
            j = 0
            sel.events.append(f"cvf_forced: {exc}")
        else:
            j = None
            sel.events.append(f"cvf_fallback: {exc}")
    if j is None:
        sel.cell = bvf.anchor
        sel.index = (b,)
        sel.view = bvf_views[b]
        return sel
    sel.cell = bvf.children[j].anchor
    sel.index = (b, j)
    sel.view = cvf_views[j]
    return sel


def _as_views(candidates) -> list:
    out = []
    for c in candidates:
        if isinstance(c, FrontierView):
            out.append(c)
        else:
            out.append(FrontierView((int(c[0]), int(c[1])), 0.0))
    return out


def listwise_select(
    candidates: Sequence,
    question: str,
    client,
    working_memory: str = "",
    replay=None,
    params: GenParams = DEFAULT_PARAMS,
) -> Selection:
    """All candidates in one prompt; reply ``FRONTIER i``; fallback index 0."""
    views = _as_views(candidates)
    if not views:
        raise ValueError("no candidates")
    sel = Selection(cell=views[0].cell, index=(0,), view=views[0])
    if len(views) == 1:
        return sel
    prompt = prompts.listwise_prompt(question, views, working_memory, replay_texts(replay))
    sel.prompts.append(prompt)
    reply = _ask(client, prompt, params)
    try:
        if reply is None:
            raise NoDecision("client failure")
        i = _parse_label(reply, "FRONTIER", len(views)).chosen_index
    except (InvalidIndex, NoDecision) as exc:
        sel.events.append(f"listwise_fallback: {exc}")
        return sel
    sel.cell, sel.index, sel.view = views[i].cell, (i,), views[i]
    return sel


_SCORE_RE = re.compile(r"SCORE:\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)", re.IGNORECASE)
_CHOICE_RE = re.compile(r"CHOICE:\s*([AB])\b", re.IGNORECASE)


def pointwise_select(
    candidates: Sequence,
    question: str,
    client,
    working_memory: str = "",
    replay=None,
    params: GenParams = DEFAULT_PARAMS,
) -> Selection:
    """Score each candidate on its own and take the argmax; ties go to the lowest index."""
    views = _as_views(candidates)
    if not views:
        raise ValueError("no candidates")
    sel = Selection(cell=views[0].cell, index=(0,), view=views[0])
    if len(views) == 1:
        return sel
    scores = []
    for view in views:
        prompt = prompts.pointwise_prompt(question, view, working_memory, replay_texts(replay))
        sel.prompts.append(prompt)
        try:
            reply = client.generate(prompt, params)
        except ClientError as exc:
            sel.events.append(f"pointwise_fallback: {exc}")
            return sel
        found = _SCORE_RE.findall(reply)
        value = float(found[-1]) if found else -math.inf
        if not found:
            sel.events.append("pointwise_unparsed")
        scores.append(value if math.isfinite(value) else -math.inf)
    best = max(range(len(views)), key=lambda i: (scores[i], -i))
    sel.cell, sel.index, sel.view = views[best].cell, (best,), views[best]
    return sel


def pairwise_select(
    candidates: Sequence,
    question: str,
    client,
    working_memory: str = "",
    replay=None,
    params: GenParams = DEFAULT_PARAMS,
) -> Selection:
    """Single-elimination bracket in candidate order; an odd one out gets a bye."""
    views = _as_views(candidates)
    if not views:
        raise ValueError("no candidates")
    sel = Selection(cell=views[0].cell, index=(0,), view=views[0])
    alive = list(range(len(views)))
    while len(alive) > 1:
        nxt = []
        for a, b in zip(alive[0::2], alive[1::2]):
            prompt = prompts.pairwise_prompt(question, views[a], views[b], working_memory, replay_texts(replay))
            sel.prompts.append(prompt)
            try:
                reply = client.generate(prompt, params)
            except ClientError as exc:
                sel.events.append(f"pairwise_fallback: {exc}")
                return sel
            found = _CHOICE_RE.findall(reply)
            if not found:
                sel.events.append(f"pairwise_unparsed: {a} vs {b}")
                nxt.append(a)
            else:
                nxt.append(b if found[-1].upper() == "B" else a)
        if len(alive) % 2:
            nxt.append(alive[-1])
        alive = nxt
    w = alive[0]
    sel.cell, sel.index, sel.view = views[w].cell, (w,), views[w]
    return sel


def geodesic_to_label(grid: GridMap, target_label: str) -> dict:
    goals = grid.cells_labeled(target_label)
    if not goals:
        raise NoLabeledTarget(f"no cell labelled {target_label!r}")
    return bfs_distances(grid.free_mask, goals)


def scripted_oracle_select(
    candidates: Union[FrontierHierarchy, Sequence],
    grid: GridMap,
    target_label: str,
    distances: Optional[dict] = None,
) -> Selection:
    """Ground-truth policy: the candidate nearest (geodesically) to the target label.

    A hierarchy is flattened to its BVF anchors followed by its CVF anchors.
    """
    if distances is None:
        distances = geodesic_to_label(grid, target_label)
    if isinstance(candidates, FrontierHierarchy):
        views, keys = [], []
        for bvf in candidates.bvfs:
            views.append(FrontierView(bvf.anchor, bvf.theta, bvf.snapshot))
            keys.append((bvf.b,))
        for bvf in candidates.bvfs:
            for cvf in bvf.children:
                views.append(FrontierView(cvf.anchor, cvf.theta, cvf.snapshot))
                keys.append((cvf.b, cvf.j))
    else:
        views = _as_views(candidates)
        keys = [(i,) for i in range(len(views))]
    if not views:
        raise ValueError("no candidates")
    best = min(range(len(views)), key=lambda i: (distances.get(views[i].cell, math.inf), i))
    return Selection(views[best].cell, keys[best], view=views[best])
