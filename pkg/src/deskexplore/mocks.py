"""Deterministic scripted backends used by the CLI demo and the test suite.

All of them route on the ``TASK:`` marker on the first line of each prompt.
"""

from __future__ import annotations

import hashlib
import math
import re
from typing import Optional

from . import prompts
from .clients import DEFAULT_PARAMS, GenParams
from .experience import format_reflection
from .sim import wrap_angle

_HEADING_RE = re.compile(r"heading=(-?\d+)deg")
_NOVEL_RE = re.compile(r"novel=(\d+)")
_OFFSET_RE = re.compile(r"target '([^']+)' reached at offset \((-?\d+), (-?\d+)\)")
_HINT_RE = re.compile(r"Directional prior for ([^:]+): bearing (-?\d+(?:\.\d+)?) deg")


def task_of(prompt: str) -> str:
    return prompt.split("\n", 1)[0].strip()


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def candidate_blocks(prompt: str, header: str) -> list:
    """Texts of the ``<header> i:`` candidate blocks of a selection prompt, in order."""
    lines = prompt.split("\n")
    out: list = []
    cur: Optional[list] = None
    head_re = re.compile(rf"^{header} (\d+):$")
    for ln in lines:
        m = head_re.match(ln)
        if m:
            cur = []
            out.append(cur)
            continue
        if cur is not None:
            if ln.startswith("## ") or not ln:
                cur = None
            else:
                cur.append(ln)
    return ["\n".join(b) for b in out]


def section(prompt: str, name: str) -> str:
    lines = prompt.split("\n")
    try:
        i = lines.index(f"## {name}")
    except ValueError:
        return ""
    out = []
    for ln in lines[i + 1 :]:
        if ln.startswith("## "):
            break
        out.append(ln)
    return "\n".join(out).strip()


def _layer(prompt: str) -> str:
    m = re.search(r"Only (BVF|CVF) candidates", prompt)
    return m.group(1) if m else "BVF"


def _novelty(block: str) -> int:
    m = _NOVEL_RE.search(block)
    return int(m.group(1)) if m else 0


def _generic_reflection(question: str) -> str:
    blocks = [
        f"The task was: {question} Success meant reaching the object and answering.",
        "The agent swept the nearest open sectors first and moved on when a view added little new area.",
        "Labelled objects sit inside rooms rather than in the connecting passages.",
        "Prefer directions that reveal many unseen cells; doorways lead to new rooms.",
        "Avoid returning to sectors that were already covered.",
    ]
    return format_reflection(blocks, "Favour unexplored rooms reached through doorways and stop once the object is in reach.")


class DemoGen:
    """Generic backend: greedy novelty for choices, boilerplate for text tasks."""

    def __init__(self):
        self.calls: list = []

    def generate(self, prompt: str, params: GenParams = DEFAULT_PARAMS) -> str:
        self.calls.append(prompt)
        return self.respond(prompt)

    def choose(self, prompt: str, blocks: list) -> int:
        scores = [_novelty(b) for b in blocks]
        return max(range(len(blocks)), key=lambda i: (scores[i], -i)) if blocks else 0

    def respond(self, prompt: str) -> str:
        task = task_of(prompt)
        if task == prompts.SELECT_TASK:
            layer = _layer(prompt)
            i = self.choose(prompt, candidate_blocks(prompt, layer))
            return f"Picking the view with the most unseen area.\n{layer} {i}"
        if task == prompts.LISTWISE_TASK:
            i = self.choose(prompt, candidate_blocks(prompt, "FRONTIER"))
            return f"Most unseen area.\nFRONTIER {i}"
        if task == prompts.POINTWISE_TASK:
            n = _novelty(section(prompt, "Frontier"))
            return f"SCORE: {min(1.0, n / 100.0):.2f}"
        if task == prompts.PAIRWISE_TASK:
            a, b = _novelty(section(prompt, "OPTION A")), _novelty(section(prompt, "OPTION B"))
            return "CHOICE: B" if b > a else "CHOICE: A"
        if task == prompts.CHUNK_TASK:
            steps = prompt.split("Steps:\n", 1)[-1].split("\n")
            return " ".join(s for s in steps if s)
        if task == prompts.SUMMARY_TASK:
            caps = [ln.split(": ", 1)[1] for ln in prompt.split("\n") if ln.startswith("Segment ")]
            return " ".join(caps)
        if task == prompts.REFLECT_TASK:
            q = re.search(r"^Target Task: (.*)$", prompt, re.MULTILINE)
            return _generic_reflection(q.group(1) if q else "")
        if task == prompts.MEMORY_TASK:
            n = prompt.count("[View ")
            return f"The last {n} views covered nearby sectors; unseen directions remain."
        if task == prompts.QUALITY_TASK:
            return "\n".join(f"{d}: 4" for d in prompts.QUALITY_DIMENSIONS)
        if task == prompts.GRADE_TASK:
            ref = re.search(r"^Reference answer: (.*)$", prompt, re.MULTILINE)
            pred = re.search(r"^Prediction: (.*)$", prompt, re.MULTILINE)
            if ref and pred and ref.group(1).strip().lower() == pred.group(1).strip().lower():
                return "5"
            return "2"
        return "ok"


class HintEmittingGen(DemoGen):
    """Text backend whose reflections plant a directional prior for the target.

    The final approach step of a trajectory names the target and its offset
    from the start cell; captions copy step texts verbatim, so the offset
    survives into the reflection prompt, where it becomes a bearing.
    """

    def respond(self, prompt: str) -> str:
        if task_of(prompt) != prompts.REFLECT_TASK:
            return super().respond(prompt)
        q = re.search(r"^Target Task: (.*)$", prompt, re.MULTILINE)
        question = q.group(1) if q else ""
        m = _OFFSET_RE.search(prompt)
        if not m:
            return _generic_reflection(question)
        label, dx, dy = m.group(1), int(m.group(2)), int(m.group(3))
        deg = round(math.degrees(math.atan2(dy, dx)), 1)
        hint = f"Directional prior for {label}: bearing {deg} deg."
        blocks = [
            f"The task was: {question} Success meant reaching the {label}.",
            f"The agent explored and finally reached the {label}.",
            f"The {label} sat in a room off the central room.",
            hint,
            "Avoid sweeping every room before checking the prior direction.",
        ]
        return format_reflection(blocks, f"{hint} Head that way first and enter rooms through their doorways.")


class HintFollowingGen(DemoGen):
    """Selection backend that follows planted directional priors.

    Hints whose label occurs in the question are averaged; the candidate whose
    heading is closest wins. Without a usable hint the choice is a fixed
    pseudo-random function of the prompt.
    """

    def choose(self, prompt: str, blocks: list) -> int:
        if not blocks:
            return 0
        question = section(prompt, "Question").lower()
        bearings = [math.radians(float(b)) for lab, b in _HINT_RE.findall(prompt) if lab.strip().lower() in question]
        headings = []
        for blk in blocks:
            m = _HEADING_RE.search(blk)
            headings.append(math.radians(float(m.group(1))) if m else None)
        if bearings and all(h is not None for h in headings):
            s = sum(math.sin(b) for b in bearings)
            c = sum(math.cos(b) for b in bearings)
            if math.hypot(s, c) > 1e-9:
                target = math.atan2(s, c)
                return min(range(len(blocks)), key=lambda i: (round(abs(wrap_angle(headings[i] - target)), 9), i))
        return _stable_int(prompt) % len(blocks)
