"""Trajectory verbalisation, retrospective reflection/abstraction and the experience library."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import prompts
from .clients import DEFAULT_PARAMS, GenParams
from .errors import DuplicateId, JudgeParseError, LibraryFormatError, MalformedReflection

PASS = "PASS"
FAIL = "FAIL"


@dataclass
class StepRecord:
    t: int
    text: str
    theta: Optional[float] = None
    cell: Optional[tuple] = None
    snapshot: object = None
    kind: str = "explore"
    moved: int = 0


@dataclass
class TrajectoryLog:
    question: str
    steps: list
    outcome: str = FAIL
    G: Optional[int] = None
    P: int = 0


@dataclass
class Abstraction:
    reflection_blocks: tuple
    abstraction_text: str
    source_question: str = ""
    source_outcome: str = ""

    def __post_init__(self):
        self.reflection_blocks = tuple(self.reflection_blocks)
        if len(self.reflection_blocks) != 5 or not all(b.strip() for b in self.reflection_blocks):
            raise MalformedReflection("an abstraction needs five nonempty reflection blocks")
        if not self.abstraction_text.strip():
            raise MalformedReflection("empty abstraction paragraph")


@dataclass
class StoredSnapshot:
    step: int
    theta: float
    labels: tuple
    text_render: str

    @classmethod
    def from_snapshot(cls, step: int, snap) -> "StoredSnapshot":
        return cls(step, float(snap.theta), tuple(snap.labels), snap.text_render)


def chunk_trajectory(log: TrajectoryLog, chunk_len: int = 10) -> list:
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    steps = list(log.steps)
    return [steps[i : i + chunk_len] for i in range(0, len(steps), chunk_len)]


def verbalize_chunk(chunk: Sequence[StepRecord], question: str, outcome: str, client, params: GenParams = DEFAULT_PARAMS) -> str:
    if not chunk:
        raise ValueError("cannot caption an empty chunk")
    texts = [s.text for s in chunk]
    return client.generate(prompts.chunk_prompt(question, outcome, texts), params).strip()


def summarize_trajectory(chunk_captions: Sequence[str], client, params: GenParams = DEFAULT_PARAMS) -> str:
    if not chunk_captions:
        raise ValueError("need at least one chunk caption")
    return client.generate(prompts.summary_prompt(chunk_captions), params).strip()


_STEP_RE = re.compile(r"^[ \t>*_#-]*Step\s+(\d+)\b[^:\n]*:[ \t*_]*", re.IGNORECASE | re.MULTILINE)
_REFL_RE = re.compile(r"^[ \t*_#]*REFLECTION\s*:[ \t*_]*", re.MULTILINE)
_ABS_RE = re.compile(r"^[ \t*_#]*ABSTRACTION\s*:[ \t*_]*", re.MULTILINE)
_ABS_LABEL_RE = re.compile(r"^[ \t*_]*Abstraction\b[^:\n]*:[ \t*_]*")


def parse_reflection(text: str, question: str = "", outcome: str = "") -> Abstraction:
    """Parse ``REFLECTION:`` + Step 0..4 + ``ABSTRACTION:`` + paragraph.

    Block labels must appear exactly once each and in order; anything else is
    a ``MalformedReflection``.
    """
    refl = list(_REFL_RE.finditer(text))
    absn = list(_ABS_RE.finditer(text))
    if len(refl) != 1 or len(absn) != 1 or absn[0].start() < refl[0].end():
        raise MalformedReflection("expected one REFLECTION: section followed by one ABSTRACTION: section")
    body = text[refl[0].end() : absn[0].start()]
    heads = list(_STEP_RE.finditer(body))
    numbers = [int(m.group(1)) for m in heads]
    if numbers != [0, 1, 2, 3, 4]:
        raise MalformedReflection(f"reflection blocks must be Step 0..4 in order, found {numbers}")
    if body[: heads[0].start()].strip():
        raise MalformedReflection("text before Step 0")
    blocks = []
    for i, m in enumerate(heads):
        end = heads[i + 1].start() if i + 1 < len(heads) else len(body)
        content = body[m.end() : end].strip()
        if not content:
            raise MalformedReflection(f"Step {i} is empty")
        blocks.append(content)
    tail = text[absn[0].end() :].strip()
    tail = _ABS_LABEL_RE.sub("", tail, count=1).strip()
    if not tail:
        raise MalformedReflection("missing abstraction paragraph")
    if _STEP_RE.search(tail):
        raise MalformedReflection("step block after ABSTRACTION:")
    return Abstraction(tuple(blocks), tail, question, outcome)


def format_reflection(blocks: Sequence[str], paragraph: str) -> str:
    """Inverse of :func:`parse_reflection` for well-formed inputs."""
    lines = ["REFLECTION:"]
    for i, (name, text) in enumerate(zip(prompts.REFLECTION_BLOCKS, blocks)):
        lines.append(f"Step {i} ({name}): {text}")
    lines += ["ABSTRACTION:", f"Abstraction: {paragraph}"]
    return "\n".join(lines)


def reflect_and_abstract(traj_caption: str, question: str, outcome: str, client, params: GenParams = DEFAULT_PARAMS) -> Abstraction:
    if not (traj_caption.strip() and question.strip() and outcome.strip()):
        raise ValueError("caption, question and outcome must be nonempty")
    reply = client.generate(prompts.reflection_prompt(question, traj_caption, outcome), params)
    return parse_reflection(reply, question, outcome)


@dataclass(frozen=True)
class AbstractionScore:
    generality: int
    relevance: int
    conciseness: int
    actionability: int

    @property
    def overall(self) -> float:
        return (self.generality + self.relevance + self.conciseness + self.actionability) / 4.0


def parse_quality(reply: str) -> AbstractionScore:
    vals = {}
    for dim in prompts.QUALITY_DIMENSIONS:
        found = re.findall(rf"{dim}\s*[:=]\s*([1-5])\b", reply, flags=re.IGNORECASE)
        if not found:
            raise JudgeParseError(f"no score for {dim}")
        vals[dim.lower()] = int(found[-1])
    return AbstractionScore(**vals)


def score_abstraction(abstraction: Abstraction, judge, params: GenParams = DEFAULT_PARAMS) -> AbstractionScore:
    reply = judge.generate(prompts.quality_prompt(abstraction.abstraction_text, abstraction.source_question), params)
    return parse_quality(reply)


# ---------------------------------------------------------------------------
# Library


@dataclass
class LibraryEntry:
    trajectory_id: str
    question: str
    outcome: str
    abstraction: Abstraction
    snapshots: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "question": self.question,
            "outcome": self.outcome,
            "abstraction": {"blocks": list(self.abstraction.reflection_blocks), "paragraph": self.abstraction.abstraction_text},
            "snapshots": [
                {"step": s.step, "theta_rad": s.theta, "labels": list(s.labels), "text_render": s.text_render}
                for s in self.snapshots
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "LibraryEntry":
        try:
            abs_ = Abstraction(tuple(d["abstraction"]["blocks"]), d["abstraction"]["paragraph"], d["question"], d["outcome"])
            snaps = [StoredSnapshot(int(s["step"]), float(s["theta_rad"]), tuple(s["labels"]), s["text_render"]) for s in d["snapshots"]]
            return cls(str(d["trajectory_id"]), d["question"], d["outcome"], abs_, snaps)
        except (KeyError, TypeError, ValueError) as exc:
            raise LibraryFormatError(f"bad library entry: {exc}") from exc


@dataclass
class ExperienceLibrary:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def ids(self) -> list:
        return [e.trajectory_id for e in self.entries]

    def get(self, trajectory_id: str) -> LibraryEntry:
        for e in self.entries:
            if e.trajectory_id == trajectory_id:
                return e
        raise KeyError(trajectory_id)

    def fresh_id(self) -> str:
        taken = set(self.ids())
        n = len(self.entries)
        while f"traj-{n:05d}" in taken:
            n += 1
        return f"traj-{n:05d}"

    def add(self, question: str, outcome: str, abstraction: Abstraction, snapshots=(), trajectory_id: Optional[str] = None) -> LibraryEntry:
        if trajectory_id is None:
            trajectory_id = self.fresh_id()
        elif trajectory_id in set(self.ids()):
            raise DuplicateId(trajectory_id)
        entry = LibraryEntry(trajectory_id, question, outcome, abstraction, list(snapshots))
        self.entries.append(entry)
        return entry

    def add_entry(self, entry: LibraryEntry) -> LibraryEntry:
        if entry.trajectory_id in set(self.ids()):
            raise DuplicateId(entry.trajectory_id)
        self.entries.append(entry)
        return entry

    def dumps(self) -> str:
        return "".join(json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for e in self.entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ExperienceLibrary":
        lib = cls()
        for lineno, line in enumerate(text.split("\n"), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LibraryFormatError(f"line {lineno}: {exc}") from exc
            if not isinstance(d, dict):
                raise LibraryFormatError(f"line {lineno}: expected an object")
            lib.add_entry(LibraryEntry.from_json(d))
        return lib

    @classmethod
    def load(cls, path) -> "ExperienceLibrary":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def __eq__(self, other):
        if not isinstance(other, ExperienceLibrary):
            return NotImplemented
        return [e.to_json() for e in self.entries] == [e.to_json() for e in other.entries]


library_add = ExperienceLibrary.add
library_save = ExperienceLibrary.save
library_load = ExperienceLibrary.load
