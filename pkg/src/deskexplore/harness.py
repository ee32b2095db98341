"""Episode orchestration, experience collection and ablation sweeps."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clients import HttpTextGen, MockGen
from .corpus import Question
from .errors import ClientError, ConfigError, MalformedReflection
from .evaluation import EpisodeResult, build_report, fallback_score, grade_answer, item_spl
from .experience import FAIL, PASS, ExperienceLibrary, StepRecord, StoredSnapshot, TrajectoryLog
from .experience import chunk_trajectory, reflect_and_abstract, summarize_trajectory, verbalize_chunk
from .hierarchy import attach_snapshots, build_hierarchy
from .mapping import OccupancyMap, extract_frontiers, integrate_all, island_mask
from .mocks import DemoGen
from .policy import (
    FrontierView,
    geodesic_to_label,
    hierarchical_select,
    listwise_select,
    pairwise_select,
    pointwise_select,
    scripted_oracle_select,
)
from .retrieval import HttpEmbedder, MockEmbedder, build_working_memory, recall
from .sim import GridMap, Sensing, bearing, bfs_distances, load_map_file, look_around, step_to

log = logging.getLogger(__name__)

POLICIES = ("hierarchical", "listwise", "pointwise", "pairwise", "oracle")


@dataclass
class RunConfig:
    questions: str = ""  # path to questions.json; map paths resolve relative to it
    policy: str = "hierarchical"
    replay: bool = True
    working_memory: bool = True
    K: int = 5
    m: int = 3
    k_rrf: float = 60.0
    tau_min: int = 2
    tau_max: int = 8
    tau_size0: int = 3
    tau_size1: int = 2
    max_steps: int = 50
    seed: int = 0
    chunk_len: int = 10
    textgen: str = ""  # http(s) URL, mock script path, or empty for the demo mock
    embedder: str = ""
    judge: str = ""
    library: str = ""

    def validate(self) -> "RunConfig":
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.K < 1 or self.m < 1 or self.k_rrf <= 0 or self.chunk_len < 1:
            raise ConfigError("K, m, chunk_len must be >= 1 and k_rrf > 0")
        if not 1 <= self.tau_min <= self.tau_max <= 9:
            raise ConfigError("need 1 <= tau_min <= tau_max <= 9")
        if self.tau_size0 < 1 or self.tau_size1 < 1:
            raise ConfigError("cluster size thresholds must be >= 1")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, value, type(fields[key].default))
        return cls(**kwargs).validate()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """JSON object, or ``key=value`` lines (``#`` starts a comment)."""
        stripped = text.strip()
        if stripped.startswith("{"):
            try:
                return cls.from_dict(json.loads(stripped))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON config: {exc}") from exc
        return cls.from_dict(parse_assignments(stripped.splitlines()))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def parse_assignments(lines: Sequence[str]) -> dict:
    out = {}
    for ln in lines:
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ConfigError(f"expected key=value, got {ln!r}")
        k, v = ln.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _coerce(key: str, value, kind: type):
    if isinstance(value, str) and kind is not str:
        if kind is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        try:
            return kind(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from exc
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Backends


def make_textgen(backend: str):
    if not backend:
        return DemoGen()
    if backend.startswith(("http://", "https://")):
        return HttpTextGen(backend)
    try:
        return MockGen.from_file(backend)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load mock script {backend}: {exc}") from exc


def make_embedder(backend: str):
    if not backend or backend == "mock":
        return MockEmbedder()
    if backend.startswith(("http://", "https://")):
        return HttpEmbedder(backend)
    raise ConfigError(f"embedder must be a URL or 'mock', got {backend!r}")


# ---------------------------------------------------------------------------
# Corpus loading


@dataclass
class Episode:
    grid: GridMap
    question: Question


def load_questions(path) -> list:
    """Read ``questions.json`` and the map each entry points to."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read questions {path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for d in data:
        q = Question.from_json(d)
        grid = load_map_file(os.path.join(base, q.map))
        if not grid.cells_labeled(q.target_label):
            raise ConfigError(f"{q.question_id}: label {q.target_label!r} not in map {q.map}")
        out.append(Episode(grid, q))
    return out


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class EpisodeLog:
    config: dict
    question: dict
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    recall_traces: list = field(default_factory=list)
    decisions: int = 0
    result: Optional[EpisodeResult] = None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "question": self.question,
            "steps": self.steps,
            "events": self.events,
            "recall_traces": self.recall_traces,
            "decisions": self.decisions,
            "result": self.result.to_json() if self.result else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)


@dataclass
class EpisodeRun:
    """Full in-memory outcome: the serialisable log plus the trajectory for reflection."""

    log: EpisodeLog
    trajectory: TrajectoryLog


def goal_cells(known_free, labelled: Sequence) -> set:
    """A labelled cell and its 4-neighbours, restricted to free cells."""
    free = known_free
    h, w = free.shape
    out = set()
    for x, y in labelled:
        for dx, dy in ((0, 0), (0, -1), (-1, 0), (1, 0), (0, 1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and free[ny, nx]:
                out.add((nx, ny))
    return out


def shortest_to_goal(grid: GridMap, start, label: str) -> Optional[int]:
    """Ground-truth geodesic distance from ``start`` to the nearest goal cell."""
    goals = goal_cells(grid.free_mask, grid.cells_labeled(label))
    dist = bfs_distances(grid.free_mask, [start])
    reach = [dist[g] for g in goals if g in dist]
    return min(reach) if reach else None


def _deg(theta: float) -> int:
    return round(math.degrees(theta))


def run_episode(
    config: RunConfig,
    grid: GridMap,
    question: Question,
    library: Optional[ExperienceLibrary],
    client=None,
    embedder=None,
    sensing: Sensing = Sensing(),
) -> EpisodeRun:
    """One question, one fresh environment; returns the log and the raw trajectory."""
    config.validate()
    client = client if client is not None else make_textgen(config.textgen)
    embedder = embedder if embedder is not None else make_embedder(config.embedder)
    label = question.target_label
    elog = EpisodeLog(config.to_json(), question.to_json())
    traj = TrajectoryLog(question.text, [])

    pose = grid.default_start()
    start = pose.cell
    G = shortest_to_goal(grid, start, label)
    if G is None:
        # still explore: the agent cannot know, and the episode ends on an empty frontier set
        elog.events.append(f"fault: target {label!r} unreachable from start {start}")

    oracle_dist = geodesic_to_label(grid, label) if config.policy == "oracle" else None
    occ = integrate_all(OccupancyMap.empty(grid.shape), look_around(grid, start, sensing))
    P = 0
    recent: list = []
    visited: set = set()
    answer = None

    while True:
        # every recorded step, the final approach included, spends one unit of the budget
        if len(traj.steps) >= config.max_steps:
            elog.events.append("terminated: step budget exhausted")
            break
        island = island_mask(occ, pose.cell)
        known_goals = goal_cells(island, [c for c, lab in occ.labels.items() if lab == label])
        if known_goals:
            dist = bfs_distances(island, [pose.cell])
            goal = min(known_goals, key=lambda c: (dist[c], c[1], c[0]))
            out = step_to(grid, pose, goal, island, sensing)
            occ = integrate_all(occ, out.observations)
            pose = out.pose
            P += out.steps
            dx, dy = pose.cell[0] - start[0], pose.cell[1] - start[1]
            text = f"approach: target '{label}' reached at offset ({dx}, {dy}) from start after {out.steps} cells"
            rec = StepRecord(len(traj.steps) + 1, text, bearing(start, pose.cell) if (dx or dy) else None, pose.cell, None, "approach", out.steps)
            traj.steps.append(rec)
            elog.steps.append(_step_json(rec))
            answer = f"The {label} is near cell ({pose.cell[0]}, {pose.cell[1]})."
            break
        frontiers = [f for f in extract_frontiers(occ, pose.cell, config.tau_min, config.tau_max) if f.cell not in visited]
        if not frontiers:
            elog.events.append("terminated: no frontiers left")
            break
        hier = build_hierarchy(frontiers, pose.cell, config.seed, config.tau_size0, config.tau_size1, pose.heading)
        attach_snapshots(hier, grid, occ, sensing)

        wm = ""
        if config.working_memory and config.policy != "oracle":
            wm = build_working_memory(recent, client)
        replay = None
        if config.replay and library is not None and len(library) and config.policy != "oracle":
            replay = recall([b.snapshot for b in hier.bvfs], question.text, library, embedder, config.m, config.K, config.k_rrf)
            elog.recall_traces.append(replay.trace())

        if config.policy == "oracle":
            sel = scripted_oracle_select(hier, grid, label, oracle_dist)
        elif config.policy == "hierarchical":
            sel = hierarchical_select(hier, question.text, wm, replay, client)
        else:
            views = [FrontierView(c.anchor, c.theta, c.snapshot) for b in hier.bvfs for c in b.children]
            fn = {"listwise": listwise_select, "pointwise": pointwise_select, "pairwise": pairwise_select}[config.policy]
            sel = fn(views, question.text, client, wm, replay)
        elog.decisions += 1
        elog.events.extend(f"step {elog.decisions}: {e}" for e in sel.events)

        out = step_to(grid, pose, sel.cell, island, sensing)
        pose = out.pose
        P += out.steps
        occ = integrate_all(occ, out.observations)
        if pose.cell == sel.cell:
            visited.add(sel.cell)
        occ = integrate_all(occ, look_around(grid, pose.cell, sensing))

        snap = sel.view.snapshot if sel.view is not None else None
        seen = sorted({lab for lab in occ.labels.values()})
        text = (
            f"step {elog.decisions}: chose {'-'.join(map(str, sel.index))} heading {_deg(sel.view.theta)}deg"
            f" toward ({sel.cell[0]}, {sel.cell[1]}); moved {out.steps} cells; labels known: {', '.join(seen) or 'none'}"
        )
        rec = StepRecord(len(traj.steps) + 1, text, sel.view.theta, sel.cell, snap, "explore", out.steps)
        traj.steps.append(rec)
        elog.steps.append(_step_json(rec))
        if snap is not None:
            recent.append(snap)

    valid = answer is not None
    traj.outcome = PASS if valid else FAIL
    traj.G, traj.P = G, P
    elog.result = EpisodeResult(
        question.question_id, G if G is not None else 0, P if valid else None, answer, valid, None, fallback_score(answer, label), question.category
    )
    return EpisodeRun(elog, traj)


def _step_json(rec: StepRecord) -> dict:
    return {
        "t": rec.t,
        "kind": rec.kind,
        "text": rec.text,
        "theta_rad": rec.theta,
        "cell": list(rec.cell) if rec.cell is not None else None,
        "moved": rec.moved,
        "snapshot": rec.snapshot.text_render if rec.snapshot is not None else None,
    }


def run_all(config: RunConfig, episodes: Sequence[Episode], library=None, client=None, embedder=None, judge=None) -> list:
    """Run every episode; with a judge, valid answers are graded as well."""
    client = client if client is not None else make_textgen(config.textgen)
    embedder = embedder if embedder is not None else make_embedder(config.embedder)
    logs = []
    for ep in episodes:
        run = run_episode(config, ep.grid, ep.question, library, client, embedder)
        if judge is not None:
            grade_log(run.log, ep.question, judge)
        logs.append(run.log)
    return logs


def grade_log(elog: EpisodeLog, question: Question, judge) -> None:
    r = elog.result
    if r.valid and r.answer:
        r.s = grade_answer(question.text, question.ground_truth, r.answer, question.paraphrases, judge)
        if r.s is None:
            elog.events.append("judge: ungraded after retry")


# ---------------------------------------------------------------------------
# Experience collection


def build_experience_set(
    config: RunConfig,
    episodes: Sequence[Episode],
    client=None,
    embedder=None,
    library: Optional[ExperienceLibrary] = None,
) -> ExperienceLibrary:
    """Collect trajectories without replay and distil each into a library entry.

    Generation failures drop that trajectory with a warning. ``library`` is
    the destination and is never used for recall during collection.
    """
    cfg = config.replace(replay=False)
    client = client if client is not None else make_textgen(config.textgen)
    out = library if library is not None else ExperienceLibrary()
    for ep in episodes:
        run = run_episode(cfg, ep.grid, ep.question, None, client, embedder)
        traj = run.trajectory
        if not traj.steps:
            log.warning("%s: empty trajectory, skipped", ep.question.question_id)
            continue
        try:
            captions = [verbalize_chunk(ch, traj.question, traj.outcome, client) for ch in chunk_trajectory(traj, cfg.chunk_len)]
            summary = summarize_trajectory(captions, client)
            abstraction = reflect_and_abstract(summary, traj.question, traj.outcome, client)
        except (ClientError, MalformedReflection, ValueError) as exc:
            log.warning("%s: reflection failed, trajectory skipped: %s", ep.question.question_id, exc)
            continue
        snaps = [StoredSnapshot.from_snapshot(s.t, s.snapshot) for s in traj.steps if s.snapshot is not None]
        out.add(traj.question, traj.outcome, abstraction, snaps)
    return out


# ---------------------------------------------------------------------------
# Ablations

ABLATIONS = {
    "full": {},
    "-replay": {"replay": False},
    "-memory": {"working_memory": False},
    "-hierarchy": {"policy": "listwise"},
}

ROW_TITLES = {
    "full": "Full model",
    "-replay": "w/o Retrospective Experience Replay",
    "-memory": "w/o Working Memory",
    "-hierarchy": "w/o Hierarchical Frontier Selection",
}


@dataclass
class AblationReport:
    rows: dict  # toggle name -> MetricsReport

    def table(self) -> str:
        head = f"{'Setting':<40} {'Succ.':>7} {'SPL':>7} {'LLM-Match':>10} {'LLMxSPL':>8}"
        lines = [head, "-" * len(head)]
        for name, rep in self.rows.items():
            lm = "-" if rep.llm_match is None else f"{rep.llm_match:.1f}"
            lines.append(
                f"{ROW_TITLES.get(name, name):<40} {rep.success_rate:>7.1f} {rep.spl:>7.1f} {lm:>10} {rep.llm_match_x_spl:>8.1f}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {name: rep.to_json()["overall"] for name, rep in self.rows.items()}


def toggle_config(config: RunConfig, toggle: str) -> RunConfig:
    if toggle not in ABLATIONS:
        raise ConfigError(f"unknown toggle {toggle!r}; choose from {sorted(ABLATIONS)}")
    changes = dict(ABLATIONS[toggle])
    if changes.get("policy") == "listwise" and config.policy != "hierarchical":
        changes.pop("policy")
    return config.replace(**changes)


def ablate(
    config: RunConfig,
    toggles: Sequence[str],
    episodes: Sequence[Episode],
    library=None,
    client_factory=None,
    embedder=None,
    judge=None,
) -> AblationReport:
    """Same questions and seed under each toggle; ``client_factory`` gives a fresh backend per row."""
    if len(toggles) < 2:
        raise ConfigError("ablate needs at least two toggle settings")
    factory = client_factory or (lambda: make_textgen(config.textgen))
    rows = {}
    for t in toggles:
        cfg = toggle_config(config, t)
        logs = run_all(cfg, episodes, library, factory(), embedder, judge)
        rows[t] = build_report([lg.result for lg in logs])
    return AblationReport(rows)


def mean_item_spl(logs: Sequence[EpisodeLog]) -> float:
    return float(np.mean([item_spl(lg.result) for lg in logs])) if logs else 0.0

