"""Success rate, SPL, LLM-Match and LLM-Match x SPL, with judge grading and a rule-based fallback score."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from . import prompts
from .clients import DEFAULT_PARAMS, ClientError, GenParams
from .errors import Undefined

log = logging.getLogger(__name__)


@dataclass
class EpisodeResult:
    question_id: str
    G: int
    P: Optional[int] = None
    answer: Optional[str] = None
    valid: bool = False
    s: Optional[int] = None
    b: int = 1
    category: str = ""

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "EpisodeResult":
        return cls(**{k: d.get(k) for k in ("question_id", "G", "P", "answer", "valid", "s", "b", "category")})


def spl(G: float, P: Optional[float]) -> float:
    """``G / max(G, P)``; 0 without an answer; 1 when both are 0."""
    if G < 0 or (P is not None and P < 0):
        raise ValueError("path lengths must be non-negative")
    if P is None or math.isinf(P):
        return 0.0
    denom = max(G, P)
    if denom == 0:
        return 1.0
    return G / denom


def map_score(s: float) -> float:
    if not 1 <= s <= 5:
        raise ValueError(f"score {s} outside [1, 5]")
    return 100.0 * (s - 1) / 4.0


def item_spl(r: EpisodeResult) -> float:
    return spl(r.G, r.P) if r.valid else 0.0


def success_rate(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise ValueError("no results")
    return 100.0 * sum(1 for r in results if r.valid) / len(results)


def mean_spl(results: Sequence[EpisodeResult]) -> float:
    if not results:
        raise ValueError("no results")
    return 100.0 * sum(item_spl(r) for r in results) / len(results)


def llm_match(results: Sequence[EpisodeResult]) -> float:
    """Mean mapped judge score over valid, judge-graded items."""
    eligible = [r for r in results if r.valid and r.s is not None]
    if not eligible:
        raise Undefined("no valid graded answers")
    return sum(map_score(r.s) for r in eligible) / len(eligible)


def llm_match_x_spl(results: Sequence[EpisodeResult]) -> float:
    """Average over all items of mapped (judge or fallback) score times SPL."""
    if not results:
        raise ValueError("no results")
    total = 0.0
    for r in results:
        s_hat = r.s if r.s is not None else r.b
        total += map_score(s_hat) * item_spl(r)
    return total / len(results)


def fallback_score(answer: Optional[str], target_label: str = "") -> int:
    """Conservative format-check score; never 5 without a judge."""
    if answer is None or not answer.strip():
        return 1
    if target_label:
        tokens = set(re.findall(r"\w+", answer.lower()))
        wanted = re.findall(r"\w+", target_label.lower())
        if wanted and all(t in tokens for t in wanted):
            return 4
    return 2


def grade_answer(question: str, ground_truth: str, prediction: str, paraphrases: Sequence[str], judge, params: GenParams = DEFAULT_PARAMS) -> Optional[int]:
    """Judge score in 1..5, retrying once on an unparseable reply; ``None`` if still ungraded."""
    prompt = prompts.grading_prompt(question, ground_truth, prediction, paraphrases)
    for _ in range(2):
        try:
            reply = judge.generate(prompt, params)
        except ClientError as exc:
            log.warning("judge failed: %s", exc)
            continue
        found = re.findall(r"\b([1-5])\b", reply)
        if found:
            return int(found[-1])
    return None


@dataclass
class MetricsReport:
    success_rate: float
    spl: float
    llm_match: Optional[float]
    llm_match_x_spl: float
    per_category: dict = field(default_factory=dict)
    items: list = field(default_factory=list)

    def overall(self) -> dict:
        return {"success": self.success_rate, "spl": self.spl, "llm_match": self.llm_match, "llm_match_x_spl": self.llm_match_x_spl}

    def to_json(self) -> dict:
        return {"overall": self.overall(), "per_category": self.per_category, "items": [r.to_json() for r in self.items]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _metrics(results: Sequence[EpisodeResult]) -> dict:
    try:
        lm = llm_match(results)
    except Undefined:
        lm = None
    return {
        "success": success_rate(results),
        "spl": mean_spl(results),
        "llm_match": lm,
        "llm_match_x_spl": llm_match_x_spl(results),
    }


def build_report(results: Sequence[EpisodeResult]) -> MetricsReport:
    results = list(results)
    overall = _metrics(results)
    cats: dict = {}
    for r in results:
        cats.setdefault(r.category or "uncategorised", []).append(r)
    per_category = {c: _metrics(rs) for c, rs in sorted(cats.items())}
    return MetricsReport(overall["success"], overall["spl"], overall["llm_match"], overall["llm_match_x_spl"], per_category, results)
