"""Salient experience recall: scene and task similarity fused with reciprocal rank fusion."""

from __future__ import annotations

import hashlib
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from . import prompts
from .clients import DEFAULT_PARAMS, ClientError, GenParams, post_json
from .experience import ExperienceLibrary

log = logging.getLogger(__name__)

RRF_K = 60
# cosine similarities are rounded to this many decimals before ranking so that
# equal embeddings tie exactly and the id tie-break applies
SIM_DECIMALS = 12
DEFAULT_TOP_K = 5
DEFAULT_M = 3
MEMORY_WINDOW = 5

_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


class Embedder(Protocol):
    def embed_snapshot(self, snapshot) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


@lru_cache(maxsize=65536)
def _feature_vector(seed: int, dim: int, feature: str) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x00{feature}".encode("utf-8"), digest_size=8).digest()
    vec = np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(dim)
    vec.setflags(write=False)
    return vec


class MockEmbedder:
    """Feature-hashing embedder.

    Snapshots hash their label multiset, a 16-way quantised heading and the
    words of their text render (down-weighted); texts hash their lowercase
    words. Identical inputs give identical unit vectors; overlapping inputs
    give correlated ones.
    """

    def __init__(self, dim: int = 64, seed: int = 0, text_weight: float = 0.25):
        self.dim = dim
        self.seed = seed
        self.text_weight = text_weight

    def _combine(self, weighted: dict) -> np.ndarray:
        if not weighted:
            weighted = {"<empty>": 1.0}
        vec = np.zeros(self.dim)
        for feat in sorted(weighted):
            vec += weighted[feat] * _feature_vector(self.seed, self.dim, feat)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = np.array(_feature_vector(self.seed, self.dim, "<empty>"))
            norm = float(np.linalg.norm(vec))
        return vec / norm

    def embed_snapshot(self, snapshot) -> np.ndarray:
        feats: Counter = Counter()
        for lab in snapshot.labels:
            feats[f"label:{lab}"] += 1.0
        bin_ = int(round(snapshot.theta / (math.pi / 8))) % 16
        feats[f"theta:{bin_}"] += 1.0
        for w in _WORD_RE.findall(snapshot.text_render.lower()):
            feats[f"word:{w}"] += self.text_weight
        return self._combine(dict(feats))

    def embed_text(self, text: str) -> np.ndarray:
        feats: Counter = Counter(f"word:{w}" for w in _WORD_RE.findall(text.lower()))
        return self._combine({k: float(v) for k, v in feats.items()})


class HttpEmbedder:
    """Remote embedder: POST ``{"kind", "payload"}`` -> ``{"vector": [...]}``."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def _post(self, kind: str, payload) -> np.ndarray:
        body = post_json(self.url, {"kind": kind, "payload": payload}, self.timeout)
        vec = np.asarray(body.get("vector") if isinstance(body, dict) else None, dtype=float)
        if vec.ndim != 1 or vec.size == 0:
            raise ClientError("embedding response lacks a vector")
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm else vec

    def embed_snapshot(self, snapshot) -> np.ndarray:
        payload = {"theta_rad": float(snapshot.theta), "labels": list(snapshot.labels), "text_render": snapshot.text_render}
        return self._post("snapshot", payload)

    def embed_text(self, text: str) -> np.ndarray:
        return self._post("text", text)


@dataclass(frozen=True)
class RankedList:
    items: tuple  # ((trajectory_id, similarity), ...), best first

    def ids(self) -> list:
        return [i for i, _ in self.items]

    def rank_of(self) -> dict:
        return {tid: r for r, (tid, _) in enumerate(self.items, 1)}

    def __len__(self):
        return len(self.items)


def _rank(best: dict) -> RankedList:
    return RankedList(tuple(sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))))


def scene_rank(candidates: Sequence, library: ExperienceLibrary, embedder, m: int = DEFAULT_M) -> RankedList:
    """Per candidate, take the top-``m`` stored snapshots by cosine; dedup ids keeping the best score."""
    if m < 1:
        raise ValueError("m must be >= 1")
    stored = [(e.trajectory_id, s) for e in library for s in e.snapshots]
    if not stored or not candidates:
        return RankedList(())
    mat = np.stack([embedder.embed_snapshot(s) for _, s in stored])
    best: dict = {}
    for cand in candidates:
        q = embedder.embed_snapshot(cand)
        if q.shape[0] != mat.shape[1]:
            raise ValueError(f"embedding dimension mismatch: {q.shape[0]} vs {mat.shape[1]}")
        sims = np.round(mat @ q, SIM_DECIMALS)
        order = sorted(range(len(stored)), key=lambda i: (-sims[i], stored[i][0], stored[i][1].step))
        for i in order[:m]:
            tid = stored[i][0]
            sim = float(sims[i])
            if sim > best.get(tid, -math.inf):
                best[tid] = sim
    return _rank(best)


def task_rank(question: str, library: ExperienceLibrary, embedder) -> RankedList:
    if not len(library):
        return RankedList(())
    q = embedder.embed_text(question)
    best: dict = {}
    for e in library:
        sim = round(float(embedder.embed_text(e.question) @ q), SIM_DECIMALS)
        if sim > best.get(e.trajectory_id, -math.inf):
            best[e.trajectory_id] = sim
    return _rank(best)


def rrf_fuse(list_a: RankedList, list_b: RankedList, k: float = RRF_K) -> list:
    """Sum of ``1 / (k + rank)`` over the lists containing each id (1-based ranks).

    An id missing from a list gets no term from it. Result is sorted by score
    descending, ties by id.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    scores: dict = {}
    for ranked in (list_a, list_b):
        for rank, tid in enumerate(ranked.ids(), 1):
            scores[tid] = scores.get(tid, 0.0) + 1.0 / (k + rank)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True)
class ReplayEntry:
    trajectory_id: str
    fused_score: float
    abstraction: object


@dataclass(frozen=True)
class ReplayContext:
    entries: tuple = ()

    def __bool__(self):
        return bool(self.entries)

    def trace(self) -> list:
        return [[e.trajectory_id, e.fused_score] for e in self.entries]


def recall(
    candidates: Sequence,
    question: str,
    library: ExperienceLibrary,
    embedder,
    m: int = DEFAULT_M,
    K: int = DEFAULT_TOP_K,
    k_rrf: float = RRF_K,
) -> ReplayContext:
    if K < 1:
        raise ValueError("K must be >= 1")
    if not len(library):
        return ReplayContext(())
    fused = rrf_fuse(scene_rank(candidates, library, embedder, m), task_rank(question, library, embedder), k_rrf)
    return ReplayContext(tuple(ReplayEntry(tid, score, library.get(tid).abstraction) for tid, score in fused[:K]))


def build_working_memory(recent: Sequence, client, params: GenParams = DEFAULT_PARAMS) -> str:
    """Condense the last five chosen snapshots into a paragraph; never raises on backend errors."""
    window = list(recent)[-MEMORY_WINDOW:]
    if not window:
        return ""
    try:
        return client.generate(prompts.working_memory_prompt([s.text_render for s in window]), params).strip()
    except ClientError as exc:
        log.warning("working memory generation failed: %s", exc)
        return ""
