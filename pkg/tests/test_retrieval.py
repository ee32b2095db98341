import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskexplore.clients import MockGen
from deskexplore.experience import ExperienceLibrary, StoredSnapshot
from deskexplore.hierarchy import Snapshot
from deskexplore.retrieval import (
    SIM_DECIMALS,
    MockEmbedder,
    RankedList,
    build_working_memory,
    recall,
    rrf_fuse,
    scene_rank,
    task_rank,
)

from conftest import random_abstraction, random_library


def _ranked(ids):
    return RankedList(tuple((tid, 1.0 - 0.01 * i) for i, tid in enumerate(ids)))


# ---------------------------------------------------------------------------
# fusion


def test_rrf_examples():
    fused = dict(rrf_fuse(_ranked(["a", "x", "b"]), _ranked(["a", "y", "c"])))
    assert fused["a"] == pytest.approx(2 / 61, abs=1e-12)
    fused = dict(rrf_fuse(_ranked(["a", "b"]), _ranked(["c", "d", "a"])))
    assert fused["a"] == pytest.approx(1 / 61 + 1 / 63, abs=1e-12)
    fused = dict(rrf_fuse(_ranked(["z", "only_a"]), _ranked(["z"])))
    assert fused["only_a"] == pytest.approx(1 / 62, abs=1e-12)


def test_rrf_ties_by_id_and_k_validation():
    fused = rrf_fuse(_ranked(["b"]), _ranked(["a"]))
    assert [i for i, _ in fused] == ["a", "b"]
    with pytest.raises(ValueError):
        rrf_fuse(_ranked([]), _ranked([]), k=0)


_ids = st.lists(st.sampled_from([f"t{i}" for i in range(12)]), unique=True, max_size=12)


@given(_ids, _ids)
def test_rrf_independent_of_argument_order(a, b):
    assert rrf_fuse(_ranked(a), _ranked(b)) == rrf_fuse(_ranked(b), _ranked(a))


@given(_ids.filter(lambda x: len(x) >= 2), _ids, st.data())
def test_rrf_promotion_never_lowers_score(a, b, data):
    i = data.draw(st.integers(1, len(a) - 1))
    tid = a[i]
    promoted = list(a)
    promoted[i - 1], promoted[i] = promoted[i], promoted[i - 1]
    before = dict(rrf_fuse(_ranked(a), _ranked(b)))[tid]
    after = dict(rrf_fuse(_ranked(promoted), _ranked(b)))[tid]
    assert after >= before


# ---------------------------------------------------------------------------
# ranking oracles


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(sum(x * x for x in v))


def _cos(u, v):
    return round(math.fsum(float(a) * float(b) for a, b in zip(u, v)), SIM_DECIMALS)


def brute_scene_rank(cands, lib, emb, m):
    best = {}
    for c in cands:
        q = _unit(emb.embed_snapshot(c))
        scored = []
        for e in lib:
            for s in e.snapshots:
                scored.append((-_cos(q, _unit(emb.embed_snapshot(s))), e.trajectory_id, s.step))
        scored.sort()
        for neg, tid, _ in scored[:m]:
            best[tid] = max(best.get(tid, -2.0), -neg)
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def brute_task_rank(question, lib, emb):
    q = _unit(emb.embed_text(question))
    best = {}
    for e in lib:
        best[e.trajectory_id] = max(best.get(e.trajectory_id, -2.0), _cos(q, _unit(emb.embed_text(e.question))))
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def _same(got: RankedList, want):
    assert [i for i, _ in got.items] == [i for i, _ in want]
    for (_, a), (_, b) in zip(got.items, want):
        assert a == pytest.approx(b, abs=1e-9)


def _query_snapshots(seed, n=3):
    rng = np.random.default_rng(seed + 1000)
    out = []
    for k in range(n):
        labels = tuple(sorted(rng.choice(["sofa", "lamp", "desk", "冰箱"], size=int(rng.integers(0, 3)))))
        out.append(Snapshot(float(rng.uniform(-3, 3)), None, labels, "view " + " ".join(labels)))
    return out


@pytest.mark.parametrize("seed", range(100))
def test_scene_and_task_rank_match_brute_force(seed):
    lib = random_library(seed, 20)
    emb = MockEmbedder()
    cands = _query_snapshots(seed)
    _same(scene_rank(cands, lib, emb, 3), brute_scene_rank(cands, lib, emb, 3))
    _same(task_rank("Where is the lamp?", lib, emb), brute_task_rank("Where is the lamp?", lib, emb))


def test_empty_library_ranks_empty():
    emb = MockEmbedder()
    assert len(scene_rank(_query_snapshots(0), ExperienceLibrary(), emb)) == 0
    assert len(task_rank("q", ExperienceLibrary(), emb)) == 0
    assert not recall(_query_snapshots(0), "q", ExperienceLibrary(), emb)


def test_identical_snapshot_and_question_rank_first():
    lib = random_library(5, 10)
    emb = MockEmbedder()
    target = lib.entries[4]
    snap = target.snapshots[0]
    r = scene_rank([snap], lib, emb, 3)
    assert r.items[0][1] == pytest.approx(1.0)
    assert target.trajectory_id in [i for i, s in r.items if s == pytest.approx(1.0)]
    t = task_rank(target.question, lib, emb)
    assert t.items[0][1] == pytest.approx(1.0)


def planted_library(seed):
    lib = random_library(seed, 20)
    snap = StoredSnapshot(0, 2.25, ("planted-object", "widget"), "view planted-object widget unique")
    question = "Where did I leave the planted-object widget?"
    lib.add(question, "PASS", random_abstraction(np.random.default_rng(seed)), [snap], trajectory_id="zz-planted")
    return lib, snap, question


def test_planted_duplicate_recalls_first_with_2_over_61():
    lib, snap, question = planted_library(7)
    ctx = recall([snap], question, lib, MockEmbedder(), m=3, K=5)
    assert ctx.entries[0].trajectory_id == "zz-planted"
    assert abs(ctx.entries[0].fused_score - 2 / 61) < 1e-12


def test_recall_clamps_to_library_size():
    lib = random_library(2, 3)
    ctx = recall(_query_snapshots(2), "Where is the sofa?", lib, MockEmbedder(), K=5)
    assert len(ctx.entries) == 3
    scores = [e.fused_score for e in ctx.entries]
    assert scores == sorted(scores, reverse=True)


@pytest.mark.parametrize("seed", range(5))
def test_recall_topk_prefix(seed):
    lib = random_library(seed, 12)
    emb = MockEmbedder()
    cands = _query_snapshots(seed)
    prev = None
    for K in range(1, 10):
        ctx = recall(cands, "Where is the desk?", lib, emb, K=K)
        ids = [e.trajectory_id for e in ctx.entries]
        if prev is not None:
            assert ids[: len(prev)] == prev
        prev = ids


def test_recall_rejects_bad_k():
    with pytest.raises(ValueError):
        recall([], "q", random_library(0, 1), MockEmbedder(), K=0)


def test_mock_embedder_unit_and_deterministic():
    emb = MockEmbedder()
    s = _query_snapshots(1)[0]
    v = emb.embed_snapshot(s)
    assert v.shape == (64,) and abs(np.linalg.norm(v) - 1) < 1e-6
    assert np.array_equal(v, MockEmbedder().embed_snapshot(s))
    assert abs(np.linalg.norm(emb.embed_text("")) - 1) < 1e-6


def test_scene_rank_dimension_mismatch():
    lib = random_library(0, 2)

    class Odd(MockEmbedder):
        def embed_snapshot(self, snapshot):
            if isinstance(snapshot, Snapshot):
                return np.ones(3) / math.sqrt(3)
            return super().embed_snapshot(snapshot)

    with pytest.raises(ValueError):
        scene_rank(_query_snapshots(0), lib, Odd())


# ---------------------------------------------------------------------------
# working memory


def _snaps(n):
    return [Snapshot(0.0, None, (), f"snapshot number {i}") for i in range(n)]


def test_working_memory_empty():
    client = MockGen()
    assert build_working_memory([], client) == "" and client.calls == []


def test_working_memory_uses_last_five():
    client = MockGen(default="visited the hall")
    assert build_working_memory(_snaps(7), client) == "visited the hall"
    p = client.calls[0]
    assert "snapshot number 0" not in p and "snapshot number 1" not in p
    for i in range(2, 7):
        assert f"snapshot number {i}" in p


def test_working_memory_client_failure_is_silent(caplog):
    assert build_working_memory(_snaps(2), MockGen()) == ""
    assert any("working memory" in r.message for r in caplog.records)
