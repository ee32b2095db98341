import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskexplore.errors import EmptyFrontierSet, ZeroResultant
from deskexplore.hierarchy import (
    Bvf,
    build_bvf,
    build_cvf,
    build_hierarchy,
    circular_mean,
    dump_hierarchy,
    kmeans_points,
    render_snapshot,
    representative_cell,
)
from deskexplore.sim import Sensing, bearing, wrap_angle

from conftest import grid_from_rows

D = math.radians


# ---------------------------------------------------------------------------
# k-means


def test_kmeans_two_points_two_clusters():
    labels, cents = kmeans_points([[0, 0], [5, 5]], 2, seed=0)
    assert sorted(labels.tolist()) == [0, 1]
    assert sorted(map(tuple, cents.tolist())) == [(0.0, 0.0), (5.0, 5.0)]


def test_kmeans_identical_points():
    labels, cents = kmeans_points([[2, 3]] * 3, 1)
    assert labels.tolist() == [0, 0, 0]
    assert cents.tolist() == [[2.0, 3.0]]


def test_kmeans_rejects_bad_k():
    with pytest.raises(ValueError):
        kmeans_points([[0, 0]], 2)
    with pytest.raises(ValueError):
        kmeans_points([[0, 0]], 0)


@pytest.mark.parametrize("seed", range(20))
def test_kmeans_points_nearest_their_centroid(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 20, size=(30, 2))
    labels, cents = kmeans_points(pts, 3, seed)
    for p, lab in zip(pts, labels):
        d = ((cents - p) ** 2).sum(axis=1)
        assert d[lab] <= d.min() + 1e-12
    # centroids are the member means (Lloyd fixed point)
    for c in range(3):
        if (labels == c).any():
            assert np.allclose(cents[c], pts[labels == c].mean(axis=0))


def test_kmeans_deterministic():
    pts = np.random.default_rng(1).uniform(size=(40, 2))
    a = kmeans_points(pts, 3, 7)
    b = kmeans_points(pts, 3, 7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# ---------------------------------------------------------------------------
# circular mean


def test_circular_mean_examples():
    assert circular_mean([D(90)]) == pytest.approx(D(90))
    assert circular_mean([D(350), D(10)]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ZeroResultant):
        circular_mean([0.0, math.pi])


@settings(max_examples=100)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12), st.floats(-math.pi, math.pi))
def test_circular_mean_rotation_equivariant(angles, shift):
    try:
        m = circular_mean(angles)
    except ZeroResultant:
        return
    r = math.hypot(np.sin(angles).mean(), np.cos(angles).mean())
    if r < 1e-6:
        return
    assert -math.pi < m <= math.pi
    m2 = circular_mean([a + shift for a in angles])
    assert abs(wrap_angle(m2 - m - shift)) < 1e-6


# ---------------------------------------------------------------------------
# representative cell


def test_representative_exact_bearing():
    assert representative_cell([(5, 0)], (0, 0), 0.0) == (5, 0)


def test_representative_prefers_closer_angle():
    agent = (0, 0)
    cells = []
    for deg in (5, -5, 20):
        cells.append((round(100 * math.cos(D(deg))), round(100 * math.sin(D(deg)))))
    got = representative_cell(cells, agent, 0.0)
    assert got in cells[:2]


def test_representative_wraps_around():
    agent = (0, 0)
    a = (round(100 * math.cos(D(-179))), round(100 * math.sin(D(-179))))
    b = (round(100 * math.cos(D(170))), round(100 * math.sin(D(170))))
    assert representative_cell([b, a], agent, D(179)) == a


def test_representative_ties_by_distance_then_row_major():
    agent = (5, 5)
    assert representative_cell([(9, 5), (7, 5)], agent, 0.0) == (7, 5)
    # equal angle and distance: smaller y first
    assert representative_cell([(5, 8), (5, 2)], agent, D(0)) == (5, 2)


def test_representative_empty():
    with pytest.raises(EmptyFrontierSet):
        representative_cell([], (0, 0), 0.0)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=25, unique=True), st.floats(-math.pi, math.pi))
def test_representative_matches_brute_force(cells, theta):
    agent = (10, 10)
    cells = [c for c in cells if c != agent] or [(0, 0)]
    got = representative_cell(cells, agent, theta)
    assert got in cells
    best = min(abs(wrap_angle(math.atan2(c[1] - 10, c[0] - 10) - theta)) for c in cells)
    assert abs(wrap_angle(bearing(agent, got) - theta)) <= best + 1e-9


# ---------------------------------------------------------------------------
# broad and close-up directions


def _blob(cx, cy, n=10):
    return [(cx + i % 5, cy + i // 5) for i in range(n)]


def test_bvf_two_frontiers_uses_two_uniform_bins():
    agent = (10, 10)
    bvfs = build_bvf([(14, 10), (6, 10)], agent, seed=0)
    assert len(bvfs) == 2 and all(b.fallback for b in bvfs)
    assert sorted(round(math.degrees(b.theta)) for b in bvfs) == [0, 180]
    assert sorted(len(b.members) for b in bvfs) == [1, 1]


def test_bvf_all_clusters_pruned_falls_back():
    agent = (10, 10)
    cells = [(15, 10), (5, 10), (10, 4)]
    bvfs = build_bvf(cells, agent, tau_size0=3)
    assert bvfs and all(b.fallback for b in bvfs)
    assert sorted(c for b in bvfs for c in b.members) == sorted(cells)


def test_bvf_empty():
    assert build_bvf([], (0, 0)) == []


def test_bvf_three_blobs_point_at_their_centroids():
    agent = (20, 20)
    blobs = [_blob(32, 19), _blob(8, 6), _blob(17, 33)]
    bvfs = build_bvf([c for b in blobs for c in b], agent, seed=0)
    assert len(bvfs) == 3
    for blob in blobs:
        cx = sum(c[0] for c in blob) / len(blob)
        cy = sum(c[1] for c in blob) / len(blob)
        want = math.atan2(cy - agent[1], cx - agent[0])
        assert min(abs(wrap_angle(b.theta - want)) for b in bvfs) < D(5)


def test_cvf_two_members_single_child():
    b = Bvf(0, 0.3, ((5, 1), (5, 2)))
    kids = build_cvf(b, (0, 0))
    assert len(kids) == 1 and kids[0].theta == 0.3 and kids[0].members == b.members


def test_cvf_three_lobes():
    agent = (0, 0)
    members = []
    for deg in (-40, 0, 40):
        for r in (6, 8, 10):
            members.append((round(r * math.cos(D(deg))), round(r * math.sin(D(deg)))))
    kids = build_cvf(Bvf(0, 0.0, tuple(members)), agent, seed=0)
    assert len(kids) == 3
    assert sorted(len(k.members) for k in kids) == [3, 3, 3]


def test_cvf_all_subclusters_pruned():
    agent = (0, 0)
    members = ((10, 0), (0, 10), (-10, 0))
    parent = Bvf(2, 1.0, members)
    kids = build_cvf(parent, agent, tau_size1=2)
    assert len(kids) == 1 and kids[0].theta == 1.0 and kids[0].members == members and kids[0].parent == 2


@settings(max_examples=80)
@given(
    st.lists(st.tuples(st.integers(0, 24), st.integers(0, 24)), min_size=1, max_size=60, unique=True),
    st.integers(0, 50),
    st.integers(1, 5),
    st.integers(1, 4),
)
def test_hierarchy_shape_and_containment(cells, seed, t0, t1):
    agent = (12, 12)
    cells = [c for c in cells if c != agent]
    if not cells:
        return
    h = build_hierarchy(cells, agent, seed, t0, t1)
    assert 1 <= len(h.bvfs) <= 3
    fs = set(cells)
    kept = set()
    for b in h.bvfs:
        assert 1 <= len(b.children) <= 3
        assert b.anchor in fs
        assert set(b.members) <= fs
        kept |= set(b.members)
        for c in b.children:
            assert c.parent == b.b
            assert set(c.members) <= set(b.members)
            assert c.anchor in fs
            assert c.anchor == representative_cell(cells, agent, c.theta)
    # coverage: the dropped cells are exactly the ones outside every kept BVF
    assert kept | set(h.dropped) == fs and not kept & set(h.dropped)
    if not any(b.fallback for b in h.bvfs):
        for b in h.bvfs:
            assert len(b.members) >= t0
    h2 = build_hierarchy(list(reversed(cells)), agent, seed, t0, t1)
    assert dump_hierarchy(h) == dump_hierarchy(h2)


# ---------------------------------------------------------------------------
# snapshots and dump


def test_snapshot_sees_label_ahead():
    g = grid_from_rows(["#######", "#.....#", "#######"], labels={(4, 1): "sofa"})
    snap = render_snapshot(g, None, (1, 1), 0.0)
    assert "sofa" in snap.labels
    assert "sofa (3 cells)" in snap.text_render


def test_snapshot_facing_wall():
    g = grid_from_rows(["####", "#..#", "####"], labels={(2, 1): "lamp"})
    snap = render_snapshot(g, None, (1, 1), math.pi, Sensing(fov_rad=D(60)))
    assert snap.depth == 1
    assert snap.labels == ()


def test_snapshot_deterministic(open_room):
    a = render_snapshot(open_room, None, (3, 3), 0.7)
    b = render_snapshot(open_room, None, (3, 3), 0.7)
    assert a.text_render == b.text_render


def test_dump_hierarchy_format():
    agent = (20, 20)
    h = build_hierarchy(_blob(32, 19) + _blob(8, 6), agent)
    lines = dump_hierarchy(h).splitlines()
    assert lines[0].startswith("BVF 0 ")
    for ln in lines:
        parts = ln.split()
        if parts[0] == "BVF":
            assert len(parts) == 4
        else:
            assert parts[0] == "CVF" and len(parts) == 7
            float(parts[3])
            int(parts[5]), int(parts[6])
