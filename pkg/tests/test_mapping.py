import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskexplore.errors import AgentNotFree, ShapeMismatch
from deskexplore.mapping import (
    EDGE_TAU_MAX,
    EDGE_TAU_MIN,
    OccupancyMap,
    dump_layers,
    extract_frontiers,
    frontier_score,
    integrate_all,
    integrate_observation,
    reachable_island,
)
from deskexplore.sim import AgentPose, GridMap, cast_rays, look_around

from conftest import grid_from_rows, random_walls


def _obs(grid, cell, heading=0.0, fov=2 * math.pi, r=17):
    return cast_rays(grid, AgentPose(cell, heading), fov, r)


def test_integrate_marks_free_and_walls(open_room):
    occ = integrate_observation(OccupancyMap.empty(open_room.shape), _obs(open_room, (2, 3)))
    assert occ.free[3, 2] and occ.seen[3, 2]
    assert occ.occupied[1, 0] and occ.seen[1, 0] and not occ.free[1, 0]


def test_integrate_leaves_unseen_cells_alone():
    g = grid_from_rows(["#######", "#..#..#", "#######"])
    occ = integrate_observation(OccupancyMap.empty(g.shape), _obs(g, (1, 1)))
    assert not occ.seen[1, 4] and not occ.free[1, 4] and not occ.occupied[1, 4]


def test_integrate_is_idempotent_and_pure(open_room):
    o = _obs(open_room, (3, 3), 0.0, math.radians(120))
    base = OccupancyMap.empty(open_room.shape)
    once = integrate_observation(base, o)
    assert integrate_observation(once, o) == once
    assert not base.seen.any()


def test_integrate_shape_mismatch(open_room):
    with pytest.raises(ShapeMismatch):
        integrate_observation(OccupancyMap.empty((3, 3)), _obs(open_room, (3, 3)))


def test_integrate_records_labels():
    g = grid_from_rows(["#####", "#...#", "#####"], labels={(3, 1): "sofa"})
    occ = integrate_observation(OccupancyMap.empty(g.shape), _obs(g, (1, 1)))
    assert occ.labels == {(3, 1): "sofa"}


def _known(grid):
    occ = OccupancyMap.empty(grid.shape)
    occ.seen[:] = True
    occ.free[:] = ~grid.walls
    occ.occupied[:] = grid.walls
    return occ


def test_island_sealed_pocket():
    g = grid_from_rows(["#####", "#.#.#", "#####"])
    assert reachable_island(_known(g), (1, 1)) == {(1, 1)}


def test_island_two_rooms():
    g = grid_from_rows(["#######", "#..#..#", "#..#..#", "#######"])
    assert reachable_island(_known(g), (1, 1)) == {(1, 1), (2, 1), (1, 2), (2, 2)}


def test_island_open_map(open_room):
    isl = reachable_island(_known(open_room), (3, 3))
    assert isl == {(x, y) for y in range(1, 6) for x in range(1, 6)}


def test_island_agent_not_free(open_room):
    with pytest.raises(AgentNotFree):
        reachable_island(_known(open_room), (0, 0))
    with pytest.raises(AgentNotFree):
        reachable_island(OccupancyMap.empty(open_room.shape), (3, 3))


def test_frontier_score_examples():
    occ = OccupancyMap.empty((5, 5))
    assert frontier_score(occ, (2, 2)) == 9
    assert frontier_score(occ, (0, 0)) == 4
    occ.seen[:] = True
    assert frontier_score(occ, (2, 2)) == 0


def test_frontiers_fully_explored_is_empty(open_room):
    assert extract_frontiers(_known(open_room), (3, 3)) == ()


def test_frontiers_single_seen_cell():
    occ = OccupancyMap.empty((5, 5))
    occ.seen[2, 2] = occ.free[2, 2] = True
    occ.seen[2, 1] = occ.free[2, 1] = True
    # both cells see 7 unexplored neighbours
    got = extract_frontiers(occ, (2, 2))
    assert [(f.cell, f.score) for f in got] == [((1, 2), 7), ((2, 2), 7)]


def test_frontiers_reject_bad_thresholds(open_room):
    with pytest.raises(ValueError):
        extract_frontiers(_known(open_room), (3, 3), 5, 4)
    with pytest.raises(ValueError):
        extract_frontiers(_known(open_room), (3, 3), 0, 4)


def _brute_force_frontiers(occ, agent, tmin, tmax):
    h, w = occ.shape
    # island by repeated expansion, no queue
    island = {agent}
    grew = True
    while grew:
        grew = False
        for y in range(h):
            for x in range(w):
                if (x, y) in island or not occ.free[y, x]:
                    continue
                if any((x + dx, y + dy) in island for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))):
                    island.add((x, y))
                    grew = True
    out = []
    for y in range(h):
        for x in range(w):
            if (x, y) not in island:
                continue
            s = 0
            for yy in range(y - 1, y + 2):
                for xx in range(x - 1, x + 2):
                    if 0 <= xx < w and 0 <= yy < h and not occ.seen[yy, xx]:
                        s += 1
            if tmin <= s <= tmax:
                out.append(((x, y), s))
    return out


def _random_partial_map(seed, size=20):
    rng = np.random.default_rng(seed)
    g = GridMap(random_walls(rng, size, size, 0.25))
    ys, xs = np.nonzero(~g.walls)
    i = int(rng.integers(len(xs)))
    agent = (int(xs[i]), int(ys[i]))
    heading = float(rng.uniform(-math.pi, math.pi))
    occ = integrate_all(OccupancyMap.empty(g.shape), [cast_rays(g, AgentPose(agent, heading), math.radians(120), 8)])
    return occ, agent


def test_frontiers_match_brute_force_seed_11():
    occ, agent = _random_partial_map(11)
    got = [(f.cell, f.score) for f in extract_frontiers(occ, agent, 2, 8)]
    assert got == _brute_force_frontiers(occ, agent, 2, 8)
    assert got  # the example is not vacuous


@pytest.mark.parametrize("seed", range(100))
def test_frontiers_match_brute_force(seed):
    occ, agent = _random_partial_map(seed)
    for tmin, tmax in ((2, 8), (EDGE_TAU_MIN, EDGE_TAU_MAX), (1, 9)):
        got = [(f.cell, f.score) for f in extract_frontiers(occ, agent, tmin, tmax)]
        assert got == _brute_force_frontiers(occ, agent, tmin, tmax)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15), st.floats(-3, 3)), min_size=1, max_size=6))
def test_sensing_is_monotone_and_layers_consistent(seed, poses):
    rng = np.random.default_rng(seed)
    g = GridMap(random_walls(rng, 16, 16, 0.25))
    occ = OccupancyMap.empty(g.shape)
    for x, y, h in poses:
        if not g.is_free((x, y)):
            continue
        nxt = integrate_observation(occ, cast_rays(g, AgentPose((x, y), h)))
        assert (nxt.seen >= occ.seen).all()
        assert not (nxt.free & nxt.occupied).any()
        assert ((nxt.free | nxt.occupied) <= nxt.seen).all()
        occ = nxt
        island = reachable_island(occ, (x, y))
        for f in extract_frontiers(occ, (x, y)):
            assert f.cell in island and not occ.occupied[f.cell[1], f.cell[0]]
            assert 2 <= f.score <= 8


def test_dump_layers_format(open_room):
    occ = integrate_all(OccupancyMap.empty(open_room.shape), look_around(open_room, (3, 3)))
    text = dump_layers(occ)
    assert text.count("P2\n") == 3
    assert "# seen" in text and "# free" in text and "# occupied" in text
    assert "7 7\n255" in text
