import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deskexplore.sim import GridMap

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def grid_from_rows(rows, labels=None, start=None):
    walls = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    return GridMap(walls=walls, labels=labels or {}, start=start)


def random_walls(rng, h, w, p=0.3):
    walls = rng.random((h, w)) < p
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    return walls


@pytest.fixture
def open_room():
    return grid_from_rows(["#######"] + ["#.....#"] * 5 + ["#######"])


LABEL_WORDS = ["sofa", "lamp", "fridge", "Kühlschrank", "冰箱", "étagère", "plant", "desk", "chair", "ванна"]


def random_abstraction(rng):
    from deskexplore.experience import Abstraction

    words = lambda n: " ".join(rng.choice(LABEL_WORDS, size=n))
    return Abstraction(tuple(words(int(rng.integers(2, 8))) for _ in range(5)), words(12))


def random_library(seed, n=20, snaps=(1, 4)):
    """Seeded library with random questions and stored snapshots."""
    from deskexplore.experience import ExperienceLibrary, StoredSnapshot

    rng = np.random.default_rng(seed)
    lib = ExperienceLibrary()
    for i in range(n):
        q = "Where is the " + " ".join(rng.choice(LABEL_WORDS, size=int(rng.integers(1, 3)))) + "?"
        ss = []
        for k in range(int(rng.integers(snaps[0], snaps[1] + 1))):
            labels = tuple(sorted(rng.choice(LABEL_WORDS, size=int(rng.integers(0, 3)))))
            theta = float(rng.uniform(-np.pi, np.pi))
            ss.append(StoredSnapshot(k, theta, labels, "view " + " ".join(labels)))
        lib.add(q, rng.choice(["PASS", "FAIL"]), random_abstraction(rng), ss, trajectory_id=f"t{seed}-{i:03d}")
    return lib


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
