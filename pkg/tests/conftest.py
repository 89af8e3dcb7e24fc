import numpy as np
import pytest

from gestureprint.cloud import GestureCloud


def make_cloud(xyz, doppler=0.0, intensity=1.0, **kw):
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = xyz.shape[0]
    pts = np.column_stack([xyz, np.full(n, doppler), np.full(n, intensity)])
    return GestureCloud(pts, **kw)


def random_cloud(rng, n, scale=1.0, offset=0.0):
    xyz = offset + scale * rng.standard_normal((n, 3))
    return GestureCloud(np.column_stack([xyz, rng.standard_normal(n), rng.random(n)]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
