import numpy as np
import pytest

from msgames.bench import warm_up
from msgames.model import build_game


@pytest.fixture(scope="session", autouse=True)
def _compiled():
    warm_up()


def two_groups_game(w=0.3, v=0.7, b=(1.0, 1.0, 1.0, 1.0), c=1.0):
    """2 groups of 2; symmetric within weight ``w``; group edge ``v`` both ways."""
    inner = np.array([[0.0, w], [w, 0.0]])
    return build_game(
        partitions=[[[0, 1], [2, 3]]],
        within=[[inner, inner]],
        top=np.array([[0.0, v], [v, 0.0]]),
        b=np.asarray(b, dtype=float),
        c=c,
    )


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
