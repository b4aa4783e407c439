import numpy as np
import pytest

from soc.core import EngineParams, SkeletonSet
from soc.engine import SOCEngine

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_set(cid, points, keys=None, weights=None, ids=None):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = len(points)
    return SkeletonSet(
        cid,
        points,
        np.linspace(0.1, 0.2, h) if keys is None else keys,
        np.ones(h, dtype=int) if weights is None else weights,
        np.arange(100 * cid, 100 * cid + h) if ids is None else ids,
    )


def engine_with(sets, **params):
    """An engine whose partition holds ``sets`` (and complete graphs if splitting)."""
    from soc.topology import TopologyGraph

    eng = SOCEngine(EngineParams(**params), dim=sets[0].dim)
    for S in sets:
        eng.partition.add(S)
        if eng.graphs is not None:
            eng.graphs[S.cluster_id] = TopologyGraph.complete(S.cluster_id, S.ids)
    return eng


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
