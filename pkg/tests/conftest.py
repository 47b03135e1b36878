import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from l2g2g.graph import Graph, SbmConfig, generate_sbm

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_graph(n, p, seed, n_features=3):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    return Graph.from_edges(n, edges, rng.normal(size=(n, n_features)))


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture(scope="session")
def toy_sbm():
    return generate_sbm(SbmConfig(4, 30, 0.5, 0.01, seed=7))


# acceptance criteria report: tests record a verdict, the summary prints one line each
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(key, ok, detail=""):
        ACCEPTANCE[key] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
