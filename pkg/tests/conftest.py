import numpy as np
import pytest

from aeann import build_forest, derive_params, plant_instance


@pytest.fixture(scope="session")
def small_instance():
    return plant_instance(300, 16, 4.0, 0.5, seed=11, n_queries=40)


@pytest.fixture(scope="session")
def small_forest(small_instance):
    params = derive_params(4.0, 0.5, len(small_instance.dataset), seed=5, n_trees=12)
    return build_forest(small_instance.dataset, params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    return request.config.stash.setdefault(_ACCEPTANCE, []).append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
