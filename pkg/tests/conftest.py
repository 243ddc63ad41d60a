import numpy as np
import pytest
import torch

from ifenn.elasticity import MaterialParams

# 1 CPU in the reference environment; also keeps float reductions in a fixed order
torch.set_num_threads(1)


@pytest.fixture
def steel():
    return MaterialParams(lam=121154.0, mu=80770.0, gc=2.7, lc=0.03)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
