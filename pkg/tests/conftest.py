import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mprbench.dataset import BundleConfig, build_bundle  # noqa: E402
from mprbench.defaults import default_meta  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def meta():
    return default_meta()


@pytest.fixture(scope="session")
def small_bundle(meta):
    return build_bundle(meta, BundleConfig(users=2, hop_min=2, hop_max=6, per_hop=2, seed=3))


@pytest.fixture(scope="session")
def user(small_bundle):
    return small_bundle.sub_datasets[0]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
