import numpy as np
import pytest

from slabwave.grid import Config, make_grid

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        print(line)
        request.config.stash[_VERDICTS].append((number, line))
        return passed

    return record


@pytest.fixture
def cfg():
    return Config(modes=(8, 8), nv=9, dt=0.0625, t_final=0.25)


@pytest.fixture
def grid(cfg):
    return make_grid(cfg)


@pytest.fixture
def default_grid():
    return make_grid(Config())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
