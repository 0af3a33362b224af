import numpy as np
import pytest
from hypothesis import settings

from rfde.core import Grid, SampledPath, geometric_lift, ito_lift

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_path(rng, n: int, d: int = 1, scale: float = 1.0) -> SampledPath:
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, size=n - 1))])
    return SampledPath(Grid(times), rng.normal(0, scale, size=(n, d)))


def random_rough_path(rng, n: int, d: int = 2, kind: str = "random"):
    path = random_path(rng, n, d)
    if kind == "ito":
        return ito_lift(path)
    if kind == "geometric":
        return geometric_lift(path)
    from rfde.core import RoughPath

    return RoughPath(path, rng.normal(0, 1, size=(n - 1, d, d)))
