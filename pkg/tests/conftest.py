import numpy as np
import pytest

from edgewise.scoring import DataMatrix


def random_data(rng, n, m=60, max_arity=3):
    arity = rng.integers(2, max_arity + 1, size=n)
    cells = np.stack([rng.integers(0, r, size=m) for r in arity], axis=1)
    for j, r in enumerate(arity):
        cells[: r, j] = np.arange(r)  # every category observed
    return DataMatrix(cells, tuple(int(r) for r in arity))


def chain_data(m=200, seed=0):
    """Binary chain 1 -> 2 -> 3 with strong dependence."""
    rng = np.random.default_rng(seed)
    x1 = rng.integers(0, 2, size=m)
    x2 = np.where(rng.random(m) < 0.9, x1, 1 - x1)
    x3 = np.where(rng.random(m) < 0.9, x2, 1 - x2)
    return DataMatrix(np.stack([x1, x2, x3], axis=1), (2, 2, 2), ("A", "B", "C"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def chain():
    return chain_data()


ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
