import numpy as np
import pytest

from mdpsense.random_models import random_direction, random_mdm

ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_corpus():
    """Random models with integer rewards (frequent ties) and real rewards."""
    models = []
    for seed in range(12):
        gen = np.random.default_rng(seed)
        N = int(gen.integers(1, 4))
        S = int(gen.integers(1, 4))
        mdm = random_mdm(gen, N, S, 3, integer_rewards=bool(seed % 2), sparsity=0.3 * (seed % 3 == 0))
        models.append((mdm, random_direction(gen, mdm)))
    return models
