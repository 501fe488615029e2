from __future__ import annotations

import numpy as np
import pytest

from reinforced_walks.model import Deterministic, ModelParams
from reinforced_walks.schedules import Explicit

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def one_step_params(z, r, rho=1.0, alpha=0.0, q=0.5) -> ModelParams:
    """Parameters whose ensemble at step 1 samples one transition from the fixed state ``z``."""
    z = tuple(float(v) for v in z)
    return ModelParams(len(z), rho, alpha, q, Explicit([r]), Deterministic(z))


def within_se(estimate: float, target: float, se: float, k: float = 4.0) -> bool:
    return abs(estimate - target) <= k * se


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
