from __future__ import annotations

import numpy as np
import pytest

from qsdkit.core import OperatorSet

G = np.array([1.0, 0.0], dtype=complex)
E = np.array([0.0, 1.0], dtype=complex)
PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def amplitude_damping(gamma=1.0, c=1.0) -> OperatorSet:
    return OperatorSet(np.zeros((2, 2)), (np.sqrt(gamma) * LOWER,), c)


def dephasing(gamma=1.0, c=1.0) -> OperatorSet:
    return OperatorSet(np.zeros((2, 2)), (np.sqrt(gamma) * SIGMA_Z,), c)


@pytest.fixture
def ad_ops():
    return amplitude_damping()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
