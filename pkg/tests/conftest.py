import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def peak_spectra(n, m=48, classes=3, seed=0, noise=0.5, height=0.4):
    """Noisy spectra with one class-specific Gaussian peak on a shared background."""
    r = np.random.default_rng(seed)
    t = np.arange(m)
    y = np.arange(n) % classes
    centers = np.linspace(m / (classes + 1), m * classes / (classes + 1), classes)
    X = noise * r.standard_normal((n, m)) + np.exp(-(t - m / 2) ** 2 / (m * 4.0))
    X += height * np.exp(-(t[None, :] - centers[y][:, None]) ** 2 / 8.0)
    return X, y


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
