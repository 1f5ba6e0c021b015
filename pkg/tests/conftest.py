import numpy as np
import pytest

from lcqkd.wavepacket import GridSpec, make_envelope

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def compact(width=1.0, per_width=16, center=0.0, pad=2):
    step = width / per_width
    grid = GridSpec.covering(center - width / 2 - pad * step, center + width / 2 + pad * step, step)
    return make_envelope("raised_cosine_compact", center, width, grid)


def gaussian(sigma=1.0, per_sigma=16, half_span=8.0, center=0.0, carrier=0.0):
    step = sigma / per_sigma
    grid = GridSpec.covering(center - half_span * sigma, center + half_span * sigma, step)
    return make_envelope("gaussian", center, sigma, grid, carrier=carrier)
