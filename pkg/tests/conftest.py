import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from iongate.chain import TrapConfig, build_chain
from iongate.pulse import optimize_amplitudes

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

TWO_PI = 2 * np.pi
DELTA_MIN_GRID = tuple(TWO_PI * 1e4 * i for i in range(1, 11))


@functools.lru_cache(maxsize=None)
def chain_n(n: int, omega_z: float = TWO_PI * 0.4e6):
    return build_chain(TrapConfig(ion_count=n, omega_z=omega_z))


@functools.lru_cache(maxsize=None)
def pulse_for(n: int, delta_min: float = TWO_PI * 0.03e6, tau: float = 300e-6,
              robust: bool = True, n_segments: int | None = None):
    return optimize_amplitudes(chain_n(n), tau=tau, delta_min=delta_min,
                               robust=robust, n_segments=n_segments)


@pytest.fixture(scope="session")
def chain2():
    return chain_n(2)


@pytest.fixture(scope="session")
def pulse2():
    return pulse_for(2)


# one summary line per acceptance criterion, printed after the run
_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(criterion: int, passed: bool, detail: str):
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
