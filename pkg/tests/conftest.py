import math

import pytest
from hypothesis import settings

from skewfork import base_flow as bf
from skewfork import dynamics as dy

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")

TWO_PI = 2.0 * math.pi

# acceptance lines collected during the run and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def autonomous(a3=1.0, a2=0.0, a1=0.0) -> bf.Driver:
    return bf.Driver(bf.Autonomous(), {"a3": bf.Constant(a3), "a2": bf.Constant(a2),
                                       "a1": bf.Constant(a1)})


def periodic(a3=1.0, a2=0.0, a1=0.0, **extra) -> bf.Driver:
    def wrap(v):
        return bf.Constant(v) if isinstance(v, (int, float)) else v

    coeffs = {"a3": wrap(a3), "a2": wrap(a2), "a1": wrap(a1)}
    coeffs.update({k: wrap(v) for k, v in extra.items()})
    return bf.Driver(bf.Periodic(TWO_PI), coeffs)


def cos_t(mean=0.0, amp=1.0) -> bf.TrigSeries:
    return bf.TrigSeries(mean, [[amp]], [])


def sin_t(mean=0.0, amp=1.0) -> bf.TrigSeries:
    return bf.TrigSeries(mean, [], [[amp]])


CUBIC = dy.Family(dy.Cubic())


@pytest.fixture
def cubic():
    return CUBIC


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
