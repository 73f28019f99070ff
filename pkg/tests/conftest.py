import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pshaping.constellation import make_pam, make_qam
from pshaping.gnmodel import chi_2000km_reference

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def pam4():
    return make_pam(4)


@pytest.fixture(scope="session")
def pam8():
    return make_pam(8)


@pytest.fixture(scope="session")
def pam16():
    return make_pam(16)


@pytest.fixture(scope="session")
def qam16():
    return make_qam(16)


@pytest.fixture(scope="session")
def reference():
    return chi_2000km_reference()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request, capsys):
    """Record and print one PASS/FAIL line; returns the verdict for asserting."""

    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, []).append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
