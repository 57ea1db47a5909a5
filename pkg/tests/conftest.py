import pytest
from hypothesis import HealthCheck, settings

from fhestats.fv import keygen
from fhestats.params import make_params
from fhestats.rng import RngHandle

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_params():
    """Toy ring (d=256) with room for three multiplications; fast, not secure."""
    return make_params(256, 65536, 128)


@pytest.fixture(scope="session")
def keys(small_params):
    return keygen(small_params, RngHandle(12345).substream("test-keys"))


@pytest.fixture(scope="session")
def rng():
    return RngHandle(2024)


ACCEPTANCE_RESULTS = {}


@pytest.fixture()
def acceptance(request):
    """Record one acceptance verdict; printed immediately and again in the session summary."""

    def record(number, name, ok, detail=""):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_RESULTS[number] = line
        request.node.user_properties.append(("acceptance", line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
