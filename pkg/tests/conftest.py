import pytest

from magnon_gkp.params import derive_model, reference_device

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def em():
    """Reference device without dissipation."""
    return derive_model(reference_device(noise=False))


@pytest.fixture(scope="session")
def em_noisy():
    return derive_model(reference_device(noise=True))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
