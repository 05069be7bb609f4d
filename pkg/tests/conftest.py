import pytest

from gasgru import simgen

# lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_cfg():
    return simgen.GenConfig(n_pure_h2=10, n_pure_co=10, n_mix=20, seed=3)


@pytest.fixture(scope="session")
def small_ds(small_cfg):
    return simgen.generate_dataset(small_cfg)


@pytest.fixture(scope="session")
def default_ds():
    return simgen.generate_dataset(simgen.GenConfig())
