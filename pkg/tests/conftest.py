import pytest

from randstruct.kernels import scenario_load

# one pass/fail line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def coin_flip():
    return scenario_load({"scenario": "coin_flip_graph", "t": "1/2"})


@pytest.fixture
def lebesgue():
    return scenario_load({"scenario": "lebesgue_dlo"})


@pytest.fixture
def equiv4():
    return scenario_load({
        "scenario": "finite_point_mass",
        "structure": "four_point_equivalence",
        "weights": {"a": "1/4", "b": "1/4", "c": "1/2"},
    })


@pytest.fixture
def two_cuts():
    return scenario_load({"scenario": "two_cuts"})


@pytest.fixture
def dlo_delta():
    return scenario_load({"scenario": "dlo_delta"})


@pytest.fixture
def marked_chain():
    return scenario_load({"scenario": "marked_chain"})


@pytest.fixture
def henson():
    return scenario_load({"scenario": "henson_delta"})
