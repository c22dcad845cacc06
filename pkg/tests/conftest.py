from pathlib import Path

import pytest

import relgraph as rg

FIXTURES = Path(__file__).parent / "fixtures"

FIXTURE_NAMES = ("open_domain", "issue_stance", "arg_mining")


@pytest.fixture(scope="session")
def fixture_programs():
    return {
        name: (FIXTURES / name / "program.dr").read_text() for name in FIXTURE_NAMES
    }


def load_fixture(name: str):
    program = rg.compile_program((FIXTURES / name / "program.dr").read_text())
    data = rg.load_data(FIXTURES / name / "data", program)
    return program, data


@pytest.fixture(scope="session")
def grounded_fixtures():
    out = {}
    for name in FIXTURE_NAMES:
        program, data = load_fixture(name)
        out[name] = (program, data, rg.ground(program, data))
    return out
