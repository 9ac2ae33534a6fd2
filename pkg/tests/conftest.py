import pytest

from ffc import corpus, parser

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures_dir():
    return corpus.fixtures_dir()


def parse_one(src, name=None):
    """Parse a source string and return its (first) kernel."""
    unit = parser.parse(src, filename="<test>")
    if name is None:
        return unit.kernels[0]
    return unit.kernel(name)


def load(fixtures_dir, name):
    return corpus.load_fixture(str(fixtures_dir / f"{name}.cl"))
