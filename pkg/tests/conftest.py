import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", help="rewrite tests/golden from the current build")


@pytest.fixture
def golden_dir(request, tmp_path):
    golden = TESTS / "golden"
    if request.config.getoption("--update-golden"):
        from bilatsim import io
        from test_config_io import golden_result

        io.emit_results(golden_result(), golden)
    return golden


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.RESULTS):
        terminalreporter.write_line(line)
