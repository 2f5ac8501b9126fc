import time

import pytest


@pytest.fixture(scope="session")
def default_tuning():
    """Default-bank calibration, computed once per session; yields
    ``(table, seconds_taken)``."""
    from smalltarget.lptc import LptcBankConfig, calibrate_tuning

    # the monotonicity check is left to the acceptance test so that a
    # violation is reported there rather than as a fixture error
    t0 = time.perf_counter()
    table = calibrate_tuning(LptcBankConfig(), check=False)
    return table, time.perf_counter() - t0


@pytest.fixture(scope="session")
def tuning_file(default_tuning, tmp_path_factory):
    path = tmp_path_factory.mktemp("tuning") / "tuning.csv"
    default_tuning[0].to_csv(path)
    return path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
