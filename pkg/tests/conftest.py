import time

import pytest

from riskseq.benchmark import run_benchmark

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def benchmark_run():
    start = time.perf_counter()
    data, rows = run_benchmark()
    return data, {r.kind: r for r in rows}, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
