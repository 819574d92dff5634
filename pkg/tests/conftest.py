import contextlib
import time

import pytest

_results = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_results] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion as PASS/FAIL with timing."""
    results = request.config.stash[_results]

    @contextlib.contextmanager
    def run(number: int, title: str):
        info = {"detail": ""}
        start = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            status = "PASS" if ok else "FAIL"
            line = f"[{status}] criterion {number}: {title} ({elapsed:.1f} s) {info['detail']}".rstrip()
            results.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_results, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
