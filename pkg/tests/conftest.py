from collections import defaultdict

import numpy as np
import pytest

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        entry = _criteria[number]
        entry["title"] = title
        entry["outcomes"].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        states = [o for _, o in entry["outcomes"]]
        if "failed" in states:
            verdict = "FAIL"
        elif "passed" in states:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        skipped = states.count("skipped")
        note = f" ({skipped} hardware-gated part skipped)" if skipped and verdict != "SKIP" else ""
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {entry['title']}{note}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def threads(monkeypatch):
    """Set the worker cap for the duration of a test."""

    def set_threads(n):
        monkeypatch.setenv("AGU_THREADS", str(n))

    return set_threads
