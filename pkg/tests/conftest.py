import shutil
import time
from collections import OrderedDict

import pytest

from combsynth.oracle import CommandHandle
from combsynth.synthesizer import SynthConfig, synthesize

HAVE_COREUTILS = all(shutil.which(p) for p in ("sort", "uniq", "tr", "wc", "grep", "cut", "sed", "tail", "split"))

needs_coreutils = pytest.mark.skipif(not HAVE_COREUTILS, reason="coreutils not on PATH")

_ACCEPTANCE: "OrderedDict[str, list[tuple[str, str]]]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion the test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = dict(report.user_properties).get("criterion")
    if label:
        _ACCEPTANCE.setdefault(label, []).append((report.nodeid, report.outcome))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcomes in _ACCEPTANCE.items():
        states = {o for _, o in outcomes}
        verdict = "FAIL" if "failed" in states else ("SKIP" if states == {"skipped"} else "PASS")
        terminalreporter.write_line(f"{verdict}  {label}  ({len(outcomes)} check(s))")


class SynthSession:
    """Memoizes synthesis results for the whole test session."""

    def __init__(self):
        self._results = {}
        self.seconds = {}

    def get(self, command: str, builtin_only: bool = False, seed: int = 0):
        key = (command, builtin_only, seed)
        if key not in self._results:
            f = CommandHandle.from_text(command, builtin_only=builtin_only)
            start = time.perf_counter()
            self._results[key] = (f, synthesize(f, config=SynthConfig(seed=seed)))
            self.seconds[key] = time.perf_counter() - start
        return self._results[key]


@pytest.fixture(scope="session")
def synth_session():
    return SynthSession()
