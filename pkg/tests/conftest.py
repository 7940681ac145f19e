import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def note(request):
    """Attach a one-line detail to the acceptance summary."""
    def _note(msg):
        _CRITERIA.setdefault(request.node.nodeid, {})["detail"] = msg
    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when != "call":
        return
    entry = _CRITERIA.setdefault(item.nodeid, {})
    entry.update(n=m.args[0], title=m.args[1], passed=rep.passed, seconds=rep.duration)


def pytest_terminal_summary(terminalreporter):
    rows = sorted((e for e in _CRITERIA.values() if "n" in e), key=lambda e: e["n"])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for e in rows:
        verdict = "PASS" if e["passed"] else "FAIL"
        line = f"criterion {e['n']:>2}  {verdict}  {e['title']}  ({e['seconds']:.1f} s)"
        if e.get("detail"):
            line += f"  [{e['detail']}]"
        terminalreporter.write_line(line)
