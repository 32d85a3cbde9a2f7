import collections

import pytest

_RESULTS = collections.OrderedDict()


class AcceptanceRecorder:
    """Collects per-check outcomes under a criterion number."""

    def __init__(self, criterion):
        self.criterion = criterion
        self.checks = _RESULTS.setdefault(criterion, [])

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is None:
        raise RuntimeError("acceptance tests need @pytest.mark.criterion(n, title)")
    number, title = marker.args
    rec = AcceptanceRecorder((number, title))
    before = len(rec.checks)
    yield rec
    rep = getattr(request.node, "rep_call", None)
    if rep is not None and rep.failed and len(rec.checks) == before:
        rec.check(request.node.name, False, "test raised before recording")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (number, title), checks in sorted(_RESULTS.items()):
        ok = all(c[1] for c in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {number}. {title}")
        for name, passed, detail in checks:
            if not passed or detail:
                flag = "ok " if passed else "BAD"
                tr.write_line(f"        [{flag}] {name}: {detail}")
