import pytest

# criterion number -> [title, passed, measured detail]
ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = ACCEPTANCE.setdefault(number, [title, None, ""])
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        entry[1] = rep.passed


@pytest.fixture
def measured(request):
    """Attach a short measured-value note to the test's acceptance line."""
    number = request.node.get_closest_marker("criterion").args[0]

    def note(text: str):
        ACCEPTANCE.setdefault(number, ["", None, ""])[2] = text
    return note


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        status = "PASS" if ok else ("FAIL" if ok is False else "NOT RUN")
        line = f"criterion {number:2d}  {status:7s} {title}"
        tr.write_line(line + (f"  [{detail}]" if detail else ""))
