import pytest

# filled by tests/test_acceptance.py: criterion number -> (passed, summary)
ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion under ``number``."""
    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (bool(passed), f"{title}: {detail}" if detail else title)
        assert passed, f"criterion {number} failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d}  {text}")


def pytest_runtest_logreport(report):
    # a criterion test that crashed before recording still gets a FAIL line
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when != "call" or not report.failed or not name.startswith("test_criterion_"):
        return
    number = int(name.split("_")[2])
    if number not in ACCEPTANCE or ACCEPTANCE[number][0]:
        crash = getattr(report.longrepr, "reprcrash", None)
        ACCEPTANCE[number] = (False, f"{name}: {crash.message if crash else 'error'}")
